"""Permissioned ledger: simulation, endorsement, solo ordering with
batch cutting, MVCC validation, block commitment, and replay.

Transaction flow mirrors the endorse/order/validate pipeline: a
proposal is simulated against a state snapshot producing a read-write
set; peers endorse the canonical serialization; the solo orderer cuts
batches by message count, timeout, or size; commitment re-checks
endorsements and read versions (stale reads invalidate a transaction,
which is the double-spend defense) and applies writes in order.

Canonical serialization is length-prefixed fields in declaration order
(see encoding module) so tx ids and block hashes are stable across
implementations. Blocks are immutable once committed; world state and
per-key history are reconstructible purely from blocks via replay().
"""

from __future__ import annotations

import struct
import threading
import time as _time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable, Mapping, Optional

from . import merkle
from .crypto import Digest, Signature, hash_data, sign as _sign, verify as _verify
from .encoding import enc_bytes, enc_str, enc_u32, enc_u64
from .errors import BrokenChain, ContractError, IndexOutOfRange, TxTooLarge

Clock = Callable[[], float]
Version = tuple[int, int]  # (block number, tx index)

ZERO_DIGEST = Digest(b"\x00" * 32)


def system_clock() -> float:
    return _time.time()


class ManualClock:
    """Logical clock for deterministic batch-timeout tests."""

    def __init__(self, start: float = 0.0):
        self.t = start

    def __call__(self) -> float:
        return self.t

    def advance(self, dt: float) -> None:
        self.t += dt


def iso_utc(epoch_seconds: float) -> str:
    return datetime.fromtimestamp(epoch_seconds, tz=timezone.utc).isoformat()


@dataclass(frozen=True)
class OrdererConfig:
    """Solo-orderer batching parameters (defaults: 2s timeout, 10
    messages, 99 MB absolute cap, 512 KB preferred cut threshold)."""

    batch_timeout: float = 2.0
    max_message_count: int = 10
    absolute_max_bytes: int = 99 * 1024 * 1024
    preferred_max_bytes: int = 512 * 1024
    mode: str = "solo"

    def __post_init__(self):
        if self.max_message_count < 1:
            raise ValueError("max_message_count must be >= 1")
        if self.preferred_max_bytes > self.absolute_max_bytes:
            raise ValueError("preferred_max_bytes must not exceed absolute_max_bytes")
        if self.mode != "solo":
            raise ValueError(f"unsupported orderer mode {self.mode!r}")

    def to_doc(self) -> dict:
        return {
            "orderer_type": self.mode,
            "batch_timeout": self.batch_timeout,
            "max_message_count": self.max_message_count,
            "absolute_max_bytes": self.absolute_max_bytes,
            "preferred_max_bytes": self.preferred_max_bytes,
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "OrdererConfig":
        return cls(
            batch_timeout=float(doc.get("batch_timeout", 2.0)),
            max_message_count=int(doc.get("max_message_count", 10)),
            absolute_max_bytes=int(doc.get("absolute_max_bytes", 99 * 1024 * 1024)),
            preferred_max_bytes=int(doc.get("preferred_max_bytes", 512 * 1024)),
            mode=doc.get("orderer_type", "solo"),
        )


# -- read-write sets ---------------------------------------------------------

@dataclass
class ReadWriteSet:
    """Reads record the version observed at simulation (None = key was
    absent); writes buffer new values (empty value = delete)."""

    reads: dict[str, Optional[Version]] = field(default_factory=dict)
    writes: dict[str, bytes] = field(default_factory=dict)

    def serialize(self) -> bytes:
        out = [enc_u32(len(self.reads))]
        for key in sorted(self.reads):
            ver = self.reads[key]
            out.append(enc_str(key))
            if ver is None:
                out.append(b"\x00")
            else:
                out.append(b"\x01" + enc_u64(ver[0]) + enc_u32(ver[1]))
        out.append(enc_u32(len(self.writes)))
        for key in sorted(self.writes):
            out.append(enc_str(key) + enc_bytes(self.writes[key]))
        return b"".join(out)

    @classmethod
    def parse(cls, buf: bytes, off: int) -> tuple["ReadWriteSet", int]:
        reads: dict[str, Optional[Version]] = {}
        (n,) = struct.unpack_from(">I", buf, off)
        off += 4
        for _ in range(n):
            key, off = _read_str(buf, off)
            flag = buf[off]
            off += 1
            if flag == 0:
                reads[key] = None
            else:
                block, txi = struct.unpack_from(">QI", buf, off)
                off += 12
                reads[key] = (block, txi)
        writes: dict[str, bytes] = {}
        (n,) = struct.unpack_from(">I", buf, off)
        off += 4
        for _ in range(n):
            key, off = _read_str(buf, off)
            val, off = _read_bytes(buf, off)
            writes[key] = val
        return cls(reads=reads, writes=writes), off


def _read_bytes(buf: bytes, off: int) -> tuple[bytes, int]:
    (n,) = struct.unpack_from(">I", buf, off)
    off += 4
    return buf[off : off + n], off + n


def _read_str(buf: bytes, off: int) -> tuple[str, int]:
    raw, off = _read_bytes(buf, off)
    return raw.decode("utf-8"), off


# -- transactions ------------------------------------------------------------

@dataclass(frozen=True)
class Endorsement:
    peer_id: str  # endorsing peer's certificate serial (hex)
    signature: Signature


@dataclass
class Transaction:
    creator: str  # submitting identity's certificate serial (hex)
    op_name: str
    args: list[bytes]
    rwset: ReadWriteSet
    event: str
    timestamp: str  # ISO-8601 UTC
    endorsements: list[Endorsement] = field(default_factory=list)

    def canonical_body(self) -> bytes:
        out = [
            enc_str(self.creator),
            enc_str(self.op_name),
            enc_u32(len(self.args)),
        ]
        out.extend(enc_bytes(a) for a in self.args)
        out.append(self.rwset.serialize())
        out.append(enc_str(self.event))
        out.append(enc_str(self.timestamp))
        return b"".join(out)

    @property
    def tx_id(self) -> Digest:
        return hash_data(self.canonical_body())

    def serialize(self) -> bytes:
        out = [self.canonical_body(), enc_u32(len(self.endorsements))]
        for e in self.endorsements:
            out.append(enc_str(e.peer_id) + enc_bytes(e.signature.data))
        return b"".join(out)

    @classmethod
    def parse(cls, buf: bytes, off: int = 0) -> tuple["Transaction", int]:
        creator, off = _read_str(buf, off)
        op_name, off = _read_str(buf, off)
        (n_args,) = struct.unpack_from(">I", buf, off)
        off += 4
        args = []
        for _ in range(n_args):
            a, off = _read_bytes(buf, off)
            args.append(a)
        rwset, off = ReadWriteSet.parse(buf, off)
        event, off = _read_str(buf, off)
        timestamp, off = _read_str(buf, off)
        (n_end,) = struct.unpack_from(">I", buf, off)
        off += 4
        endorsements = []
        for _ in range(n_end):
            peer_id, off = _read_str(buf, off)
            sig, off = _read_bytes(buf, off)
            endorsements.append(Endorsement(peer_id=peer_id, signature=Signature(sig)))
        return cls(creator, op_name, args, rwset, event, timestamp, endorsements), off


def endorse(peer_secret: bytes, peer_id: str, tx: Transaction) -> Endorsement:
    """Peer signature over the canonical transaction body."""
    return Endorsement(peer_id=peer_id, signature=_sign(peer_secret, tx.canonical_body()))


# policy(tx, registered peers) -> bool; kept as one replaceable predicate
EndorsementPolicy = Callable[[Transaction, Mapping[str, bytes]], bool]


def any_registered_peer_policy(tx: Transaction, peers: Mapping[str, bytes]) -> bool:
    """One valid endorsement from any registered peer satisfies v1."""
    body = tx.canonical_body()
    return any(
        e.peer_id in peers and _verify(peers[e.peer_id], body, e.signature)
        for e in tx.endorsements
    )


# -- blocks ------------------------------------------------------------------

@dataclass
class Block:
    number: int
    prev_hash: Digest
    data_hash: Digest
    timestamp: str
    txs: list[Transaction]
    validity: list[bool] = field(default_factory=list)
    config_doc: bytes = b""  # canonical genesis document, block 0 only

    def header_bytes(self) -> bytes:
        return (
            enc_u64(self.number)
            + self.prev_hash.data
            + self.data_hash.data
            + enc_str(self.timestamp)
        )

    def header_hash(self) -> Digest:
        return hash_data(self.header_bytes())

    def serialize(self) -> bytes:
        out = [self.header_bytes(), enc_bytes(self.config_doc), enc_u32(len(self.txs))]
        out.extend(enc_bytes(tx.serialize()) for tx in self.txs)
        out.append(bytes(1 if v else 0 for v in self.validity))
        return b"".join(out)

    @classmethod
    def deserialize(cls, buf: bytes) -> "Block":
        (number,) = struct.unpack_from(">Q", buf, 0)
        off = 8
        prev_hash = Digest(buf[off : off + 32])
        off += 32
        data_hash = Digest(buf[off : off + 32])
        off += 32
        timestamp, off = _read_str(buf, off)
        config_doc, off = _read_bytes(buf, off)
        (n_tx,) = struct.unpack_from(">I", buf, off)
        off += 4
        txs = []
        for _ in range(n_tx):
            raw, off = _read_bytes(buf, off)
            tx, _ = Transaction.parse(raw)
            txs.append(tx)
        validity = [b == 1 for b in buf[off : off + n_tx]]
        return cls(number, prev_hash, data_hash, timestamp, txs, validity, config_doc)


def data_hash_for(txs: list[Transaction]) -> Digest:
    """Merkle root over full transaction serializations."""
    return merkle.build([tx.serialize() for tx in txs]).root


def make_genesis(config_doc: bytes, timestamp: str) -> Block:
    return Block(
        number=0,
        prev_hash=ZERO_DIGEST,
        data_hash=hash_data(config_doc),
        timestamp=timestamp,
        txs=[],
        validity=[],
        config_doc=config_doc,
    )


# -- world state -------------------------------------------------------------

@dataclass(frozen=True)
class HistoryEntry:
    tx_id: str
    value: bytes  # empty = delete
    block: int
    tx_index: int
    timestamp: str
    event: str


class WorldState:
    """Current key -> (value, version) view plus append-only per-key
    history, both derived exclusively from committed blocks."""

    def __init__(self):
        self.kv: dict[str, tuple[bytes, Version]] = {}
        self.history: dict[str, list[HistoryEntry]] = {}

    def get(self, key: str) -> Optional[bytes]:
        entry = self.kv.get(key)
        return entry[0] if entry else None

    def version(self, key: str) -> Optional[Version]:
        entry = self.kv.get(key)
        return entry[1] if entry else None

    def get_history(self, key: str) -> list[HistoryEntry]:
        return list(self.history.get(key, []))

    def apply_write(self, key: str, value: bytes, version: Version,
                    tx_id: str, timestamp: str, event: str) -> None:
        if value == b"":
            self.kv.pop(key, None)
        else:
            self.kv[key] = (value, version)
        self.history.setdefault(key, []).append(
            HistoryEntry(tx_id, value, version[0], version[1], timestamp, event)
        )

    def snapshot_kv(self) -> dict[str, tuple[bytes, Version]]:
        return dict(self.kv)

    def digest(self) -> Digest:
        out = []
        for key in sorted(self.kv):
            value, (block, txi) = self.kv[key]
            out.append(enc_str(key) + enc_bytes(value) + enc_u64(block) + enc_u32(txi))
        return hash_data(b"".join(out))


# -- simulation --------------------------------------------------------------

@dataclass
class ContractResponse:
    payload: bytes = b""
    event: str = ""


# op(ctx, args) -> ContractResponse; raises ContractError subclasses
ContractRegistry = Mapping[str, Callable[["SimulationContext", list[str]], ContractResponse]]


class SimulationContext:
    """Read/write surface handed to contract ops during simulation.

    Reads come from the committed snapshot (never from this
    transaction's own buffered writes, matching the endorsement model);
    every get records the observed version. Range scans and history
    reads are not recorded in the read set (phantom reads are not
    protected against, a documented limitation).
    """

    def __init__(self, kv: Mapping[str, tuple[bytes, Version]],
                 history: Mapping[str, list[HistoryEntry]]):
        self._kv = kv
        self._history = history
        self.rwset = ReadWriteSet()

    def get(self, key: str) -> Optional[bytes]:
        entry = self._kv.get(key)
        if key not in self.rwset.reads:
            self.rwset.reads[key] = entry[1] if entry else None
        return entry[0] if entry else None

    def put(self, key: str, value: bytes) -> None:
        if value == b"":
            raise ContractError("empty values are reserved for deletes")
        self.rwset.writes[key] = value

    def delete(self, key: str) -> None:
        self.rwset.writes[key] = b""

    def scan(self, prefix: str) -> Iterable[tuple[str, bytes]]:
        for key in sorted(self._kv):
            if key.startswith(prefix):
                yield key, self._kv[key][0]

    def get_history(self, key: str) -> list[HistoryEntry]:
        return list(self._history.get(key, []))


@dataclass
class SimulationResult:
    rwset: ReadWriteSet
    payload: bytes
    event: str


def simulate(kv_snapshot: Mapping[str, tuple[bytes, Version]],
             history_snapshot: Mapping[str, list[HistoryEntry]],
             op_name: str, args: list[str],
             registry: ContractRegistry) -> SimulationResult:
    """Run a contract op against a snapshot; the snapshot is never
    modified. Contract errors propagate and no read-write set is
    produced."""
    try:
        op = registry[op_name]
    except KeyError:
        raise ContractError(f"unknown contract op {op_name!r}") from None
    ctx = SimulationContext(kv_snapshot, history_snapshot)
    response = op(ctx, args)
    return SimulationResult(rwset=ctx.rwset, payload=response.payload, event=response.event)


def make_tx(creator: str, op_name: str, args: list[str],
            result: SimulationResult, timestamp: str) -> Transaction:
    return Transaction(
        creator=creator,
        op_name=op_name,
        args=[a.encode("utf-8") for a in args],
        rwset=result.rwset,
        event=result.event,
        timestamp=timestamp,
    )


# -- ordering ----------------------------------------------------------------

class SoloOrderer:
    """FIFO queue with Fabric-style batch cutting: a batch closes when
    the message count is reached, the oldest pending age hits the batch
    timeout, or adding a message would push the batch past the preferred
    size. The timeout timer resets on every cut; no empty blocks."""

    def __init__(self, config: OrdererConfig):
        self.config = config
        self.queue: deque[tuple[Transaction, int]] = deque()  # (tx, size)
        self.timer_start: Optional[float] = None

    def pending_count(self) -> int:
        return len(self.queue)

    def _cut(self, count: Optional[int] = None) -> list[Transaction]:
        if count is None:
            count = len(self.queue)
        batch = [self.queue.popleft()[0] for _ in range(count)]
        return batch

    def submit(self, tx: Transaction, now: float) -> list[list[Transaction]]:
        """Enqueue one endorsed transaction; returns any batches cut by
        the count or size rules."""
        size = len(tx.serialize())
        if size > self.config.absolute_max_bytes:
            raise TxTooLarge(
                f"transaction of {size} bytes exceeds absolute_max_bytes"
            )
        batches = []
        pending_size = sum(s for _, s in self.queue)
        if self.queue and pending_size + size > self.config.preferred_max_bytes:
            batches.append(self._cut())
        self.queue.append((tx, size))
        if self.timer_start is None:
            self.timer_start = now
        if size > self.config.preferred_max_bytes:
            batches.append(self._cut())  # oversized message rides alone
        elif len(self.queue) >= self.config.max_message_count:
            batches.append(self._cut(self.config.max_message_count))
        if batches:
            self.timer_start = now if self.queue else None
        return batches

    def tick(self, now: float) -> Optional[list[Transaction]]:
        """Cut the pending batch if the oldest message has waited at
        least batch_timeout."""
        if not self.queue or self.timer_start is None:
            return None
        if now - self.timer_start < self.config.batch_timeout:
            return None
        batch = self._cut()
        self.timer_start = None
        return batch


# -- validation and commitment -----------------------------------------------

def validate_and_commit(state: WorldState, block: Block, prev: Block,
                        peers: Mapping[str, bytes],
                        policy: EndorsementPolicy = any_registered_peer_policy) -> list[bool]:
    """Verify header linkage, then apply transactions in order: a
    transaction commits iff its endorsements satisfy the policy and all
    of its read versions are still current (including effects of earlier
    transactions in the same block). Returns per-tx validity."""
    if block.number != prev.number + 1:
        raise BrokenChain(f"expected block {prev.number + 1}, got {block.number}")
    if block.prev_hash != prev.header_hash():
        raise BrokenChain(f"block {block.number} prev_hash mismatch")
    if block.data_hash != data_hash_for(block.txs):
        raise BrokenChain(f"block {block.number} data_hash mismatch")

    validity: list[bool] = []
    for i, tx in enumerate(block.txs):
        ok = policy(tx, peers)
        if ok:
            for key, ver in tx.rwset.reads.items():
                if state.version(key) != ver:
                    ok = False
                    break
        if ok:
            for key, value in tx.rwset.writes.items():
                state.apply_write(
                    key, value, (block.number, i), tx.tx_id.hex, tx.timestamp, tx.event
                )
        validity.append(ok)
    return validity


def replay(blocks: list[Block],
           policy: EndorsementPolicy = any_registered_peer_policy) -> WorldState:
    """Rebuild world state from a stored chain, re-deriving validity and
    checking it against the recorded flags. The genesis config document
    supplies the registered peers."""
    if not blocks:
        raise BrokenChain("empty chain: genesis block required")
    genesis = blocks[0]
    if genesis.number != 0 or genesis.txs or genesis.prev_hash != ZERO_DIGEST:
        raise BrokenChain("malformed genesis block")
    if genesis.data_hash != hash_data(genesis.config_doc):
        raise BrokenChain("genesis config digest mismatch")
    peers = parse_genesis_peers(genesis)

    state = WorldState()
    prev = genesis
    for block in blocks[1:]:
        validity = validate_and_commit(state, block, prev, peers, policy)
        if validity != block.validity:
            raise BrokenChain(f"block {block.number} validity flags do not replay")
        prev = block
    return state


def parse_genesis_peers(genesis: Block) -> dict[str, bytes]:
    import json

    doc = json.loads(genesis.config_doc) if genesis.config_doc else {}
    return {pid: bytes.fromhex(pub) for pid, pub in doc.get("peers", {}).items()}


def parse_genesis_config(genesis: Block) -> OrdererConfig:
    import json

    doc = json.loads(genesis.config_doc) if genesis.config_doc else {}
    return OrdererConfig.from_doc(doc.get("orderer", {}))


# -- block store --------------------------------------------------------------

class FileBlockStore:
    """Append-only file of length-prefixed canonical block bytes."""

    def __init__(self, path):
        from pathlib import Path

        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, block: Block) -> None:
        raw = block.serialize()
        with open(self.path, "ab") as f:
            f.write(enc_bytes(raw))
            f.flush()

    def load(self) -> list[Block]:
        if not self.path.exists():
            return []
        buf = self.path.read_bytes()
        blocks, off = [], 0
        while off < len(buf):
            raw, off = _read_bytes(buf, off)
            blocks.append(Block.deserialize(raw))
        return blocks


class MemoryBlockStore:
    def __init__(self):
        self._blocks: list[Block] = []

    def append(self, block: Block) -> None:
        self._blocks.append(block.serialize())

    def load(self) -> list[Block]:
        return [Block.deserialize(raw) for raw in self._blocks]


# -- the ledger ---------------------------------------------------------------

class Ledger:
    """Single-channel chain: one logical writer commits blocks; reads and
    simulations run against snapshots taken under the commit lock."""

    def __init__(self, *, store=None, genesis_doc: Optional[bytes] = None,
                 clock: Clock = system_clock,
                 policy: EndorsementPolicy = any_registered_peer_policy):
        self.clock = clock
        self.policy = policy
        self.store = store if store is not None else MemoryBlockStore()
        self.lock = threading.RLock()
        self.committed: dict[str, tuple[int, bool]] = {}  # tx_id hex -> (block, valid)

        existing = self.store.load()
        if existing:
            self.blocks = existing
            self.state = replay(existing, policy)
            for block in existing[1:]:
                for tx, ok in zip(block.txs, block.validity):
                    self.committed[tx.tx_id.hex] = (block.number, ok)
        else:
            if genesis_doc is None:
                raise ValueError("new ledger requires a genesis document")
            genesis = make_genesis(genesis_doc, iso_utc(clock()))
            self.blocks = [genesis]
            self.state = WorldState()
            self.store.append(genesis)
        self.peers = parse_genesis_peers(self.blocks[0])
        self.config = parse_genesis_config(self.blocks[0])
        self.orderer = SoloOrderer(self.config)

    @property
    def height(self) -> int:
        return len(self.blocks)

    def snapshot(self) -> tuple[dict[str, tuple[bytes, Version]], dict[str, list[HistoryEntry]]]:
        with self.lock:
            return self.state.snapshot_kv(), {k: list(v) for k, v in self.state.history.items()}

    def simulate(self, op_name: str, args: list[str], registry: ContractRegistry) -> SimulationResult:
        kv, history = self.snapshot()
        return simulate(kv, history, op_name, args, registry)

    def submit(self, tx: Transaction) -> None:
        """Enqueue an endorsed transaction; commits any batches the
        count/size rules cut immediately."""
        with self.lock:
            for batch in self.orderer.submit(tx, self.clock()):
                self._seal_and_commit(batch)

    def tick(self, now: Optional[float] = None) -> None:
        """Drive the batch-timeout rule; safe to call from any thread."""
        with self.lock:
            batch = self.orderer.tick(self.clock() if now is None else now)
            if batch:
                self._seal_and_commit(batch)

    def _seal_and_commit(self, batch: list[Transaction]) -> Block:
        prev = self.blocks[-1]
        block = Block(
            number=prev.number + 1,
            prev_hash=prev.header_hash(),
            data_hash=data_hash_for(batch),
            timestamp=iso_utc(self.clock()),
            txs=batch,
        )
        block.validity = validate_and_commit(self.state, block, prev, self.peers, self.policy)
        self.blocks.append(block)
        self.store.append(block)
        for tx, ok in zip(block.txs, block.validity):
            self.committed[tx.tx_id.hex] = (block.number, ok)
        return block

    def wait_for(self, tx_id: str, timeout: float) -> tuple[int, bool]:
        """Block until the transaction commits, pumping the timeout rule;
        returns (block number, validity)."""
        deadline = _time.monotonic() + timeout
        while True:
            with self.lock:
                if tx_id in self.committed:
                    return self.committed[tx_id]
            self.tick()
            if _time.monotonic() > deadline:
                raise TimeoutError(f"transaction {tx_id} not committed within {timeout}s")
            _time.sleep(0.005)

    def state_digest(self) -> Digest:
        with self.lock:
            return self.state.digest()

    def get_block(self, number: int) -> Block:
        if not 0 <= number < len(self.blocks):
            raise IndexOutOfRange(f"no block {number}")
        return self.blocks[number]
