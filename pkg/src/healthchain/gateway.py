"""The federation gateway: the single service that touches the ledger
and the off-chain store. It routes uploads by size and privacy, serves
queries under grant enforcement, executes encrypted searches, applies
proxy re-encryption for shares, relays the blinded rekey exchange, and
serves Merkle proofs.

The gateway is an untrusted-but-honest router in the re-encryption
threat model: it never holds user secret keys, search keys, or private
plaintext. All client-side cryptography lives in `client` (and the
browser companion); this module only verifies, stores, transforms, and
audits.
"""

from __future__ import annotations

import base64
import json
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

from . import sse
from .ca import (
    AccessGrant,
    AuditPolicy,
    Certificate,
    CertificateAuthority,
    Directory,
    KeyRecord,
    Session,
    UserAccount,
    check_grant,
    normalize_scope,
    verify_grant,
)
from .config import GatewayConfig
from .contract import (
    CONTRACT_REGISTRY,
    HealthRecord,
    PrivateAnchor,
    anchor_key,
    record_key,
)
from .crypto import (
    RandomSource,
    hash_data,
    load_sign_keypair,
    save_sign_keypair,
    system_rng,
)
from .encoding import canonical_json
from .errors import (
    BadExponent,
    BadSignature,
    DuplicateDocId,
    Expired,
    Forbidden,
    HealthchainError,
    InvalidGrant,
    MalformedRecord,
    MissingReKey,
    NotYetValid,
    OutOfScope,
    PendingReview,
    RootMismatch,
    ScopeNotOwned,
    SizeExceeded,
    TxInvalidated,
    UnknownExchange,
    UnknownIndex,
    UnknownObject,
    UnknownRequest,
)
from .ledger import (
    Clock,
    FileBlockStore,
    Ledger,
    endorse,
    iso_utc,
    make_tx,
    system_clock,
)
from .pre import PreCiphertext, ReKey, get_params, reencrypt
from .store import (
    BlobStore,
    DatasetDoc,
    DatasetManifest,
    OffchainObject,
    atomic_write_json,
    dataset_root,
    read_json,
)

b64e = lambda raw: base64.b64encode(raw).decode("ascii")
b64d = base64.b64decode


@dataclass
class AuditEntry:
    timestamp: int
    actor: str  # certificate serial of the acting identity
    action: str
    scope: str
    outcome: str  # "ok" or a stable error code
    grant_serial: Optional[str] = None


@dataclass
class ShareRequest:
    request_id: str
    requester_pub: str
    requester_phone: str
    entity_id: str
    scope: dict
    start: int
    end: int
    grantor_pub: str
    created_at: int
    status: str = "pending"  # pending -> granted | denied
    grant_serial: Optional[str] = None


@dataclass
class RekeyExchange:
    """Relay slot for the blinded delegation-key exchange: the grantor
    posts x = v * a^-1, the grantee answers y = x * b, the grantor
    finishes rk = y * v^-1 locally. Only blinded values pass through."""

    exchange_id: str
    request_id: str
    params_id: str
    grantor_pub: str
    grantee_pub: str
    x: str  # hex exponent
    y: Optional[str] = None
    state: str = "awaiting-grantee"  # -> ready


class Gateway:
    """Application service behind the HTTP API and the CLI."""

    def __init__(self, config: GatewayConfig, *, rng: RandomSource = system_rng,
                 clock: Clock = system_clock):
        self.config = config
        self.rng = rng
        self.clock = clock
        self.lock = threading.RLock()
        data = config.data_dir
        if not (data / "state.json").exists():
            raise ValueError(f"{data} is not initialized; run init-genesis first")

        self.peer = load_sign_keypair(data / "keys" / "peer1.json")
        ca_root = load_sign_keypair(data / "keys" / "ca_root.json")
        ca = CertificateAuthority(root=ca_root, rng=rng)
        self.directory = Directory(ca, rng=rng, session_ttl=config.session_ttl)
        self.ledger = Ledger(store=FileBlockStore(data / "blocks.dat"), clock=clock)
        self.blobs = BlobStore(data / "blobs")

        self.manifests: dict[str, DatasetManifest] = {}
        self.grants: dict[str, AccessGrant] = {}
        self.rekeys: dict[str, dict] = {}
        self.requests: dict[str, ShareRequest] = {}
        self.exchanges: dict[str, RekeyExchange] = {}
        self.audit_log: list[AuditEntry] = []
        self._load_state()
        self._reindex_objects()

    # -- bootstrap ---------------------------------------------------------

    @classmethod
    def init_genesis(cls, config: GatewayConfig, *, admin_phone: str, admin_name: str,
                     admin_password: str, rng: RandomSource = system_rng,
                     clock: Clock = system_clock) -> "Gateway":
        """Create the data directory: CA root, two endorsing peers, one
        orderer identity, the genesis block, and the bootstrap admin."""
        data = Path(config.data_dir)
        if (data / "state.json").exists():
            raise ValueError(f"{data} is already initialized")
        (data / "keys").mkdir(parents=True, exist_ok=True)

        from .crypto import keygen_sign

        ca = CertificateAuthority(rng=rng)
        peers = [keygen_sign(rng), keygen_sign(rng)]
        orderer = keygen_sign(rng)
        now = int(clock())
        for i, pair in enumerate(peers, start=1):
            ca.issue(f"peer{i}", "Peer", pair.public.hex(), now)
            ca.register_key(pair.key_id.hex, f"peer{i}", now)
        ca.issue("orderer1", "Orderer", orderer.public.hex(), now)
        ca.register_key(orderer.key_id.hex, "orderer1", now)

        save_sign_keypair(data / "keys" / "ca_root.json", ca.root)
        for i, pair in enumerate(peers, start=1):
            save_sign_keypair(data / "keys" / f"peer{i}.json", pair)
        save_sign_keypair(data / "keys" / "orderer1.json", orderer)

        genesis_doc = {
            "channel": config.channel,
            "orderer": config.orderer().to_doc(),
            "orderer_id": orderer.key_id.hex,
            "peers": {p.key_id.hex: p.public.hex() for p in peers},
            "created_at": iso_utc(clock()),
        }
        Ledger(
            store=FileBlockStore(data / "blocks.dat"),
            genesis_doc=json.dumps(genesis_doc, sort_keys=True).encode(),
            clock=clock,
        )

        directory = Directory(ca, rng=rng, session_ttl=config.session_ttl)
        directory.create_admin(phone=admin_phone, name=admin_name,
                               password=admin_password, now=now)
        cls._write_state(data, directory, {}, {}, {}, {}, {}, [])
        return cls(config, rng=rng, clock=clock)

    # -- persistence --------------------------------------------------------

    @staticmethod
    def _write_state(data: Path, directory: Directory, manifests, grants, rekeys,
                     requests, exchanges, audit_log) -> None:
        ca = directory.ca
        doc = {
            "version": 1,
            "accounts": {p: asdict(a) for p, a in directory.accounts.items()},
            "issued_certs": {s: c.to_doc() for s, c in ca.issued.items()},
            "revoked_certs": sorted(ca.revoked),
            "key_records": {k: asdict(r) for k, r in ca.key_records.items()},
            "manifests": {e: m.to_doc() for e, m in manifests.items()},
            "grants": {s: g.to_doc() for s, g in grants.items()},
            "rekeys": rekeys,
            "share_requests": {i: asdict(r) for i, r in requests.items()},
            "exchanges": {i: asdict(e) for i, e in exchanges.items()},
            "audit": [asdict(e) for e in audit_log],
        }
        atomic_write_json(data / "state.json", doc)

    def _save(self) -> None:
        self._write_state(self.config.data_dir, self.directory, self.manifests,
                          self.grants, self.rekeys, self.requests, self.exchanges,
                          self.audit_log)

    def _load_state(self) -> None:
        doc = read_json(self.config.data_dir / "state.json")
        for phone, a in doc.get("accounts", {}).items():
            self.directory.accounts[phone] = UserAccount(**a)
        ca = self.directory.ca
        for serial, c in doc.get("issued_certs", {}).items():
            ca.issued[serial] = Certificate.from_doc(c)
        ca.revoked = set(doc.get("revoked_certs", []))
        for key_id, r in doc.get("key_records", {}).items():
            r = dict(r)
            r["usage_log"] = [tuple(e) for e in r.get("usage_log", [])]
            ca.key_records[key_id] = KeyRecord(**r)
        for entity, m in doc.get("manifests", {}).items():
            self.manifests[entity] = DatasetManifest.from_doc(m)
        for serial, g in doc.get("grants", {}).items():
            self.grants[serial] = AccessGrant.from_doc(g)
        self.rekeys = dict(doc.get("rekeys", {}))
        for rid, r in doc.get("share_requests", {}).items():
            self.requests[rid] = ShareRequest(**r)
        for eid, e in doc.get("exchanges", {}).items():
            self.exchanges[eid] = RekeyExchange(**e)
        self.audit_log = [AuditEntry(**e) for e in doc.get("audit", [])]

    def _reindex_objects(self) -> None:
        self._object_entity: dict[str, str] = {}
        for entity, manifest in self.manifests.items():
            for doc in manifest.docs:
                self._object_entity[doc.owner_object.object_id] = entity
                self._object_entity[doc.share_object.object_id] = entity

    # -- helpers -------------------------------------------------------------

    def now(self) -> int:
        return int(self.clock())

    def _auth(self, token: str) -> tuple[Session, UserAccount]:
        session = self.directory.session(token, self.now())
        return session, self.directory.account_of(session)

    def _audit(self, account: Optional[UserAccount], action: str, scope: str,
               outcome: str, grant_serial: Optional[str] = None) -> None:
        self.audit_log.append(
            AuditEntry(
                timestamp=self.now(),
                actor=account.cert_serial if account else "anonymous",
                action=action,
                scope=scope,
                outcome=outcome,
                grant_serial=grant_serial,
            )
        )
        self._save()

    def _invoke_committed(self, op: str, args: list[str], creator: str):
        """Simulate, endorse, order, and wait for commitment."""
        with self.lock:
            result = self.ledger.simulate(op, args, CONTRACT_REGISTRY)
            tx = make_tx(creator, op, args, result, iso_utc(self.clock()))
            tx.endorsements.append(endorse(self.peer.secret, self.peer.key_id.hex, tx))
            self.ledger.submit(tx)
        timeout = max(10.0, 3 * self.config.batch_timeout)
        block_no, valid = self.ledger.wait_for(tx.tx_id.hex, timeout)
        if not valid:
            raise TxInvalidated("transaction invalidated by a concurrent update; retry")
        return tx, block_no, result

    def _owner_of(self, record_id: str) -> Optional[str]:
        raw = self.ledger.state.get(record_key(record_id))
        if raw is not None:
            return json.loads(raw).get("owner_pub")
        manifest = self.manifests.get(record_id)
        return manifest.owner_pub if manifest else None

    def _scope_covers(self, held: dict, requested: dict) -> bool:
        held, requested = normalize_scope(held), normalize_scope(requested)
        return (set(requested["record_ids"]) <= set(held["record_ids"])
                and set(requested["trapdoors"]) <= set(held["trapdoors"]))

    def _find_grant(self, grantee_pub: str, requested_scope: dict,
                    serial: Optional[str] = None) -> AccessGrant:
        """Locate a verifying grant or raise the most informative
        refusal: a covering-but-expired grant reports Expired, then
        NotYetValid, then BadSignature; nothing covering is OutOfScope."""
        now = self.now()
        if serial is not None:
            grant = self.grants.get(serial)
            if grant is None:
                raise InvalidGrant(f"no registered grant {serial}")
            if grant.grantee_pub != grantee_pub:
                raise Forbidden("grant was issued to a different grantee")
            verify_grant(grant, requested_scope, now)
            return grant
        verdicts = []
        for grant in self.grants.values():
            if grant.grantee_pub != grantee_pub:
                continue
            if not self._scope_covers(grant.scope, requested_scope):
                continue
            verdict = check_grant(grant, requested_scope, now)
            if verdict == "ok":
                return grant
            verdicts.append(verdict)
        for code, exc_type, message in (
            ("Expired", Expired, "all covering grants have expired"),
            ("NotYetValid", NotYetValid, "covering grant is not yet valid"),
            ("BadSignature", BadSignature, "covering grant has a bad signature"),
        ):
            if code in verdicts:
                raise exc_type(message)
        raise OutOfScope("no grant covers the requested scope")

    # -- accounts -------------------------------------------------------------

    def register(self, body: dict) -> dict:
        with self.lock:
            result = self.directory.register(
                role=body["role"],
                phone=body["phone"],
                name=body["name"],
                password=body["password"],
                now=self.now(),
                institution_code=body.get("institution_code"),
                custody=body.get("custody", "local"),
                sign_public=body.get("sign_public", ""),
                pre_public=body.get("pre_public", ""),
            )
            self._save()
            if result.certificate is None:
                raise PendingReview("registration recorded; awaiting administrator review")
            out = {
                "phone": result.account.phone,
                "role": result.account.role,
                "name": result.account.name,
                "certificate": result.certificate.to_doc(),
            }
            if result.secrets:
                out["secrets"] = result.secrets
            return out

    def login(self, phone: str, password: str) -> dict:
        with self.lock:
            token = self.directory.login(phone, password, self.now())
            account = self.directory.accounts[phone]
            self._save()
            return {
                "token": token,
                "role": account.role,
                "name": account.name,
                "phone": account.phone,
                "custody": account.custody,
                "cert_serial": account.cert_serial,
                "is_admin": account.is_admin,
            }

    def approve(self, token: str, phone: str) -> dict:
        with self.lock:
            session, account = self._auth(token)
            cert = self.directory.approve(session, phone, self.now())
            self._audit(account, "approve", phone, "ok")
            return {"phone": phone, "certificate": cert.to_doc()}

    def update_key(self, token: str, body: dict) -> dict:
        with self.lock:
            session, account = self._auth(token)
            result = self.directory.update_key(
                session, self.now(),
                sign_public=body.get("sign_public", ""),
                pre_public=body.get("pre_public", ""),
            )
            self._audit(account, "update_key", account.phone, "ok")
            out = {"certificate": result.certificate.to_doc()}
            if result.secrets:
                out["secrets"] = result.secrets
            return out

    # -- public records ----------------------------------------------------------

    def upload_public(self, token: str, body: dict) -> dict:
        session, account = self._auth(token)
        if session.role != "DO":
            raise Forbidden("only data owners upload public records")
        record_doc = body.get("record")
        if not isinstance(record_doc, dict):
            raise MalformedRecord("body must carry a record object")
        record = HealthRecord.from_doc(record_doc)
        if record.owner_pub != account.sign_public:
            raise Forbidden("record owner_pub must match the session identity")
        raw = record.to_bytes()
        if len(raw) > self.config.onchain_threshold:
            raise SizeExceeded(
                f"record of {len(raw)} bytes exceeds the on-chain threshold "
                f"({self.config.onchain_threshold}); upload it as a private dataset"
            )

        mode = body.get("mode", "auto")
        existing = self.ledger.state.get(record_key(record.entity_id))
        if mode == "auto":
            mode = "update" if existing is not None else "add"
        if mode not in ("add", "update"):
            raise MalformedRecord(f"unknown mode {mode!r}")
        if mode == "update" and existing is not None:
            if json.loads(existing).get("owner_pub") != account.sign_public:
                raise Forbidden("record belongs to a different owner")
        op = "add_record" if mode == "add" else "update_record"
        event = body.get("event", "recordAdded" if mode == "add" else "recordUpdated")

        try:
            tx, block_no, _ = self._invoke_committed(op, [raw.decode(), event],
                                                     creator=account.cert_serial)
        except HealthchainError as exc:
            self._audit(account, op, record.entity_id, exc.code)
            raise
        self._audit(account, op, record.entity_id, "ok")
        return {"tx_id": tx.tx_id.hex, "block": block_no, "op": op,
                "entity_id": record.entity_id}

    def _authorize_record_read(self, account: UserAccount, entity_id: str,
                               owner_pub: Optional[str]) -> Optional[str]:
        """Owner reads freely; everyone else needs a verifying grant
        covering the record. Returns the grant serial used, if any."""
        if owner_pub is not None and account.sign_public == owner_pub:
            return None
        grant = self._find_grant(account.sign_public, {"record_ids": [entity_id]})
        return grant.serial

    def query_latest(self, token: str, cert_no: str, name: str) -> dict:
        session, account = self._auth(token)
        try:
            payload = self.ledger.simulate("query_latest", [cert_no, name],
                                           CONTRACT_REGISTRY).payload
            record = json.loads(payload)
            grant_serial = self._authorize_record_read(account, record["entity_id"],
                                                       record.get("owner_pub"))
        except HealthchainError as exc:
            self._audit(account, "query_latest", f"{cert_no}/{name}", exc.code)
            raise
        self._audit(account, "query_latest", record["entity_id"], "ok",
                    grant_serial=grant_serial)
        return {"record": record}

    def query_history(self, token: str, entity_id: str) -> dict:
        session, account = self._auth(token)
        try:
            payload = self.ledger.simulate("query_history", [entity_id],
                                           CONTRACT_REGISTRY).payload
            entries = json.loads(payload)
            grant_serial = None
            if entries:
                owner_pub = (entries[-1]["record"] or {}).get("owner_pub")
                grant_serial = self._authorize_record_read(account, entity_id, owner_pub)
        except HealthchainError as exc:
            self._audit(account, "query_history", entity_id, exc.code)
            raise
        self._audit(account, "query_history", entity_id, "ok", grant_serial=grant_serial)
        return {"entries": entries}

    # -- private datasets -----------------------------------------------------------

    def upload_private(self, token: str, entity_id: str, body: dict) -> dict:
        session, account = self._auth(token)
        if session.role != "DO":
            raise Forbidden("only data owners upload private datasets")
        existing = self.manifests.get(entity_id)
        if existing is not None and existing.owner_pub != account.sign_public:
            raise Forbidden("dataset belongs to a different owner")
        record_owner = self._owner_of(entity_id)
        if record_owner is not None and record_owner != account.sign_public:
            raise Forbidden("entity is owned by a different account")

        params_id = body.get("params_id", self.config.params_id)
        params = get_params(params_id)
        index_wire = body.get("index")
        index = sse.EncryptedIndex.from_wire(index_wire)  # validates shape

        created_at = iso_utc(self.clock())
        docs: list[DatasetDoc] = []
        seen: set[str] = set()
        chunk_blobs: list[bytes] = []
        for doc_body in body.get("docs", []):
            doc_id = doc_body["doc_id"]
            if doc_id in seen:
                raise DuplicateDocId(f"doc_id {doc_id} appears twice")
            seen.add(doc_id)
            owner_chunks = [b64d(c) for c in doc_body["owner_chunks"]]
            share_chunks = [b64d(c) for c in doc_body["share_chunks"]]
            if not owner_chunks or not share_chunks:
                raise MalformedRecord("each doc needs owner and share chunks")
            wrap = PreCiphertext.from_wire(doc_body["key_wrap"])
            if wrap.params_id != params_id:
                raise MalformedRecord("key_wrap group does not match the dataset profile")
            if wrap.transformed:
                raise MalformedRecord("key_wrap must be a first-hop ciphertext")
            docs.append(
                DatasetDoc(
                    doc_id=doc_id,
                    owner_object=OffchainObject.from_chunks(owner_chunks, created_at),
                    share_object=OffchainObject.from_chunks(share_chunks, created_at),
                    key_wrap=doc_body["key_wrap"],
                )
            )
            chunk_blobs.extend(owner_chunks)
            chunk_blobs.extend(share_chunks)
        if not docs:
            raise MalformedRecord("dataset needs at least one doc")

        root = dataset_root(docs)
        if root.hex != body.get("merkle_root"):
            raise RootMismatch(
                "submitted merkle_root does not match the uploaded chunk digests"
            )

        current = self.manifests.get(entity_id)
        version = int(body.get("index_version") or
                      (current.index_version + 1 if current else 1))
        try:
            tx, block_no, _ = self._invoke_committed(
                "anchor_private", [entity_id, root.hex, str(version)],
                creator=account.cert_serial,
            )
        except HealthchainError as exc:
            self._audit(account, "upload_private", entity_id, exc.code)
            raise

        with self.lock:
            for blob in chunk_blobs:
                self.blobs.put(blob)
            index_blob = self.blobs.put(index.serialize())
            self.manifests[entity_id] = DatasetManifest(
                entity_id=entity_id,
                owner_pub=account.sign_public,
                owner_phone=account.phone,
                params_id=params_id,
                index_version=version,
                merkle_root=root.hex,
                anchor_tx_id=tx.tx_id.hex,
                index_blob=index_blob,
                docs=docs,
            )
            self._reindex_objects()
            self._audit(account, "upload_private", entity_id, "ok")
        return {
            "anchor_tx_id": tx.tx_id.hex,
            "block": block_no,
            "entity_id": entity_id,
            "index_version": version,
            "merkle_root": root.hex,
            "objects": [
                {"doc_id": d.doc_id,
                 "owner_object_id": d.owner_object.object_id,
                 "share_object_id": d.share_object.object_id}
                for d in docs
            ],
        }

    def search_private(self, token: str, entity_id: str, body: dict) -> dict:
        session, account = self._auth(token)
        manifest = self.manifests.get(entity_id)
        if manifest is None:
            raise UnknownIndex(f"no private dataset for entity {entity_id}")
        trapdoor_hex = body.get("trapdoor", "")
        try:
            trapdoor = sse.Trapdoor.from_hex(trapdoor_hex)
        except (ValueError, TypeError):
            raise MalformedRecord("trapdoor must be a 32-byte hex tag") from None

        grant_serial = None
        is_owner = manifest.owner_pub == account.sign_public
        try:
            if not is_owner:
                grant = self._find_grant(
                    account.sign_public,
                    {"record_ids": [entity_id], "trapdoors": [trapdoor.hex]},
                )
                grant_serial = grant.serial
        except HealthchainError as exc:
            self._audit(account, "search_private", entity_id, exc.code)
            raise

        index = sse.EncryptedIndex.from_wire(
            json.loads(self.blobs.get(manifest.index_blob))
        )
        doc_ids = sorted(sse.search(index, trapdoor))
        by_id = {d.doc_id: d for d in manifest.docs}
        object_ids = [
            (by_id[i].owner_object if is_owner else by_id[i].share_object).object_id
            for i in doc_ids if i in by_id
        ]
        self._audit(account, "search_private", f"{entity_id}:{trapdoor.hex[:16]}",
                    "ok", grant_serial=grant_serial)
        return {"entity_id": entity_id, "doc_ids": doc_ids, "object_ids": object_ids}

    # -- sharing --------------------------------------------------------------------

    def create_share_request(self, token: str, body: dict) -> dict:
        with self.lock:
            session, account = self._auth(token)
            entity_id = body["entity_id"]
            grantor_pub = self._owner_of(entity_id)
            if grantor_pub is None:
                raise UnknownObject(f"no record or dataset for entity {entity_id}")
            request = ShareRequest(
                request_id=self.rng(16).hex(),
                requester_pub=account.sign_public,
                requester_phone=account.phone,
                entity_id=entity_id,
                scope=normalize_scope(body.get("scope", {"record_ids": [entity_id]})),
                start=int(body["start"]),
                end=int(body["end"]),
                grantor_pub=grantor_pub,
                created_at=self.now(),
            )
            self.requests[request.request_id] = request
            self._audit(account, "share_request", entity_id, "ok")
            return {"request_id": request.request_id, "status": request.status}

    def _request_view(self, request: ShareRequest) -> dict:
        """A request as either party sees it; once granted, the view
        carries the grant's scope and window so the requester learns
        which trapdoors were approved without an out-of-band channel."""
        view = asdict(request)
        grant = self.grants.get(request.grant_serial) if request.grant_serial else None
        if grant is not None:
            view["granted_scope"] = normalize_scope(grant.scope)
            view["granted_window"] = [grant.start, grant.end]
        return view

    def list_share_requests(self, token: str) -> dict:
        session, account = self._auth(token)
        pub = account.sign_public
        inbox = [self._request_view(r) for r in self.requests.values()
                 if r.grantor_pub == pub]
        outbox = [self._request_view(r) for r in self.requests.values()
                  if r.requester_pub == pub]
        key = lambda r: (r["created_at"], r["request_id"])
        return {"inbox": sorted(inbox, key=key), "outbox": sorted(outbox, key=key)}

    def deny_share_request(self, token: str, request_id: str) -> dict:
        with self.lock:
            session, account = self._auth(token)
            request = self.requests.get(request_id)
            if request is None:
                raise UnknownRequest(f"no share request {request_id}")
            if request.grantor_pub != account.sign_public:
                raise Forbidden("only the data owner may answer this request")
            if request.status != "pending":
                raise InvalidGrant(f"request is already {request.status}")
            request.status = "denied"
            self._audit(account, "share_deny", request.entity_id, "ok")
            return {"request_id": request_id, "status": "denied"}

    def start_exchange(self, token: str, body: dict) -> dict:
        with self.lock:
            session, account = self._auth(token)
            request = self.requests.get(body["request_id"])
            if request is None:
                raise UnknownRequest("exchange must reference a share request")
            if request.grantor_pub != account.sign_public:
                raise Forbidden("only the data owner starts the exchange")
            params = get_params(body.get("params_id", self.config.params_id))
            x = int(body["x"], 16)
            if not 1 <= x < params.q:
                raise BadExponent("blinded value out of range")
            exchange = RekeyExchange(
                exchange_id=self.rng(16).hex(),
                request_id=request.request_id,
                params_id=params.params_id,
                grantor_pub=request.grantor_pub,
                grantee_pub=request.requester_pub,
                x=f"{x:x}",
            )
            self.exchanges[exchange.exchange_id] = exchange
            self._save()
            return {"exchange_id": exchange.exchange_id, "state": exchange.state}

    def list_exchanges(self, token: str) -> dict:
        session, account = self._auth(token)
        pub = account.sign_public
        mine = [asdict(e) for e in self.exchanges.values()
                if pub in (e.grantor_pub, e.grantee_pub)]
        return {"exchanges": sorted(mine, key=lambda e: e["exchange_id"])}

    def get_exchange(self, token: str, exchange_id: str) -> dict:
        session, account = self._auth(token)
        exchange = self.exchanges.get(exchange_id)
        if exchange is None:
            raise UnknownExchange(f"no exchange {exchange_id}")
        if account.sign_public not in (exchange.grantor_pub, exchange.grantee_pub):
            raise Forbidden("exchange is private to its two parties")
        return asdict(exchange)

    def respond_exchange(self, token: str, exchange_id: str, body: dict) -> dict:
        with self.lock:
            session, account = self._auth(token)
            exchange = self.exchanges.get(exchange_id)
            if exchange is None:
                raise UnknownExchange(f"no exchange {exchange_id}")
            if exchange.grantee_pub != account.sign_public:
                raise Forbidden("only the requesting party answers the exchange")
            params = get_params(exchange.params_id)
            y = int(body["y"], 16)
            if not 1 <= y < params.q:
                raise BadExponent("blinded value out of range")
            exchange.y = f"{y:x}"
            exchange.state = "ready"
            self._save()
            return {"exchange_id": exchange_id, "state": exchange.state}

    def register_rekey(self, token: str, body: dict) -> dict:
        with self.lock:
            session, account = self._auth(token)
            if body.get("grantor_pub") != account.sign_public:
                raise Forbidden("rekeys are registered by their grantor")
            params = get_params(body.get("params_id", self.config.params_id))
            rk = int(body["rk"], 16)
            if not 1 <= rk < params.q:
                raise BadExponent("delegation exponent out of range")
            doc = {
                "params_id": params.params_id,
                "rk": f"{rk:x}",
                "grantor_pub": body["grantor_pub"],
                "grantee_pub": body["grantee_pub"],
            }
            ref = hash_data(canonical_json(doc)).hex
            self.rekeys[ref] = doc
            self._audit(account, "register_rekey", body["grantee_pub"][:16], "ok")
            return {"rekey_ref": ref}

    def register_grant(self, token: str, body: dict) -> dict:
        with self.lock:
            session, account = self._auth(token)
            grant = AccessGrant.from_doc(body["grant"])
            if grant.grantor_pub != account.sign_public:
                raise Forbidden("grants are registered by their grantor")
            verify_grant(grant, {}, grant.start)  # signature + window sanity
            for record_id in normalize_scope(grant.scope)["record_ids"]:
                if self._owner_of(record_id) != grant.grantor_pub:
                    raise ScopeNotOwned(f"grantor does not own record {record_id}")
            if normalize_scope(grant.scope)["trapdoors"]:
                if grant.rekey_ref is None or grant.rekey_ref not in self.rekeys:
                    raise MissingReKey("private scope requires a registered rekey")
            self.grants[grant.serial] = grant
            request_id = body.get("request_id")
            if request_id:
                request = self.requests.get(request_id)
                if request is None:
                    raise UnknownRequest(f"no share request {request_id}")
                if request.grantor_pub != account.sign_public:
                    raise Forbidden("request belongs to a different owner")
                request.status = "granted"
                request.grant_serial = grant.serial
            self._audit(account, "register_grant", grant.serial, "ok",
                        grant_serial=grant.serial)
            return {"serial": grant.serial}

    def share_fetch(self, token: str, body: dict) -> dict:
        session, account = self._auth(token)
        object_id = body.get("object_id", "")
        entity_id = self._object_entity.get(object_id)
        if entity_id is None:
            raise UnknownObject(f"no stored object {object_id}")
        manifest = self.manifests[entity_id]
        doc, obj, kind = manifest.find_object(object_id)

        is_owner = manifest.owner_pub == account.sign_public
        grant_serial = None
        key_wrap = doc.key_wrap
        try:
            if not is_owner:
                if kind != "share":
                    raise Forbidden("owner-copy objects are not shareable")
                grant = self._find_grant(account.sign_public,
                                         {"record_ids": [entity_id]},
                                         serial=body.get("grant_serial"))
                grant_serial = grant.serial
                if grant.rekey_ref is None or grant.rekey_ref not in self.rekeys:
                    raise MissingReKey("no registered rekey for this grant")
                rekey_doc = self.rekeys[grant.rekey_ref]
                if rekey_doc["params_id"] != manifest.params_id:
                    raise MissingReKey("rekey group does not match the dataset profile")
                if rekey_doc["grantee_pub"] != account.sign_public:
                    raise Forbidden("rekey was issued to a different grantee")
                rekey = ReKey(rekey_doc["params_id"], int(rekey_doc["rk"], 16))
                key_wrap = reencrypt(rekey, PreCiphertext.from_wire(doc.key_wrap)).to_wire()
        except HealthchainError as exc:
            self._audit(account, "share_fetch", object_id, exc.code)
            raise

        chunks = [self.blobs.get(d) for d in obj.chunk_digests]
        self._audit(account, "share_fetch", object_id, "ok", grant_serial=grant_serial)
        return {
            "object_id": object_id,
            "entity_id": entity_id,
            "doc_id": doc.doc_id,
            "copy": kind,
            "params_id": manifest.params_id,
            "chunks": [b64e(c) for c in chunks],
            "key_wrap": key_wrap,
            "transformed": not is_owner,
            "merkle_root": manifest.merkle_root,
            "index_version": manifest.index_version,
        }

    # -- proofs and audit -------------------------------------------------------------

    def merkle_path(self, token: str, object_id: str, chunk_index: int) -> dict:
        session, account = self._auth(token)
        entity_id = self._object_entity.get(object_id)
        if entity_id is None:
            raise UnknownObject(f"no stored object {object_id}")
        manifest = self.manifests[entity_id]
        _, obj, _ = manifest.find_object(object_id)
        proof = manifest.prove_chunk(object_id, chunk_index)
        anchor_raw = self.ledger.state.get(anchor_key(entity_id))
        anchored_root = (PrivateAnchor.from_bytes(anchor_raw).merkle_root
                         if anchor_raw else None)
        return {
            "object_id": object_id,
            "entity_id": entity_id,
            "chunk_index": chunk_index,
            "chunk_digest": obj.chunk_digests[chunk_index],
            "proof": proof.to_wire(),
            "merkle_root": manifest.merkle_root,
            "anchored_root": anchored_root,
            "index_version": manifest.index_version,
            "anchor_tx_id": manifest.anchor_tx_id,
        }

    def get_audit(self, token: str, kind: Optional[str] = None) -> dict:
        session, account = self._auth(token)
        if kind == "keys":
            findings = self.directory.ca.audit_keys(self.now(), AuditPolicy())
            return {"findings": [asdict(f) for f in findings]}
        return {"entries": [asdict(e) for e in self.audit_log]}

    # -- background ---------------------------------------------------------------------

    def start_ticker(self, interval: float = 0.05) -> threading.Thread:
        """Pump the batch-timeout rule; used by the serve command."""

        def run():
            while not self._stop_ticker.is_set():
                self.ledger.tick()
                self._stop_ticker.wait(interval)

        self._stop_ticker = threading.Event()
        thread = threading.Thread(target=run, daemon=True, name="orderer-ticker")
        thread.start()
        return thread

    def stop_ticker(self) -> None:
        if hasattr(self, "_stop_ticker"):
            self._stop_ticker.set()
