"""Shared test harness: a single-peer ledger wired to a contract
registry, committing every transaction in its own block by default."""

import json
import random

from healthchain import crypto, ledger
from healthchain.contract import CONTRACT_REGISTRY
from healthchain.ledger import Ledger, ManualClock, OrdererConfig, endorse, make_tx


def sample_record(i=0, **overrides):
    doc = {
        "entity_id": f"11010119900101{i:04d}",
        "name": f"patient-{i}",
        "birth_day": "1990-01-01",
        "cert_no": f"C{i:05d}",
        "phone": f"138000{i:05d}",
        "health_code": "green",
        "nucleic_acid_result": "negative",
        "owner_pub": "ab" * 32,
        "updated_at": "2026-01-01T00:00:00+00:00",
    }
    doc.update(overrides)
    return doc


class Harness:
    """Ledger + one endorsing peer + a contract registry."""

    def __init__(self, max_message_count=1, seed=7, registry=None, store=None,
                 clock=None, config=None):
        self.registry = registry if registry is not None else CONTRACT_REGISTRY
        self.clock = clock or ManualClock()
        self.peer = crypto.keygen_sign(random.Random(seed).randbytes)
        cfg = config or OrdererConfig(max_message_count=max_message_count)
        doc = {
            "channel": "healthchain",
            "orderer": cfg.to_doc(),
            "peers": {self.peer.key_id.hex: self.peer.public.hex()},
        }
        self.ledger = Ledger(
            store=store,
            genesis_doc=json.dumps(doc, sort_keys=True).encode(),
            clock=self.clock,
        )

    def invoke(self, op, args, creator="gateway"):
        """Simulate, endorse, submit; returns (tx, simulation result)."""
        result = self.ledger.simulate(op, args, self.registry)
        tx = make_tx(creator, op, args, result, ledger.iso_utc(self.clock()))
        tx.endorsements.append(endorse(self.peer.secret, self.peer.key_id.hex, tx))
        self.ledger.submit(tx)
        return tx, result

    def flush(self):
        self.clock.advance(self.ledger.config.batch_timeout + 0.001)
        self.ledger.tick()

    def query(self, op, args):
        """Evaluate a read-only op locally; returns the payload."""
        return self.ledger.simulate(op, args, self.registry).payload

    def committed(self, tx):
        return self.ledger.committed.get(tx.tx_id.hex)
