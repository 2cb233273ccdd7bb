"""Walk the whole story in one process: genesis, two users, an on-chain
record, an encrypted private dataset, a signed share grant riding a
blinded rekey exchange, and a grantee-side decrypt with Merkle proof.

Run:  python scripts/demo_share_flow.py
"""

import base64
import random
import tempfile
import time
from pathlib import Path

from fastapi.testclient import TestClient

from healthchain.api import create_app
from healthchain.client import ApiClient, UserClient, UserKeys
from healthchain.config import GatewayConfig
from healthchain.crypto import hash_data
from healthchain.gateway import Gateway


def step(msg: str) -> None:
    print(f"\n=== {msg}")


def main() -> None:
    now = int(time.time())
    workdir = Path(tempfile.mkdtemp(prefix="healthchain-demo-"))
    step(f"genesis: new channel under {workdir}")
    cfg = GatewayConfig(data_dir=workdir, max_message_count=1)
    gw = Gateway.init_genesis(cfg, admin_phone="10000000000", admin_name="root",
                              admin_password="admin-pw")
    api = ApiClient(TestClient(create_app(gw), raise_server_exceptions=False))
    print(f"ledger height {gw.ledger.height}, channel {cfg.channel!r}")

    step("register alice (data owner) and bob (data user) — keys stay local")
    alice = UserClient(api, UserKeys.generate())
    alice.register(role="DO", phone="13800000001", name="alice", password="pw-a")
    alice.login("13800000001", "pw-a")
    bob = UserClient(api, UserKeys.generate(owner=False))
    bob.register(role="DU", phone="13900000002", name="bob", password="pw-b",
                 institution_code="H-001")
    bob.login("13900000002", "pw-b")
    print(f"alice pub {alice.keys.sign.public.hex()[:16]}…")
    print(f"bob   pub {bob.keys.sign.public.hex()[:16]}…")

    step("alice uploads a public health record (small, goes on-chain)")
    entity = "110101199001010042"
    record = {
        "entity_id": entity, "name": "alice", "birth_day": "1990-01-01",
        "cert_no": "C00042", "phone": "13800000001", "health_code": "green",
        "nucleic_acid_result": "negative",
        "owner_pub": alice.keys.sign.public.hex(),
        "updated_at": "2026-08-26T00:00:00+00:00",
    }
    out = alice.upload_record(record)
    print(f"tx {out['tx_id'][:16]}… committed in block {out['block']}")

    step("alice uploads a private dataset — encrypted client-side, "
         "root anchored on-chain")
    document = (b"admission note: persistent fever, bilateral infiltrates, "
                b"started antivirals and oxygen support. " * 30)
    up = alice.upload_dataset(entity, {"note-01": document},
                              {"note-01": ["fever", "antivirals"]})
    print(f"dataset v{up['index_version']}, root {up['merkle_root'][:16]}…, "
          f"anchor tx in block {up['block']}")

    step("bob asks for access; alice sees it in her inbox")
    bob.request_share(entity, {"record_ids": [entity]}, now - 60, now + 3600)
    inbox = alice.list_requests()["inbox"]
    print(f"request {inbox[0]['request_id']} from {inbox[0]['requester_phone']}")

    step("alice approves: blinded rekey exchange, rekey registration, "
         "signed grant with a searchable-keyword scope")
    flow = alice.approve_request(inbox[0], bob, keywords=["fever"])
    print(f"grant {flow['grant_serial'][:16]}… rekey {flow['rekey_ref'][:16]}…")

    step("bob searches the encrypted index and fetches the share copy")
    found = bob.search(entity, alice.trapdoor_for("fever"))
    print(f"matching docs: {found['doc_ids']}")
    [object_id] = found["object_ids"]
    plain = bob.fetch_plaintext(object_id)
    print(f"decrypted {len(plain)} bytes; digest match: "
          f"{hash_data(plain) == hash_data(document)}")

    step("bob verifies a chunk against the on-chain anchor")
    fetched = bob.fetch(object_id)
    chunk0 = base64.b64decode(fetched["chunks"][0])
    print(f"chunk 0 proof verified: {bob.verify_chunk(object_id, 0, chunk0)}")

    step("the audit trail saw everything")
    for entry in api.get("/audit", token=alice.token)["entries"][-6:]:
        print(f"  {entry['action']:16s} {entry['outcome']:12s} "
              f"scope={entry['scope'][:24]}")

    print(f"\ndone — state persisted under {workdir}")


if __name__ == "__main__":
    main()
