"""HTTP surface: error envelope and status mapping, bearer handling,
and an end-to-end share flow driven purely through the API by the
client library (no gateway internals touched for the happy path).
"""

import base64
import random
from types import SimpleNamespace

import pytest
from fastapi.testclient import TestClient

from healthchain.api import create_app, status_for
from healthchain.client import ApiClient, ApiError, UserClient, UserKeys
from healthchain.config import GatewayConfig
from healthchain.gateway import Gateway
from healthchain.ledger import ManualClock

from support import sample_record

T0 = 1_760_000_000
HOUR = 3600
ADMIN_PHONE = "10000000000"
ADMIN_PW = "admin-pw"


@pytest.fixture
def world(tmp_path):
    cfg = GatewayConfig(data_dir=tmp_path / "gw", max_message_count=1)
    clock = ManualClock(float(T0))
    gw = Gateway.init_genesis(cfg, admin_phone=ADMIN_PHONE, admin_name="root",
                              admin_password=ADMIN_PW,
                              rng=random.Random(17).randbytes, clock=clock)
    http = TestClient(create_app(gw), raise_server_exceptions=False)
    return SimpleNamespace(gw=gw, cfg=cfg, clock=clock, http=http,
                           api=ApiClient(http))


def make_user(world, phone, role, seed, institution_code=None, name=None):
    keys = UserKeys.generate(rng=random.Random(seed).randbytes,
                             params_id=world.cfg.params_id, owner=(role == "DO"))
    user = UserClient(world.api, keys, rng=random.Random(seed + 1).randbytes)
    user.register(role=role, phone=phone, name=name or f"user-{seed}",
                  password=f"pw-{phone}", institution_code=institution_code)
    user.login(phone, f"pw-{phone}")
    return user


@pytest.fixture
def alice(world):
    return make_user(world, "13800000001", "DO", seed=101, name="alice")


@pytest.fixture
def bob(world):
    return make_user(world, "13900000002", "DU", seed=202,
                     institution_code="H-001", name="bob")


# -- envelope and status mapping ------------------------------------------------


def test_healthz_is_open(world):
    doc = world.api.get("/healthz")
    assert doc["status"] == "ok"
    assert doc["height"] == 1
    assert doc["channel"] == "healthchain"


def test_missing_token_is_401(world):
    resp = world.http.get("/audit")
    assert resp.status_code == 401
    assert resp.json() == {"code": "AuthRequired", "message": "missing bearer token"}


def test_wrong_scheme_is_401(world):
    resp = world.http.get("/audit", headers={"Authorization": "Basic abc"})
    assert resp.status_code == 401
    assert resp.json()["code"] == "AuthRequired"


def test_stale_token_is_401(world, alice):
    world.clock.advance(world.cfg.session_ttl + 1)
    resp = world.http.get("/audit", headers={"Authorization": f"Bearer {alice.token}"})
    assert resp.status_code == 401
    assert resp.json()["code"] == "AuthRequired"


def test_bad_credentials_is_401(world, alice):
    with pytest.raises(ApiError) as err:
        world.api.post("/login", body={"phone": "13800000001", "password": "nope"})
    assert err.value.status == 401 and err.value.code == "BadCredentials"


def test_duplicate_phone_is_409(world, alice):
    with pytest.raises(ApiError) as err:
        alice.register(role="DO", phone="13800000001", name="again", password="x")
    assert err.value.status == 409 and err.value.code == "PhoneTaken"


def test_unknown_entity_history_is_empty_not_error(world, alice):
    doc = alice.query_history("nobody")
    assert doc["entries"] == []


def test_not_found_is_404(world, alice):
    with pytest.raises(ApiError) as err:
        alice.query_latest("C404", "missing")
    assert err.value.status == 404 and err.value.code == "NotFound"


def test_missing_body_field_is_400(world):
    resp = world.http.post("/login", json={"phone": "1"})
    assert resp.status_code == 400
    assert resp.json()["code"] == "BadRequest"
    assert "password" in resp.json()["message"]


def test_non_object_body_is_400(world):
    resp = world.http.post("/login", json=["not", "a", "mapping"])
    assert resp.status_code == 400
    assert resp.json()["code"] == "BadRequest"


def test_oversized_record_is_413(world, alice):
    record = sample_record(1, owner_pub=alice.keys.sign.public.hex(), name="n" * 2000)
    with pytest.raises(ApiError) as err:
        alice.upload_record(record)
    assert err.value.status == 413 and err.value.code == "SizeExceeded"


def test_status_table_covers_domain_codes():
    assert status_for("AuthRequired") == 401
    assert status_for("OutOfScope") == 403
    assert status_for("UnknownObject") == 404
    assert status_for("StaleVersion") == 409
    assert status_for("TxTooLarge") == 413
    assert status_for("MalformedRecord") == 400  # default bucket


def test_pending_review_surfaces_through_http(world):
    keys = UserKeys.generate(rng=random.Random(9).randbytes, owner=False)
    user = UserClient(world.api, keys)
    with pytest.raises(ApiError) as err:
        user.register(role="MIFS", phone="15000000001", name="infra", password="pw")
    assert err.value.status == 403 and err.value.code == "PendingReview"

    admin = UserClient(world.api, keys)
    admin.login(ADMIN_PHONE, ADMIN_PW)
    out = world.api.post("/admin/approve", token=admin.token,
                         body={"phone": "15000000001"})
    assert out["certificate"]["subject_id"] == "15000000001"
    user.login("15000000001", "pw")


# -- records over HTTP -----------------------------------------------------------


def test_record_round_trip_over_http(world, alice):
    record = sample_record(2, owner_pub=alice.keys.sign.public.hex())
    out = alice.upload_record(record)
    assert out["op"] == "add_record" and out["block"] >= 1

    got = alice.query_latest(record["cert_no"], record["name"])["record"]
    assert got["entity_id"] == record["entity_id"]

    entries = alice.query_history(record["entity_id"])["entries"]
    assert len(entries) == 1 and entries[0]["tx_id"] == out["tx_id"]


def test_key_update_rotates_certificate(world, alice):
    before = world.gw.directory.accounts["13800000001"].cert_serial
    fresh = UserKeys.generate(rng=random.Random(55).randbytes)
    out = world.api.post("/keys/update", token=alice.token, body={
        "sign_public": fresh.sign.public.hex(),
        "pre_public": f"{fresh.pre_pair.public:x}",
    })
    after = out["certificate"]["serial"]
    assert after != before
    assert before in world.gw.directory.ca.revoked


# -- the full share story, API only -------------------------------------------------


DOCS = {
    "scan-01": b"ct thorax: ground glass opacities in both lungs " * 40,
    "note-02": b"recovered, discharged with negative nucleic acid " * 40,
}
KEYWORDS = {"scan-01": ["opacity", "ct"], "note-02": ["negative", "discharge"]}
ENTITY = "110101199001015678"


def test_share_flow_through_http_only(world, alice, bob):
    up = alice.upload_dataset(ENTITY, DOCS, KEYWORDS, chunk_size=512)
    assert up["index_version"] == 1 and len(up["objects"]) == 2

    req = bob.request_share(ENTITY, {"record_ids": [ENTITY]}, T0, T0 + HOUR)
    inbox = alice.list_requests()["inbox"]
    assert inbox[0]["request_id"] == req["request_id"]

    flow = alice.approve_request(inbox[0], bob, keywords=["opacity"])
    assert flow["grant_serial"]

    found = bob.search(ENTITY, alice.trapdoor_for("opacity"))
    assert found["doc_ids"] == ["scan-01"]
    [object_id] = found["object_ids"]

    plain = bob.fetch_plaintext(object_id)
    assert plain == DOCS["scan-01"]

    fetched = bob.fetch(object_id)
    for i, chunk_b64 in enumerate(fetched["chunks"]):
        assert bob.verify_chunk(object_id, i, base64.b64decode(chunk_b64))

    # owner reads their own copy through the same path
    mine = alice.search(ENTITY, alice.trapdoor_for("negative"))
    [owner_object] = mine["object_ids"]
    assert alice.fetch_plaintext(owner_object) == DOCS["note-02"]


def test_trapdoor_outside_grant_is_403(world, alice, bob):
    alice.upload_dataset(ENTITY, DOCS, KEYWORDS, chunk_size=512)
    req = bob.request_share(ENTITY, {"record_ids": [ENTITY]}, T0, T0 + HOUR)
    alice.approve_request(alice.list_requests()["inbox"][0], bob,
                          keywords=["opacity"])
    with pytest.raises(ApiError) as err:
        bob.search(ENTITY, alice.trapdoor_for("negative"))
    assert err.value.status == 403 and err.value.code == "OutOfScope"


def test_verify_chunk_detects_storage_tamper(world, alice, bob):
    alice.upload_dataset(ENTITY, DOCS, KEYWORDS, chunk_size=512)
    req = bob.request_share(ENTITY, {"record_ids": [ENTITY]}, T0, T0 + HOUR)
    alice.approve_request(alice.list_requests()["inbox"][0], bob,
                          keywords=["opacity"])
    [object_id] = bob.search(ENTITY, alice.trapdoor_for("opacity"))["object_ids"]
    fetched = bob.fetch(object_id)
    chunk0 = base64.b64decode(fetched["chunks"][0])
    assert bob.verify_chunk(object_id, 0, chunk0)

    digest = world.gw.manifests[ENTITY].find_object(object_id)[1].chunk_digests[0]
    path = world.gw.blobs._path(digest)
    raw = bytearray(path.read_bytes())
    raw[-1] ^= 0x01
    path.write_bytes(bytes(raw))

    refetched = bob.fetch(object_id)
    tampered = base64.b64decode(refetched["chunks"][0])
    assert not bob.verify_chunk(object_id, 0, tampered)


def test_exchange_listing_and_deny_over_http(world, alice, bob):
    alice.upload_dataset(ENTITY, DOCS, KEYWORDS, chunk_size=512)
    req = bob.request_share(ENTITY, {"record_ids": [ENTITY]}, T0, T0 + HOUR)
    exchange_id = alice.start_exchange(req["request_id"])
    mine = world.api.get("/share/exchange", token=bob.token)["exchanges"]
    assert [e["exchange_id"] for e in mine] == [exchange_id]
    assert mine[0]["state"] == "awaiting-grantee"

    bob.answer_exchange(exchange_id)
    assert world.api.get("/share/exchange", token=bob.token)["exchanges"][0]["state"] == "ready"

    req2 = bob.request_share(ENTITY, {"record_ids": [ENTITY]}, T0, T0 + HOUR)
    out = alice.deny_request(req2["request_id"])
    assert out["status"] == "denied"


def test_audit_readable_over_http(world, alice):
    record = sample_record(3, owner_pub=alice.keys.sign.public.hex())
    alice.upload_record(record)
    entries = world.api.get("/audit", token=alice.token)["entries"]
    assert any(e["action"] == "add_record" and e["outcome"] == "ok" for e in entries)
    findings = world.api.get("/audit", token=alice.token,
                             params={"kind": "keys"})["findings"]
    assert findings == []
