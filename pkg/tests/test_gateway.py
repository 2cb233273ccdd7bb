"""Service-level gateway behavior: accounts, public records with
grant-guarded reads, private datasets anchored on-chain, the blinded
rekey exchange, delegated fetches, proofs, audit, and persistence.

The gateway under test never holds user secrets: every test builds key
material client-side and hands over only public halves, ciphertexts,
blinded exponents, and signed grants.
"""

import base64
import json
import random
from types import SimpleNamespace

import pytest

from healthchain import merkle, pre, sse
from healthchain.ca import grant_access
from healthchain.client import build_dataset_body, decrypt_chunks, UserKeys
from healthchain.config import GatewayConfig
from healthchain.contract import PrivateAnchor, anchor_key
from healthchain.crypto import Digest
from healthchain.errors import (
    AuthRequired,
    BadCredentials,
    BadExponent,
    DuplicateDocId,
    DuplicateEntity,
    Expired,
    Forbidden,
    MalformedRecord,
    MissingInstitution,
    MissingReKey,
    NotFound,
    NotYetValid,
    OutOfScope,
    PendingReview,
    PhoneTaken,
    RootMismatch,
    ScopeNotOwned,
    SizeExceeded,
    StaleVersion,
    UnknownIndex,
    UnknownObject,
)
from healthchain.gateway import Gateway
from healthchain.ledger import ManualClock
from healthchain.store import chunk_leaf_digest

from support import sample_record

T0 = 1_760_000_000
HOUR = 3600
ADMIN_PHONE = "10000000000"
ADMIN_PW = "admin-pw"

b64d = base64.b64decode


@pytest.fixture
def world(tmp_path):
    cfg = GatewayConfig(data_dir=tmp_path / "gw", max_message_count=1)
    clock = ManualClock(float(T0))
    gw = Gateway.init_genesis(cfg, admin_phone=ADMIN_PHONE, admin_name="root",
                              admin_password=ADMIN_PW,
                              rng=random.Random(7).randbytes, clock=clock)
    return SimpleNamespace(gw=gw, cfg=cfg, clock=clock)


def make_user(world, phone, role, seed, institution_code=None, name=None):
    keys = UserKeys.generate(rng=random.Random(seed).randbytes,
                             params_id=world.cfg.params_id, owner=(role == "DO"))
    body = {
        "role": role,
        "phone": phone,
        "name": name or f"user-{phone[-4:]}",
        "password": f"pw-{phone}",
        "custody": "local",
        "sign_public": keys.sign.public.hex(),
        "pre_public": f"{keys.pre_pair.public:x}",
    }
    if institution_code:
        body["institution_code"] = institution_code
    world.gw.register(body)
    token = world.gw.login(phone, f"pw-{phone}")["token"]
    return SimpleNamespace(keys=keys, token=token, phone=phone,
                           pub=keys.sign.public.hex())


@pytest.fixture
def alice(world):
    return make_user(world, "13800000001", "DO", seed=11, name="alice")


@pytest.fixture
def bob(world):
    return make_user(world, "13900000002", "DU", seed=22,
                     institution_code="H-001", name="bob")


def record_for(user, i=1, **overrides):
    return sample_record(i, owner_pub=user.pub, **overrides)


def stored(record):
    """What the chain hands back: the input plus defaulted fields."""
    return dict(record, doc_type="health")


def upload_record(world, user, record, **kw):
    return world.gw.upload_public(user.token, {"record": record, **kw})


def make_dataset(world, user, entity_id, docs, keywords, **kw):
    rng = random.Random(hash(entity_id) & 0xFFFF).randbytes
    body = build_dataset_body(user.keys, docs, keywords, rng, **kw)
    return world.gw.upload_private(user.token, entity_id, body), body


def run_share_flow(world, alice, bob, entity_id, keywords=(), start=None, end=None):
    """Request -> blinded exchange -> rekey -> signed grant. Returns the
    grant serial and rekey ref."""
    gw = world.gw
    start = T0 if start is None else start
    end = T0 + HOUR if end is None else end
    req = gw.create_share_request(
        bob.token, {"entity_id": entity_id, "scope": {"record_ids": [entity_id]},
                    "start": start, "end": end})

    params = pre.get_params(world.cfg.params_id)
    rng = random.Random(33).randbytes
    v, x = pre.rekey_exchange_init(alice.keys.pre_pair.secret, params, rng)
    ex = gw.start_exchange(alice.token, {"request_id": req["request_id"],
                                         "params_id": params.params_id, "x": f"{x:x}"})
    seen = gw.get_exchange(bob.token, ex["exchange_id"])
    y = pre.rekey_exchange_blind(bob.keys.pre_pair.secret, int(seen["x"], 16), params)
    gw.respond_exchange(bob.token, ex["exchange_id"], {"y": f"{y:x}"})
    answered = gw.get_exchange(alice.token, ex["exchange_id"])
    rk = pre.rekey_exchange_finish(v, int(answered["y"], 16), params)
    ref = gw.register_rekey(alice.token, {
        "params_id": params.params_id, "rk": f"{rk.rk:x}",
        "grantor_pub": alice.pub, "grantee_pub": bob.pub})["rekey_ref"]

    scope = {"record_ids": [entity_id]}
    if keywords:
        scope["trapdoors"] = sorted(sse.trapdoor(alice.keys.sse_key, k).hex
                                    for k in keywords)
    grant = grant_access(alice.keys.sign.secret, alice.pub, bob.pub, scope,
                         start, end, owner_of=lambda _r: alice.pub, rekey_ref=ref)
    serial = gw.register_grant(
        alice.token, {"grant": grant.to_doc(), "request_id": req["request_id"]})["serial"]
    return SimpleNamespace(serial=serial, rekey_ref=ref,
                           request_id=req["request_id"], grant=grant)


# -- accounts -----------------------------------------------------------------


def test_register_login_identity(world, alice):
    doc = world.gw.login(alice.phone, f"pw-{alice.phone}")
    assert doc["role"] == "DO" and doc["name"] == "alice"
    assert doc["token"] != alice.token  # fresh token per login
    account = world.gw.directory.accounts[alice.phone]
    assert account.sign_public == alice.pub
    assert account.cert_serial in world.gw.directory.ca.issued


def test_register_duplicate_phone(world, alice):
    with pytest.raises(PhoneTaken):
        make_user(world, alice.phone, "DO", seed=99)


def test_data_user_requires_institution(world):
    with pytest.raises(MissingInstitution):
        make_user(world, "13900000009", "DU", seed=5)


def test_bad_credentials(world, alice):
    with pytest.raises(BadCredentials):
        world.gw.login(alice.phone, "wrong")


def test_infrastructure_role_requires_review(world):
    keys = UserKeys.generate(rng=random.Random(3).randbytes, owner=False)
    body = {"role": "MIFS", "phone": "15000000001", "name": "infra",
            "password": "pw", "custody": "local",
            "sign_public": keys.sign.public.hex(),
            "pre_public": f"{keys.pre_pair.public:x}"}
    with pytest.raises(PendingReview):
        world.gw.register(body)
    with pytest.raises(PendingReview):
        world.gw.login("15000000001", "pw")

    admin_token = world.gw.login(ADMIN_PHONE, ADMIN_PW)["token"]
    out = world.gw.approve(admin_token, "15000000001")
    assert out["certificate"]["subject_id"] == "15000000001"
    assert world.gw.login("15000000001", "pw")["token"]


def test_approval_requires_admin(world, alice):
    keys = UserKeys.generate(rng=random.Random(4).randbytes, owner=False)
    with pytest.raises(PendingReview):
        world.gw.register({"role": "DDBS", "phone": "15000000002", "name": "x",
                           "password": "pw", "custody": "local",
                           "sign_public": keys.sign.public.hex(),
                           "pre_public": f"{keys.pre_pair.public:x}"})
    with pytest.raises(Forbidden):
        world.gw.approve(alice.token, "15000000002")


def test_session_expiry(world, alice):
    world.gw.get_audit(alice.token)  # valid now
    world.clock.advance(world.cfg.session_ttl + 1)
    with pytest.raises(AuthRequired):
        world.gw.get_audit(alice.token)


def test_bad_token_rejected(world):
    with pytest.raises(AuthRequired):
        world.gw.get_audit("not-a-token")


# -- public records --------------------------------------------------------------


def test_upload_and_query_latest(world, alice):
    record = record_for(alice, 1)
    out = upload_record(world, alice, record)
    assert out["op"] == "add_record"
    got = world.gw.query_latest(alice.token, record["cert_no"], record["name"])
    assert got["record"] == stored(record)
    # the transaction really is on-chain
    assert out["tx_id"] in world.gw.ledger.committed


def test_upload_rejects_foreign_owner(world, alice, bob):
    record = record_for(alice, 2)
    with pytest.raises(Forbidden):
        upload_record(world, bob, record)


def test_upload_respects_onchain_threshold(world, alice):
    record = record_for(alice, 3, name="n" * 2000)
    with pytest.raises(SizeExceeded):
        upload_record(world, alice, record)


def test_explicit_add_of_existing_entity_conflicts(world, alice):
    record = record_for(alice, 4)
    upload_record(world, alice, record)
    with pytest.raises(DuplicateEntity):
        upload_record(world, alice, record, mode="add")


def test_update_flow_builds_history(world, alice):
    record = record_for(alice, 5)
    first = upload_record(world, alice, record)
    updated = dict(record, health_code="red", nucleic_acid_result="positive")
    second = upload_record(world, alice, updated)
    assert (first["op"], second["op"]) == ("add_record", "update_record")

    got = world.gw.query_latest(alice.token, record["cert_no"], record["name"])
    assert got["record"]["health_code"] == "red"

    entries = world.gw.query_history(alice.token, record["entity_id"])["entries"]
    assert [e["record"]["health_code"] for e in entries] == ["green", "red"]
    assert entries[0]["tx_id"] == first["tx_id"]
    assert entries[1]["tx_id"] == second["tx_id"]


def test_update_of_foreign_record_forbidden(world, alice, bob):
    record = record_for(alice, 6)
    upload_record(world, alice, record)
    hijack = dict(record, owner_pub=bob.pub)
    with pytest.raises(Forbidden):
        upload_record(world, bob, hijack, mode="update")


def test_query_latest_not_found(world, alice):
    with pytest.raises(NotFound):
        world.gw.query_latest(alice.token, "C99999", "nobody")


def test_reads_by_strangers_need_grants(world, alice, bob):
    record = record_for(alice, 7)
    upload_record(world, alice, record)
    with pytest.raises(OutOfScope):
        world.gw.query_latest(bob.token, record["cert_no"], record["name"])
    with pytest.raises(OutOfScope):
        world.gw.query_history(bob.token, record["entity_id"])

    grant = grant_access(alice.keys.sign.secret, alice.pub, bob.pub,
                         {"record_ids": [record["entity_id"]]}, T0, T0 + HOUR,
                         owner_of=lambda _r: alice.pub)
    world.gw.register_grant(alice.token, {"grant": grant.to_doc()})
    got = world.gw.query_latest(bob.token, record["cert_no"], record["name"])
    assert got["record"] == stored(record)
    history = world.gw.query_history(bob.token, record["entity_id"])["entries"]
    assert len(history) == 1


def test_expired_grant_refused_with_exact_code(world, alice, bob):
    record = record_for(alice, 8)
    upload_record(world, alice, record)
    grant = grant_access(alice.keys.sign.secret, alice.pub, bob.pub,
                         {"record_ids": [record["entity_id"]]}, T0, T0 + 100,
                         owner_of=lambda _r: alice.pub)
    world.gw.register_grant(alice.token, {"grant": grant.to_doc()})
    world.clock.advance(200)
    with pytest.raises(Expired):
        world.gw.query_latest(bob.token, record["cert_no"], record["name"])


def test_future_grant_refused_not_yet_valid(world, alice, bob):
    record = record_for(alice, 9)
    upload_record(world, alice, record)
    grant = grant_access(alice.keys.sign.secret, alice.pub, bob.pub,
                         {"record_ids": [record["entity_id"]]},
                         T0 + HOUR, T0 + 2 * HOUR, owner_of=lambda _r: alice.pub)
    world.gw.register_grant(alice.token, {"grant": grant.to_doc()})
    with pytest.raises(NotYetValid):
        world.gw.query_latest(bob.token, record["cert_no"], record["name"])


def test_grant_for_unowned_scope_rejected(world, alice, bob):
    mallory_record = record_for(bob, 10)  # bob does not own record uploads
    grant = grant_access(alice.keys.sign.secret, alice.pub, bob.pub,
                         {"record_ids": ["not-alices-entity"]}, T0, T0 + HOUR,
                         owner_of=lambda _r: alice.pub)
    with pytest.raises(ScopeNotOwned):
        world.gw.register_grant(alice.token, {"grant": grant.to_doc()})


# -- private datasets ----------------------------------------------------------------


DOCS = {
    "visit-01": b"day one: fever and cough, prescribed rest" * 20,
    "visit-02": b"day seven: negative test, symptoms resolved" * 20,
}
KEYWORDS = {"visit-01": ["fever", "cough"], "visit-02": ["negative", "resolved"]}
ENTITY = "110101199001011234"


def test_private_upload_anchors_root(world, alice):
    out, body = make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    assert out["index_version"] == 1
    assert out["merkle_root"] == body["merkle_root"]

    raw = world.gw.ledger.state.get(anchor_key(ENTITY))
    anchor = PrivateAnchor.from_bytes(raw)
    assert anchor.merkle_root == body["merkle_root"]
    assert anchor.index_version == 1
    assert out["anchor_tx_id"] in world.gw.ledger.committed

    manifest = world.gw.manifests[ENTITY]
    assert manifest.owner_pub == alice.pub
    assert {d.doc_id for d in manifest.docs} == set(DOCS)
    # every chunk blob and the index blob are retrievable
    for doc in manifest.docs:
        for obj in (doc.owner_object, doc.share_object):
            for digest in obj.chunk_digests:
                assert world.gw.blobs.exists(digest)
    assert world.gw.blobs.exists(manifest.index_blob)


def test_private_upload_requires_matching_root(world, alice):
    body = build_dataset_body(alice.keys, DOCS, KEYWORDS,
                              random.Random(1).randbytes)
    body["merkle_root"] = "00" * 32
    with pytest.raises(RootMismatch):
        world.gw.upload_private(alice.token, ENTITY, body)
    assert ENTITY not in world.gw.manifests
    assert world.gw.ledger.state.get(anchor_key(ENTITY)) is None


def test_private_upload_version_rules(world, alice):
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    with pytest.raises(StaleVersion):
        make_dataset(world, alice, ENTITY, DOCS, KEYWORDS, index_version=1)
    out, _ = make_dataset(world, alice, ENTITY, DOCS, KEYWORDS, index_version=5)
    assert out["index_version"] == 5  # versions may skip, never repeat
    out, _ = make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    assert out["index_version"] == 6  # default: current + 1


def test_private_upload_rejects_duplicate_doc_ids(world, alice):
    body = build_dataset_body(alice.keys, DOCS, KEYWORDS,
                              random.Random(2).randbytes)
    body["docs"].append(body["docs"][0])
    with pytest.raises(DuplicateDocId):
        world.gw.upload_private(alice.token, ENTITY, body)


def test_private_upload_rejects_cross_group_wraps(world, alice):
    body = build_dataset_body(alice.keys, DOCS, KEYWORDS,
                              random.Random(3).randbytes)
    body["params_id"] = "desk-p23"
    with pytest.raises(MalformedRecord):
        world.gw.upload_private(alice.token, ENTITY, body)


def test_private_upload_is_owner_only(world, alice, bob):
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    body = build_dataset_body(alice.keys, DOCS, KEYWORDS,
                              random.Random(4).randbytes)
    with pytest.raises(Forbidden):
        world.gw.upload_private(bob.token, ENTITY, body)


def test_owner_search_returns_owner_objects(world, alice):
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    manifest = world.gw.manifests[ENTITY]
    td = sse.trapdoor(alice.keys.sse_key, "fever").hex
    out = world.gw.search_private(alice.token, ENTITY, {"trapdoor": td})
    assert out["doc_ids"] == ["visit-01"]
    doc = next(d for d in manifest.docs if d.doc_id == "visit-01")
    assert out["object_ids"] == [doc.owner_object.object_id]

    absent = sse.trapdoor(alice.keys.sse_key, "unrelated").hex
    empty = world.gw.search_private(alice.token, ENTITY, {"trapdoor": absent})
    assert empty["doc_ids"] == [] and empty["object_ids"] == []


def test_search_unknown_entity(world, alice):
    td = sse.trapdoor(alice.keys.sse_key, "fever").hex
    with pytest.raises(UnknownIndex):
        world.gw.search_private(alice.token, "nobody", {"trapdoor": td})


def test_search_rejects_malformed_trapdoor(world, alice):
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    with pytest.raises(MalformedRecord):
        world.gw.search_private(alice.token, ENTITY, {"trapdoor": "zz"})


# -- sharing ---------------------------------------------------------------------------


def test_full_share_flow_grantee_reads_plaintext(world, alice, bob):
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    flow = run_share_flow(world, alice, bob, ENTITY, keywords=["fever", "negative"])

    td = sse.trapdoor(alice.keys.sse_key, "fever").hex
    found = world.gw.search_private(bob.token, ENTITY, {"trapdoor": td})
    assert found["doc_ids"] == ["visit-01"]
    [object_id] = found["object_ids"]

    manifest = world.gw.manifests[ENTITY]
    doc = next(d for d in manifest.docs if d.doc_id == "visit-01")
    assert object_id == doc.share_object.object_id  # grantees see share copies

    fetched = world.gw.share_fetch(bob.token, {"object_id": object_id})
    assert fetched["copy"] == "share" and fetched["transformed"] is True
    wrap = pre.PreCiphertext.from_wire(fetched["key_wrap"], transformed=True)
    key = pre.unwrap_key(bob.keys.pre_pair.secret, wrap)
    plain = decrypt_chunks(key, [b64d(c) for c in fetched["chunks"]])
    assert plain == DOCS["visit-01"]


def test_owner_fetches_own_copy(world, alice):
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    manifest = world.gw.manifests[ENTITY]
    doc = next(d for d in manifest.docs if d.doc_id == "visit-02")
    fetched = world.gw.share_fetch(alice.token, {"object_id": doc.owner_object.object_id})
    assert fetched["copy"] == "owner" and fetched["transformed"] is False
    plain = decrypt_chunks(alice.keys.owner_sym, [b64d(c) for c in fetched["chunks"]])
    assert plain == DOCS["visit-02"]


def test_grantee_cannot_fetch_owner_copy(world, alice, bob):
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    run_share_flow(world, alice, bob, ENTITY, keywords=["fever"])
    manifest = world.gw.manifests[ENTITY]
    owner_object = manifest.docs[0].owner_object.object_id
    with pytest.raises(Forbidden):
        world.gw.share_fetch(bob.token, {"object_id": owner_object})


def test_fetch_without_grant_out_of_scope(world, alice, bob):
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    share_object = world.gw.manifests[ENTITY].docs[0].share_object.object_id
    with pytest.raises(OutOfScope):
        world.gw.share_fetch(bob.token, {"object_id": share_object})


def test_fetch_with_grant_but_no_rekey(world, alice, bob):
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    grant = grant_access(alice.keys.sign.secret, alice.pub, bob.pub,
                         {"record_ids": [ENTITY]}, T0, T0 + HOUR,
                         owner_of=lambda _r: alice.pub)
    world.gw.register_grant(alice.token, {"grant": grant.to_doc()})
    share_object = world.gw.manifests[ENTITY].docs[0].share_object.object_id
    with pytest.raises(MissingReKey):
        world.gw.share_fetch(bob.token, {"object_id": share_object})


def test_search_scope_is_per_trapdoor(world, alice, bob):
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    run_share_flow(world, alice, bob, ENTITY, keywords=["fever"])
    ok = sse.trapdoor(alice.keys.sse_key, "fever").hex
    assert world.gw.search_private(bob.token, ENTITY, {"trapdoor": ok})["doc_ids"]
    not_granted = sse.trapdoor(alice.keys.sse_key, "negative").hex
    with pytest.raises(OutOfScope):
        world.gw.search_private(bob.token, ENTITY, {"trapdoor": not_granted})


def test_exchange_is_private_to_parties(world, alice, bob):
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    req = world.gw.create_share_request(
        bob.token, {"entity_id": ENTITY, "scope": {"record_ids": [ENTITY]},
                    "start": T0, "end": T0 + HOUR})
    params = pre.get_params(world.cfg.params_id)
    v, x = pre.rekey_exchange_init(alice.keys.pre_pair.secret, params,
                                   random.Random(5).randbytes)
    ex = world.gw.start_exchange(alice.token, {"request_id": req["request_id"],
                                               "params_id": params.params_id,
                                               "x": f"{x:x}"})
    eve = make_user(world, "13700000003", "DU", seed=44, institution_code="H-002")
    with pytest.raises(Forbidden):
        world.gw.get_exchange(eve.token, ex["exchange_id"])
    with pytest.raises(Forbidden):
        world.gw.respond_exchange(eve.token, ex["exchange_id"], {"y": "2"})
    # only the named grantor may start one
    with pytest.raises(Forbidden):
        world.gw.start_exchange(bob.token, {"request_id": req["request_id"],
                                            "params_id": params.params_id, "x": "2"})


def test_exchange_rejects_out_of_range_values(world, alice, bob):
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    req = world.gw.create_share_request(
        bob.token, {"entity_id": ENTITY, "scope": {"record_ids": [ENTITY]},
                    "start": T0, "end": T0 + HOUR})
    params = pre.get_params(world.cfg.params_id)
    with pytest.raises(BadExponent):
        world.gw.start_exchange(alice.token, {"request_id": req["request_id"],
                                              "params_id": params.params_id,
                                              "x": f"{params.q:x}"})


def test_rekey_registration_guards(world, alice, bob):
    params = pre.get_params(world.cfg.params_id)
    with pytest.raises(Forbidden):  # grantor must be the session identity
        world.gw.register_rekey(bob.token, {"params_id": params.params_id,
                                            "rk": "2", "grantor_pub": alice.pub,
                                            "grantee_pub": bob.pub})
    with pytest.raises(BadExponent):
        world.gw.register_rekey(alice.token, {"params_id": params.params_id,
                                              "rk": "0", "grantor_pub": alice.pub,
                                              "grantee_pub": bob.pub})


def test_deny_share_request(world, alice, bob):
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    req = world.gw.create_share_request(
        bob.token, {"entity_id": ENTITY, "scope": {"record_ids": [ENTITY]},
                    "start": T0, "end": T0 + HOUR})
    with pytest.raises(Forbidden):  # requester cannot answer their own ask
        world.gw.deny_share_request(bob.token, req["request_id"])
    world.gw.deny_share_request(alice.token, req["request_id"])
    inbox = world.gw.list_share_requests(alice.token)["inbox"]
    assert inbox[0]["status"] == "denied"
    outbox = world.gw.list_share_requests(bob.token)["outbox"]
    assert outbox[0]["status"] == "denied"


def test_granted_request_is_marked(world, alice, bob):
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    flow = run_share_flow(world, alice, bob, ENTITY, keywords=["fever"])
    outbox = world.gw.list_share_requests(bob.token)["outbox"]
    assert outbox[0]["status"] == "granted"
    assert outbox[0]["grant_serial"] == flow.serial
    # the requester learns the approved scope and window from the listing,
    # so granted trapdoor tags need no out-of-band channel
    tag = sse.trapdoor(alice.keys.sse_key, "fever").hex
    assert outbox[0]["granted_scope"]["trapdoors"] == [tag]
    assert outbox[0]["granted_window"] == [T0, T0 + HOUR]
    pending = world.gw.create_share_request(
        bob.token, {"entity_id": ENTITY, "scope": {}, "start": T0, "end": T0 + HOUR})
    fresh = [r for r in world.gw.list_share_requests(bob.token)["outbox"]
             if r["request_id"] == pending["request_id"]]
    assert "granted_scope" not in fresh[0]


# -- proofs ------------------------------------------------------------------------------


def test_merkle_path_verifies_against_anchored_root(world, alice, bob):
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    run_share_flow(world, alice, bob, ENTITY, keywords=["fever"])
    td = sse.trapdoor(alice.keys.sse_key, "fever").hex
    [object_id] = world.gw.search_private(bob.token, ENTITY, {"trapdoor": td})["object_ids"]
    fetched = world.gw.share_fetch(bob.token, {"object_id": object_id})

    for i, chunk_b64 in enumerate(fetched["chunks"]):
        chunk = b64d(chunk_b64)
        proof_doc = world.gw.merkle_path(bob.token, object_id, i)
        assert proof_doc["anchored_root"] == fetched["merkle_root"]
        proof = merkle.MerkleProof.from_wire(proof_doc["proof"])
        root = Digest.from_hex(proof_doc["anchored_root"])
        assert merkle.verify(root, chunk_leaf_digest(chunk), proof)


def test_tampered_blob_fails_verification(world, alice):
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    manifest = world.gw.manifests[ENTITY]
    obj = manifest.docs[0].owner_object
    digest = obj.chunk_digests[0]
    path = world.gw.blobs._path(digest)
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))

    fetched = world.gw.share_fetch(alice.token, {"object_id": obj.object_id})
    chunk = b64d(fetched["chunks"][0])
    proof_doc = world.gw.merkle_path(alice.token, obj.object_id, 0)
    proof = merkle.MerkleProof.from_wire(proof_doc["proof"])
    root = Digest.from_hex(proof_doc["anchored_root"])
    assert not merkle.verify(root, chunk_leaf_digest(chunk), proof)


def test_proof_for_unknown_object(world, alice):
    with pytest.raises(UnknownObject):
        world.gw.merkle_path(alice.token, "00" * 32, 0)


# -- audit --------------------------------------------------------------------------------


def test_every_data_operation_is_audited(world, alice, bob):
    record = record_for(alice, 11)
    upload_record(world, alice, record)
    with pytest.raises(OutOfScope):
        world.gw.query_latest(bob.token, record["cert_no"], record["name"])

    entries = world.gw.get_audit(alice.token)["entries"]
    actions = [(e["action"], e["outcome"]) for e in entries]
    assert ("add_record", "ok") in actions
    assert ("query_latest", "OutOfScope") in actions
    alice_serial = world.gw.directory.accounts[alice.phone].cert_serial
    writer = next(e for e in entries if e["action"] == "add_record")
    assert writer["actor"] == alice_serial


def test_grant_serial_lands_in_audit_trail(world, alice, bob):
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    flow = run_share_flow(world, alice, bob, ENTITY, keywords=["fever"])
    td = sse.trapdoor(alice.keys.sse_key, "fever").hex
    [object_id] = world.gw.search_private(bob.token, ENTITY, {"trapdoor": td})["object_ids"]
    world.gw.share_fetch(bob.token, {"object_id": object_id})

    entries = world.gw.get_audit(alice.token)["entries"]
    fetches = [e for e in entries if e["action"] == "share_fetch" and e["outcome"] == "ok"]
    assert fetches and fetches[-1]["grant_serial"] == flow.serial


def test_key_audit_is_clean_on_fresh_system(world, alice):
    out = world.gw.get_audit(alice.token, kind="keys")
    assert out["findings"] == []


# -- persistence -----------------------------------------------------------------------------


def test_reload_preserves_everything(world, alice, bob, tmp_path):
    record = record_for(alice, 12)
    upload_record(world, alice, record)
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    flow = run_share_flow(world, alice, bob, ENTITY, keywords=["fever"])
    digest_before = world.gw.ledger.state_digest()
    audit_before = len(world.gw.get_audit(alice.token)["entries"])

    reopened = Gateway(world.cfg, rng=random.Random(99).randbytes, clock=world.clock)
    assert reopened.ledger.state_digest() == digest_before
    assert reopened.manifests[ENTITY].merkle_root == world.gw.manifests[ENTITY].merkle_root
    assert flow.serial in reopened.grants
    assert flow.rekey_ref in reopened.rekeys
    assert len(reopened.audit_log) == audit_before
    assert alice.phone in reopened.directory.accounts

    # sessions are ephemeral: the old token is gone, but login works
    with pytest.raises(AuthRequired):
        reopened.get_audit(alice.token)
    token = reopened.login(alice.phone, f"pw-{alice.phone}")["token"]

    # and the share flow still works end to end on the reopened gateway
    bob_token = reopened.login(bob.phone, f"pw-{bob.phone}")["token"]
    td = sse.trapdoor(alice.keys.sse_key, "fever").hex
    [object_id] = reopened.search_private(bob_token, ENTITY, {"trapdoor": td})["object_ids"]
    fetched = reopened.share_fetch(bob_token, {"object_id": object_id})
    wrap = pre.PreCiphertext.from_wire(fetched["key_wrap"], transformed=True)
    key = pre.unwrap_key(bob.keys.pre_pair.secret, wrap)
    assert decrypt_chunks(key, [b64d(c) for c in fetched["chunks"]]) == DOCS["visit-01"]


def test_gateway_refuses_uninitialized_data_dir(tmp_path):
    cfg = GatewayConfig(data_dir=tmp_path / "empty")
    with pytest.raises(ValueError, match="init-genesis"):
        Gateway(cfg)


def test_no_user_secrets_in_persisted_state(world, alice, bob):
    """The gateway's entire on-disk footprint must be free of user
    signing secrets, symmetric keys, index keys, and plaintext."""
    make_dataset(world, alice, ENTITY, DOCS, KEYWORDS)
    run_share_flow(world, alice, bob, ENTITY, keywords=["fever"])

    blobs = []
    for path in sorted(world.cfg.data_dir.rglob("*")):
        if path.is_file():
            blobs.append(path.read_bytes())
    everything = b"\n".join(blobs)

    secrets = [
        alice.keys.sign.secret.hex().encode(),
        bob.keys.sign.secret.hex().encode(),
        f"{alice.keys.pre_pair.secret:x}".encode(),
        f"{bob.keys.pre_pair.secret:x}".encode(),
        alice.keys.owner_sym.data.hex().encode(),
        alice.keys.owner_sym.data,
        alice.keys.sse_key.k_prf.hex().encode(),
        alice.keys.sse_key.k_prf,
    ]
    for secret in secrets:
        assert secret not in everything
    for plaintext in DOCS.values():
        assert plaintext not in everything
        assert base64.b64encode(plaintext) not in everything
    for keyword_list in KEYWORDS.values():
        for keyword in keyword_list:
            assert keyword.encode() not in everything
