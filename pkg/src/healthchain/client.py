"""Client-side library: local key custody and the cryptographic half of
every flow — payload encryption, index building, key wrapping, the
blinded rekey exchange, grant signing, fetch decryption, and chunk
proof verification. The gateway only ever receives public keys,
ciphertexts, blinded exponents, and signed documents.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from . import merkle, pre, sse
from .ca import AccessGrant, grant_access
from .crypto import (
    NONCE_SIZE,
    Digest,
    RandomSource,
    SignKeyPair,
    SymKey,
    keygen_sign,
    sym_decrypt,
    sym_encrypt,
    system_rng,
)
from .store import DatasetDoc, OffchainObject, chunk_leaf_digest, dataset_root

b64e = lambda raw: base64.b64encode(raw).decode("ascii")
b64d = base64.b64decode

DEFAULT_CHUNK_SIZE = 4096


class ApiError(Exception):
    """Error envelope from the gateway: stable code + message."""

    def __init__(self, code: str, message: str, status: int):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.status = status


class ApiClient:
    """Thin JSON wrapper over an httpx-compatible client (a real
    httpx.Client or an in-process test client)."""

    def __init__(self, http):
        self.http = http

    def call(self, method: str, path: str, *, token: Optional[str] = None,
             body: Optional[dict] = None, params: Optional[dict] = None) -> dict:
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        resp = self.http.request(method, path, json=body, params=params, headers=headers)
        doc = resp.json()
        if resp.status_code >= 400:
            raise ApiError(doc.get("code", "Error"), doc.get("message", ""), resp.status_code)
        return doc

    def get(self, path, **kw):
        return self.call("GET", path, **kw)

    def post(self, path, **kw):
        return self.call("POST", path, **kw)


@dataclass
class UserKeys:
    """One user's locally held secrets. Owners carry the symmetric key
    for their private copies and the index key; pure readers only need
    the signing and re-encryption pairs."""

    sign: SignKeyPair
    pre_pair: pre.PreKeyPair
    owner_sym: Optional[SymKey] = None
    sse_key: Optional[sse.SseKey] = None

    @classmethod
    def generate(cls, rng: RandomSource = system_rng, params_id: str = "modp-2048",
                 owner: bool = True) -> "UserKeys":
        params = pre.get_params(params_id)
        return cls(
            sign=keygen_sign(rng),
            pre_pair=pre.keygen(params, rng),
            owner_sym=SymKey(rng(32)) if owner else None,
            sse_key=sse.keygen(rng) if owner else None,
        )

    def to_doc(self) -> dict:
        doc = {
            "version": 1,
            "sign": {"secret": self.sign.secret.hex(), "public": self.sign.public.hex()},
            "pre": {
                "params_id": self.pre_pair.params_id,
                "secret": f"{self.pre_pair.secret:x}",
                "public": f"{self.pre_pair.public:x}",
            },
        }
        if self.owner_sym is not None:
            doc["owner_sym"] = b64e(self.owner_sym.data)
        if self.sse_key is not None:
            doc["sse"] = {"k_prf": b64e(self.sse_key.k_prf), "k_enc": b64e(self.sse_key.k_enc)}
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "UserKeys":
        sign = SignKeyPair(
            secret=bytes.fromhex(doc["sign"]["secret"]),
            public=bytes.fromhex(doc["sign"]["public"]),
        )
        p = doc["pre"]
        pre_pair = pre.PreKeyPair(
            params_id=p["params_id"], secret=int(p["secret"], 16), public=int(p["public"], 16)
        )
        return cls(
            sign=sign,
            pre_pair=pre_pair,
            owner_sym=SymKey(b64d(doc["owner_sym"])) if "owner_sym" in doc else None,
            sse_key=sse.SseKey(b64d(doc["sse"]["k_prf"]), b64d(doc["sse"]["k_enc"]))
            if "sse" in doc else None,
        )

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_doc(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "UserKeys":
        return cls.from_doc(json.loads(Path(path).read_text()))


def split_chunks(payload: bytes, chunk_size: int = DEFAULT_CHUNK_SIZE) -> list[bytes]:
    if not payload:
        return [b""]
    return [payload[i : i + chunk_size] for i in range(0, len(payload), chunk_size)]


def encrypt_chunks(key: SymKey, chunks: list[bytes], rng: RandomSource) -> list[bytes]:
    return [sym_encrypt(key, c, rng(NONCE_SIZE)) for c in chunks]


def decrypt_chunks(key: SymKey, blobs: list[bytes]) -> bytes:
    return b"".join(sym_decrypt(key, blob) for blob in blobs)


def build_dataset_body(keys: UserKeys, docs: dict[str, bytes],
                       keywords: dict[str, list[str]], rng: RandomSource,
                       chunk_size: int = DEFAULT_CHUNK_SIZE,
                       index_version: Optional[int] = None) -> dict:
    """Assemble the private-dataset upload body entirely client-side:
    an owner-encrypted copy per doc, a share copy under a wrapped
    per-doc key, the encrypted keyword index, and the dataset root."""
    if keys.owner_sym is None or keys.sse_key is None:
        raise ValueError("building a dataset requires owner keys")
    params = pre.get_params(keys.pre_pair.params_id)
    built: list[DatasetDoc] = []
    wire_docs = []
    for doc_id in sorted(docs):
        plain_chunks = split_chunks(docs[doc_id], chunk_size)
        owner_chunks = encrypt_chunks(keys.owner_sym, plain_chunks, rng)
        wrap, share_key = pre.wrap_new_key(params, keys.pre_pair.public, rng)
        share_chunks = encrypt_chunks(share_key, plain_chunks, rng)
        created = ""  # object ids do not cover created_at; server stamps it
        built.append(
            DatasetDoc(
                doc_id=doc_id,
                owner_object=OffchainObject.from_chunks(owner_chunks, created),
                share_object=OffchainObject.from_chunks(share_chunks, created),
                key_wrap=wrap.to_wire(),
            )
        )
        wire_docs.append(
            {
                "doc_id": doc_id,
                "owner_chunks": [b64e(c) for c in owner_chunks],
                "share_chunks": [b64e(c) for c in share_chunks],
                "key_wrap": wrap.to_wire(),
            }
        )
    index = sse.build_index(
        keys.sse_key, [(doc_id, set(kws)) for doc_id, kws in sorted(keywords.items())]
    )
    body = {
        "params_id": keys.pre_pair.params_id,
        "index": index.to_wire(),
        "docs": wire_docs,
        "merkle_root": dataset_root(built).hex,
    }
    if index_version is not None:
        body["index_version"] = index_version
    return body


class UserClient:
    """One authenticated user driving the gateway API with local keys."""

    def __init__(self, api: ApiClient, keys: UserKeys, rng: RandomSource = system_rng):
        self.api = api
        self.keys = keys
        self.rng = rng
        self.token: Optional[str] = None
        self._blinds: dict[str, int] = {}  # exchange_id -> v, never sent

    # -- accounts -----------------------------------------------------------

    def register(self, *, role: str, phone: str, name: str, password: str,
                 institution_code: Optional[str] = None) -> dict:
        body = {
            "role": role,
            "phone": phone,
            "name": name,
            "password": password,
            "custody": "local",
            "sign_public": self.keys.sign.public.hex(),
            "pre_public": f"{self.keys.pre_pair.public:x}",
        }
        if institution_code:
            body["institution_code"] = institution_code
        return self.api.post("/register", body=body)

    def login(self, phone: str, password: str) -> str:
        doc = self.api.post("/login", body={"phone": phone, "password": password})
        self.token = doc["token"]
        return self.token

    # -- public records ------------------------------------------------------

    def upload_record(self, record: dict, mode: str = "auto",
                      event: Optional[str] = None) -> dict:
        body = {"record": record, "mode": mode}
        if event is not None:
            body["event"] = event
        return self.api.post("/records", token=self.token, body=body)

    def query_latest(self, cert_no: str, name: str) -> dict:
        return self.api.get("/records/latest", token=self.token,
                            params={"cert_no": cert_no, "name": name})

    def query_history(self, entity_id: str) -> dict:
        return self.api.get(f"/records/{entity_id}/history", token=self.token)

    # -- private datasets ------------------------------------------------------

    def upload_dataset(self, entity_id: str, docs: dict[str, bytes],
                       keywords: dict[str, list[str]],
                       chunk_size: int = DEFAULT_CHUNK_SIZE,
                       index_version: Optional[int] = None) -> dict:
        body = build_dataset_body(self.keys, docs, keywords, self.rng,
                                  chunk_size=chunk_size, index_version=index_version)
        return self.api.post(f"/private/{entity_id}/dataset", token=self.token, body=body)

    def trapdoor_for(self, keyword: str) -> str:
        if self.keys.sse_key is None:
            raise ValueError("only the index owner derives trapdoors")
        return sse.trapdoor(self.keys.sse_key, keyword).hex

    def search(self, entity_id: str, trapdoor_hex: str) -> dict:
        return self.api.post(f"/private/{entity_id}/search", token=self.token,
                             body={"trapdoor": trapdoor_hex})

    # -- share flow -------------------------------------------------------------

    def request_share(self, entity_id: str, scope: dict, start: int, end: int) -> dict:
        return self.api.post("/share/requests", token=self.token,
                             body={"entity_id": entity_id, "scope": scope,
                                   "start": start, "end": end})

    def list_requests(self) -> dict:
        return self.api.get("/share/requests", token=self.token)

    def deny_request(self, request_id: str) -> dict:
        return self.api.post(f"/share/requests/{request_id}/deny", token=self.token)

    def start_exchange(self, request_id: str) -> str:
        """Grantor step 1: post the blinded inverse of the secret."""
        params = pre.get_params(self.keys.pre_pair.params_id)
        v, x = pre.rekey_exchange_init(self.keys.pre_pair.secret, params, self.rng)
        doc = self.api.post("/share/exchange", token=self.token,
                            body={"request_id": request_id,
                                  "params_id": params.params_id, "x": f"{x:x}"})
        self._blinds[doc["exchange_id"]] = v
        return doc["exchange_id"]

    def answer_exchange(self, exchange_id: str) -> dict:
        """Grantee step: multiply in the grantee secret."""
        exchange = self.api.get(f"/share/exchange/{exchange_id}", token=self.token)
        params = pre.get_params(exchange["params_id"])
        y = pre.rekey_exchange_blind(self.keys.pre_pair.secret, int(exchange["x"], 16), params)
        return self.api.post(f"/share/exchange/{exchange_id}/respond",
                             token=self.token, body={"y": f"{y:x}"})

    def finish_exchange(self, exchange_id: str) -> str:
        """Grantor step 2: unblind and register the delegation key."""
        exchange = self.api.get(f"/share/exchange/{exchange_id}", token=self.token)
        if exchange.get("y") is None:
            raise ApiError("UnknownExchange", "grantee has not answered yet", 409)
        params = pre.get_params(exchange["params_id"])
        v = self._blinds.pop(exchange_id)
        rekey = pre.rekey_exchange_finish(v, int(exchange["y"], 16), params)
        doc = self.api.post("/share/rekeys", token=self.token,
                            body={"params_id": params.params_id, "rk": f"{rekey.rk:x}",
                                  "grantor_pub": exchange["grantor_pub"],
                                  "grantee_pub": exchange["grantee_pub"]})
        return doc["rekey_ref"]

    def sign_grant(self, grantee_pub: str, scope: dict, start: int, end: int,
                   rekey_ref: Optional[str] = None) -> AccessGrant:
        return grant_access(
            self.keys.sign.secret, self.keys.sign.public.hex(), grantee_pub,
            scope, start, end,
            owner_of=lambda _rid: self.keys.sign.public.hex(),  # server re-checks
            rekey_ref=rekey_ref,
        )

    def register_grant(self, grant: AccessGrant, request_id: Optional[str] = None) -> dict:
        body = {"grant": grant.to_doc()}
        if request_id is not None:
            body["request_id"] = request_id
        return self.api.post("/share/grants", token=self.token, body=body)

    def approve_request(self, request: dict, grantee: "UserClient",
                        keywords: Optional[list[str]] = None) -> dict:
        """Owner-side approval against an in-process grantee: runs the
        blinded exchange, registers the rekey, signs and posts the grant
        (scope = the request's, plus trapdoors for the given keywords)."""
        exchange_id = self.start_exchange(request["request_id"])
        grantee.answer_exchange(exchange_id)
        rekey_ref = self.finish_exchange(exchange_id)
        scope = dict(request["scope"])
        if keywords:
            scope = {
                "record_ids": scope.get("record_ids", []),
                "trapdoors": sorted(set(scope.get("trapdoors", []))
                                    | {self.trapdoor_for(k) for k in keywords}),
            }
        grant = self.sign_grant(request["requester_pub"], scope,
                                request["start"], request["end"], rekey_ref)
        result = self.register_grant(grant, request_id=request["request_id"])
        return {"grant_serial": result["serial"], "rekey_ref": rekey_ref,
                "scope": scope}

    # -- fetch + verify -----------------------------------------------------------

    def fetch(self, object_id: str, grant_serial: Optional[str] = None) -> dict:
        body = {"object_id": object_id}
        if grant_serial is not None:
            body["grant_serial"] = grant_serial
        return self.api.post("/share/fetch", token=self.token, body=body)

    def fetch_plaintext(self, object_id: str, grant_serial: Optional[str] = None) -> bytes:
        doc = self.fetch(object_id, grant_serial)
        blobs = [b64d(c) for c in doc["chunks"]]
        if doc["copy"] == "owner":
            if self.keys.owner_sym is None:
                raise ValueError("owner copy requires the owner symmetric key")
            return decrypt_chunks(self.keys.owner_sym, blobs)
        wrap = pre.PreCiphertext.from_wire(doc["key_wrap"],
                                           transformed=doc.get("transformed", False))
        share_key = pre.unwrap_key(self.keys.pre_pair.secret, wrap)
        return decrypt_chunks(share_key, blobs)

    def verify_chunk(self, object_id: str, chunk_index: int, chunk: bytes) -> bool:
        """Fetch the Merkle path and check the chunk against the
        on-chain anchored root."""
        doc = self.api.get(f"/objects/{object_id}/proof", token=self.token,
                           params={"chunk": chunk_index})
        root_hex = doc.get("anchored_root") or doc["merkle_root"]
        proof = merkle.MerkleProof.from_wire(doc["proof"])
        return merkle.verify(Digest.from_hex(root_hex), chunk_leaf_digest(chunk), proof)
