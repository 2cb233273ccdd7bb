"""Proxy re-encryption over a prime-order subgroup of Z_p*.

ElGamal-style bidirectional scheme: a ciphertext (c1, c2) =
(m*g^r, A^r) encrypted for public key A = g^a can be transformed by a
proxy holding the delegation key rk = b * a^-1 (mod q) into
(c1, c2^rk), which decrypts under b. The proxy sees neither m nor any
party's secret.

The delegation key is established through a blinded two-message
exchange so the delegator never learns the delegatee's secret and the
delegatee only sees a uniformly blinded value:

    initiator (secret a): v random, x = v * a^-1 mod q   -> send x
    delegatee (secret b): y = x * b mod q                -> send y
    initiator: rk = y * v^-1 mod q  ( = b * a^-1 )

Because rk(A->B) * rk(B->A) = 1 the scheme is bidirectional; v1
additionally forbids transforming an already-transformed ciphertext.

Payloads use hybrid encryption: the group element m is a fresh key
carrier (m = g^k), and the payload key is SHA-256 of m's fixed-width
big-endian encoding.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from .crypto import Digest, RandomSource, SymKey, hash_data, system_rng
from .encoding import int_from_bytes, int_to_bytes
from .errors import (
    AlreadyReencrypted,
    BadExponent,
    MalformedCiphertext,
    MessageNotInGroup,
    ZeroBlind,
)


@dataclass(frozen=True)
class GroupParams:
    """Safe-prime group: q | p-1, g generates the order-q subgroup."""

    params_id: str
    p: int
    q: int
    g: int

    @property
    def byte_len(self) -> int:
        return (self.p.bit_length() + 7) // 8

    def validate(self) -> None:
        import gmpy2

        if not gmpy2.is_prime(self.p):
            raise ValueError(f"{self.params_id}: p is not prime")
        if not gmpy2.is_prime(self.q):
            raise ValueError(f"{self.params_id}: q is not prime")
        if (self.p - 1) % self.q != 0:
            raise ValueError(f"{self.params_id}: q does not divide p-1")
        if self.g in (0, 1) or pow(self.g, self.q, self.p) != 1:
            raise ValueError(f"{self.params_id}: g does not generate an order-q subgroup")

    def in_group(self, x: int) -> bool:
        return 1 <= x < self.p and pow(x, self.q, self.p) == 1

    def encode_element(self, x: int) -> bytes:
        return int_to_bytes(x, self.byte_len)


# Desk-scale profile for tests and worked examples.
DESK_PARAMS = GroupParams(params_id="desk-p23", p=23, q=11, g=2)

# Default profile: the well-known 2048-bit MODP safe prime, with g = 2^2
# generating the quadratic-residue subgroup of order (p-1)/2.
_MODP_2048_P = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)
MODP_2048_PARAMS = GroupParams(
    params_id="modp-2048", p=_MODP_2048_P, q=(_MODP_2048_P - 1) // 2, g=4
)

_REGISTRY = {p.params_id: p for p in (DESK_PARAMS, MODP_2048_PARAMS)}
_VALIDATED: set[str] = set()


def get_params(params_id: str) -> GroupParams:
    try:
        params = _REGISTRY[params_id]
    except KeyError:
        raise ValueError(f"unknown group profile {params_id!r}") from None
    if params_id not in _VALIDATED:
        params.validate()
        _VALIDATED.add(params_id)
    return params


def rand_exponent(params: GroupParams, rng: RandomSource = system_rng) -> int:
    """Uniform in [1, q-1] by rejection sampling."""
    nbytes = (params.q.bit_length() + 7) // 8
    mask = (1 << params.q.bit_length()) - 1
    while True:
        candidate = int_from_bytes(rng(nbytes)) & mask
        if 1 <= candidate <= params.q - 1:
            return candidate


@dataclass(frozen=True)
class PreKeyPair:
    params_id: str
    secret: int  # a in [1, q-1]
    public: int  # A = g^a mod p

    @property
    def key_id(self) -> Digest:
        params = get_params(self.params_id)
        return hash_data(params.encode_element(self.public))


def keygen(params: GroupParams, rng: RandomSource = system_rng) -> PreKeyPair:
    a = rand_exponent(params, rng)
    return PreKeyPair(params_id=params.params_id, secret=a, public=pow(params.g, a, params.p))


@dataclass(frozen=True)
class PreCiphertext:
    """(c1, c2) = (m*g^r, A^r); ``transformed`` marks a re-encrypted copy
    (v1 forbids a second hop)."""

    params_id: str
    c1: int
    c2: int
    transformed: bool = False

    def to_wire(self) -> dict:
        params = get_params(self.params_id)
        return {
            "c1": params.encode_element(self.c1).hex(),
            "c2": params.encode_element(self.c2).hex(),
            "params_id": self.params_id,
        }

    @classmethod
    def from_wire(cls, obj: dict, transformed: bool = False) -> "PreCiphertext":
        return cls(
            params_id=obj["params_id"],
            c1=int(obj["c1"], 16),
            c2=int(obj["c2"], 16),
            transformed=transformed,
        )


@dataclass(frozen=True)
class ReKey:
    """Delegation value rk = b * a^-1 mod q. Travels only from the
    delegator to the gateway over the authenticated API."""

    params_id: str
    rk: int


def pre_encrypt(
    params: GroupParams, public: int, m: int, r: Optional[int] = None,
    rng: RandomSource = system_rng,
) -> PreCiphertext:
    """Encrypt subgroup element ``m`` under public key ``public``; ``r``
    is drawn fresh unless supplied (tests)."""
    if not params.in_group(m):
        raise MessageNotInGroup(f"message {m} is not in the order-q subgroup")
    if not params.in_group(public):
        raise MalformedCiphertext("public key is not in the order-q subgroup")
    if r is None:
        r = rand_exponent(params, rng)
    elif not 1 <= r <= params.q - 1:
        raise BadExponent(f"r must be in [1, {params.q - 1}]")
    c1 = (m * pow(params.g, r, params.p)) % params.p
    c2 = pow(public, r, params.p)
    return PreCiphertext(params_id=params.params_id, c1=c1, c2=c2)


def pre_decrypt(secret: int, ct: PreCiphertext) -> int:
    """m = c1 * (c2^(1/a))^-1 mod p."""
    params = get_params(ct.params_id)
    if not (0 < ct.c1 < params.p and 0 < ct.c2 < params.p):
        raise MalformedCiphertext("ciphertext components out of range")
    a_inv = pow(secret, -1, params.q)
    shared = pow(ct.c2, a_inv, params.p)
    return (ct.c1 * pow(shared, -1, params.p)) % params.p


def rekey(secret_a: int, secret_b: int, params: GroupParams) -> ReKey:
    """Direct delegation-key formula; requires both secrets, so it is
    only usable in tests or by a single party delegating between its own
    keys. The blinded exchange below is the production path."""
    rk = (secret_b * pow(secret_a, -1, params.q)) % params.q
    return ReKey(params_id=params.params_id, rk=rk)


def rekey_exchange_init(
    secret_a: int, params: GroupParams, rng: RandomSource = system_rng,
    v: Optional[int] = None, allow_unblinded: bool = False,
) -> tuple[int, int]:
    """Initiator (delegator) side: returns (v, x) with x = v * a^-1 mod q.
    ``v`` may be pinned by tests; v=1 sends a^-1 in the clear and is
    rejected unless explicitly allowed."""
    if v is None:
        v = rand_exponent(params, rng)
        while v == 1 and not allow_unblinded:
            v = rand_exponent(params, rng)
    if v % params.q == 0:
        raise ZeroBlind("blind must be nonzero mod q")
    if v == 1 and not allow_unblinded:
        raise ZeroBlind("unblinded exchange (v=1) refused")
    x = (v * pow(secret_a, -1, params.q)) % params.q
    if x == 0:
        raise ZeroBlind("degenerate exchange value")
    return v, x


def rekey_exchange_blind(secret_b: int, x: int, params: GroupParams) -> int:
    """Delegatee side: y = x * b mod q. Sees only the v-blinded value."""
    if x % params.q == 0:
        raise ZeroBlind("exchange value must be nonzero mod q")
    return (x * secret_b) % params.q


def rekey_exchange_finish(v: int, y: int, params: GroupParams) -> ReKey:
    """Initiator unblinds: rk = y * v^-1 mod q."""
    if y % params.q == 0:
        raise ZeroBlind("exchange response must be nonzero mod q")
    rk = (y * pow(v, -1, params.q)) % params.q
    return ReKey(params_id=params.params_id, rk=rk)


def reencrypt(rk: ReKey, ct: PreCiphertext) -> PreCiphertext:
    """(c1, c2) -> (c1, c2^rk): transforms a ciphertext for A into one
    for B without exposing the plaintext."""
    if ct.transformed:
        raise AlreadyReencrypted("multi-hop re-encryption is not supported")
    params = get_params(ct.params_id)
    if rk.params_id != ct.params_id:
        raise MalformedCiphertext("re-encryption key group mismatch")
    if not (0 < ct.c1 < params.p and 0 < ct.c2 < params.p):
        raise MalformedCiphertext("ciphertext components out of range")
    return replace(ct, c2=pow(ct.c2, rk.rk, params.p), transformed=True)


# -- hybrid payload keys -----------------------------------------------------

def wrap_new_key(
    params: GroupParams, public: int, rng: RandomSource = system_rng,
) -> tuple[PreCiphertext, SymKey]:
    """Draw a fresh key carrier m = g^k, wrap it for ``public``, and
    derive the payload key as SHA-256(m-bytes)."""
    k = rand_exponent(params, rng)
    m = pow(params.g, k, params.p)
    ct = pre_encrypt(params, public, m, rng=rng)
    return ct, derive_payload_key(params, m)


def unwrap_key(secret: int, ct: PreCiphertext) -> SymKey:
    params = get_params(ct.params_id)
    m = pre_decrypt(secret, ct)
    return derive_payload_key(params, m)


def derive_payload_key(params: GroupParams, m: int) -> SymKey:
    return SymKey(hash_data(params.encode_element(m)).data)
