"""Certificate authority and authorization: role-gated registration,
certificate issuance/revocation, key lifecycle with audit, bearer-token
sessions, and signed time-windowed access grants.

Times inside signed documents are integer Unix seconds (UTC); the grant
validity window is half-open [start, end). Passwords are stored only as
salted scrypt verifiers.
"""

from __future__ import annotations

import hashlib
import hmac as _hmac
from dataclasses import dataclass, field
from typing import Callable, Optional

from .crypto import (
    RandomSource,
    SignKeyPair,
    Signature,
    hash_data,
    keygen_sign,
    sign,
    system_rng,
    verify,
)
from .encoding import canonical_json
from .errors import (
    AuthRequired,
    BadCredentials,
    BadSignature,
    Expired,
    Forbidden,
    InvalidGrant,
    MissingInstitution,
    NotYetValid,
    OutOfScope,
    PendingReview,
    PhoneTaken,
    ScopeNotOwned,
    UnknownUser,
)

ROLES = ("DO", "DU", "MIFS", "DDBS", "Peer", "Orderer")
REVIEWED_ROLES = ("MIFS", "DDBS")  # infrastructure roles need admin approval
CUSTODY_MODES = ("local", "ca")

_SCRYPT = {"n": 2**14, "r": 8, "p": 1}


# -- certificates --------------------------------------------------------------

@dataclass(frozen=True)
class Certificate:
    subject_id: str
    role: str
    public: str  # hex verification key
    issued_at: int
    expires_at: int
    signature: str  # hex, issuer signature over the canonical body

    def body_doc(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "role": self.role,
            "public": self.public,
            "issued_at": self.issued_at,
            "expires_at": self.expires_at,
        }

    def body_bytes(self) -> bytes:
        return canonical_json(self.body_doc())

    @property
    def serial(self) -> str:
        return hash_data(self.body_bytes()).hex

    def to_doc(self) -> dict:
        return {**self.body_doc(), "signature": self.signature, "serial": self.serial}

    @classmethod
    def from_doc(cls, doc: dict) -> "Certificate":
        return cls(
            subject_id=doc["subject_id"],
            role=doc["role"],
            public=doc["public"],
            issued_at=int(doc["issued_at"]),
            expires_at=int(doc["expires_at"]),
            signature=doc["signature"],
        )


# -- key lifecycle ---------------------------------------------------------------

@dataclass
class KeyRecord:
    key_id: str  # hex digest of the public key
    owner: str  # account phone or infrastructure subject id
    created_at: int
    status: str = "active"  # active -> revoked -> destroyed
    revoked_at: Optional[int] = None
    destroyed_at: Optional[int] = None
    usage_log: list[tuple[int, str]] = field(default_factory=list)

    def log_use(self, ts: int, op: str) -> None:
        self.usage_log.append((ts, op))

    def revoke(self, ts: int) -> None:
        if self.status != "active":
            raise ValueError(f"cannot revoke a {self.status} key")
        self.status = "revoked"
        self.revoked_at = ts
        self.log_use(ts, "revoke")

    def destroy(self, ts: int) -> None:
        if self.status != "revoked":
            raise ValueError(f"cannot destroy a {self.status} key")
        self.status = "destroyed"
        self.destroyed_at = ts
        self.log_use(ts, "destroy")


@dataclass(frozen=True)
class AuditPolicy:
    max_age_seconds: int = 365 * 86400


@dataclass(frozen=True)
class AuditFinding:
    key_id: str
    owner: str
    status: str
    reasons: tuple[str, ...]  # aged | used-after-revoke | destroyed-referenced


class CertificateAuthority:
    """Single-root issuer: signs certificates, tracks revocations, and
    keeps the key-lifecycle records it audits."""

    def __init__(self, root: Optional[SignKeyPair] = None, rng: RandomSource = system_rng,
                 cert_ttl: int = 365 * 86400):
        self.rng = rng
        self.root = root or keygen_sign(rng)
        self.cert_ttl = cert_ttl
        self.issued: dict[str, Certificate] = {}
        self.revoked: set[str] = set()
        self.key_records: dict[str, KeyRecord] = {}

    def issue(self, subject_id: str, role: str, public_hex: str, now: int,
              ttl: Optional[int] = None) -> Certificate:
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}")
        body = {
            "subject_id": subject_id,
            "role": role,
            "public": public_hex,
            "issued_at": now,
            "expires_at": now + (ttl if ttl is not None else self.cert_ttl),
        }
        sig = sign(self.root.secret, canonical_json(body))
        cert = Certificate(**body, signature=sig.data.hex())
        self.issued[cert.serial] = cert
        return cert

    def revoke_cert(self, serial: str) -> None:
        if serial in self.issued:
            self.revoked.add(serial)

    def verify_cert(self, cert: Certificate, now: int) -> bool:
        if cert.serial not in self.issued or cert.serial in self.revoked:
            return False
        if not cert.issued_at <= now < cert.expires_at:
            return False
        return verify(self.root.public, cert.body_bytes(), Signature(bytes.fromhex(cert.signature)))

    # key lifecycle -------------------------------------------------------

    def register_key(self, key_id: str, owner: str, now: int) -> KeyRecord:
        record = KeyRecord(key_id=key_id, owner=owner, created_at=now)
        record.log_use(now, "generate")
        self.key_records[key_id] = record
        return record

    def log_key_use(self, key_id: str, now: int, op: str) -> None:
        if key_id in self.key_records:
            self.key_records[key_id].log_use(now, op)

    def revoke_key(self, key_id: str, now: int) -> None:
        self.key_records[key_id].revoke(now)

    def destroy_key(self, key_id: str, now: int) -> None:
        self.key_records[key_id].destroy(now)

    def audit_keys(self, now: int, policy: AuditPolicy = AuditPolicy()) -> list[AuditFinding]:
        """Flag keys violating policy: too old while active, used after
        revocation, or destroyed but still referenced by a live cert."""
        live_key_ids = {
            hash_data(bytes.fromhex(cert.public)).hex
            for serial, cert in self.issued.items()
            if serial not in self.revoked and cert.expires_at > now
        }
        findings = []
        for key_id in sorted(self.key_records):
            record = self.key_records[key_id]
            reasons = []
            if record.status == "active" and now - record.created_at > policy.max_age_seconds:
                reasons.append("aged")
            if record.revoked_at is not None and any(
                ts > record.revoked_at and op not in ("revoke", "destroy")
                for ts, op in record.usage_log
            ):
                reasons.append("used-after-revoke")
            if record.status == "destroyed" and key_id in live_key_ids:
                reasons.append("destroyed-referenced")
            if reasons:
                findings.append(
                    AuditFinding(key_id, record.owner, record.status, tuple(reasons))
                )
        return findings


# -- accounts and sessions ----------------------------------------------------------

def hash_password(password: str, salt: bytes) -> str:
    digest = hashlib.scrypt(password.encode("utf-8"), salt=salt, **_SCRYPT)
    return salt.hex() + ":" + digest.hex()

def check_password(password: str, verifier: str) -> bool:
    salt_hex, digest_hex = verifier.split(":", 1)
    candidate = hashlib.scrypt(password.encode("utf-8"), salt=bytes.fromhex(salt_hex), **_SCRYPT)
    return _hmac.compare_digest(candidate.hex(), digest_hex)


@dataclass
class UserAccount:
    phone: str  # unique login id
    name: str
    role: str  # DO | DU | MIFS | DDBS
    verifier: str
    custody: str  # local | ca
    status: str = "active"  # active | pending
    cert_serial: str = ""
    sign_public: str = ""
    pre_public: str = ""  # hex group element for share wrapping
    institution_code: Optional[str] = None
    is_admin: bool = False


@dataclass(frozen=True)
class Session:
    token: str
    phone: str
    role: str
    expires_at: int
    is_admin: bool = False


@dataclass
class RegistrationResult:
    account: UserAccount
    certificate: Optional[Certificate]
    secrets: Optional[dict] = None  # CA-custody only, returned exactly once


class Directory:
    """Account registry plus bearer-token session store, backed by the
    certificate authority for issuance and key records."""

    def __init__(self, ca: CertificateAuthority, rng: RandomSource = system_rng,
                 session_ttl: int = 3600):
        self.ca = ca
        self.rng = rng
        self.session_ttl = session_ttl
        self.accounts: dict[str, UserAccount] = {}
        self.sessions: dict[str, Session] = {}

    def register(self, *, role: str, phone: str, name: str, password: str, now: int,
                 institution_code: Optional[str] = None, custody: str = "local",
                 sign_public: str = "", pre_public: str = "") -> RegistrationResult:
        if role not in ("DO", "DU", "MIFS", "DDBS"):
            raise ValueError(f"role {role!r} cannot self-register")
        if custody not in CUSTODY_MODES:
            raise ValueError(f"unknown custody mode {custody!r}")
        if phone in self.accounts:
            raise PhoneTaken(f"phone {phone} is already registered")
        if role == "DU" and not institution_code:
            raise MissingInstitution("doctor registration requires a medical institution code")
        if not phone or not name or not password:
            raise ValueError("phone, name, and password are required")

        secrets = None
        if custody == "ca":
            sign_pair = keygen_sign(self.rng)
            sign_public = sign_pair.public.hex()
            secrets = {"sign_secret": sign_pair.secret.hex()}
        elif not sign_public:
            raise ValueError("local custody requires a client-generated sign_public")

        account = UserAccount(
            phone=phone,
            name=name,
            role=role,
            verifier=hash_password(password, self.rng(16)),
            custody=custody,
            sign_public=sign_public,
            pre_public=pre_public,
            institution_code=institution_code if role == "DU" else None,
        )
        self.accounts[phone] = account

        if role in REVIEWED_ROLES:
            account.status = "pending"
            return RegistrationResult(account=account, certificate=None, secrets=secrets)

        cert = self._issue_for(account, now)
        return RegistrationResult(account=account, certificate=cert, secrets=secrets)

    def _issue_for(self, account: UserAccount, now: int) -> Certificate:
        cert = self.ca.issue(account.phone, account.role, account.sign_public, now)
        account.cert_serial = cert.serial
        key_id = hash_data(bytes.fromhex(account.sign_public)).hex
        if key_id not in self.ca.key_records:
            self.ca.register_key(key_id, account.phone, now)
        self.ca.log_key_use(key_id, now, "distribute")
        return cert

    def approve(self, admin: Session, phone: str, now: int) -> Certificate:
        """Admin review step for infrastructure roles."""
        if not admin.is_admin:
            raise Forbidden("approval requires an administrator session")
        account = self.accounts.get(phone)
        if account is None:
            raise UnknownUser(f"no account for phone {phone}")
        if account.status != "pending":
            raise ValueError(f"account {phone} is not pending review")
        account.status = "active"
        return self._issue_for(account, now)

    def login(self, phone: str, password: str, now: int) -> str:
        account = self.accounts.get(phone)
        if account is None:
            raise UnknownUser("phone is not registered")
        if not check_password(password, account.verifier):
            raise BadCredentials("wrong phone or password")
        if account.status == "pending":
            raise PendingReview("account awaits administrator review")
        token = self.rng(32).hex()
        self.sessions[token] = Session(
            token=token,
            phone=phone,
            role=account.role,
            expires_at=now + self.session_ttl,
            is_admin=account.is_admin,
        )
        return token

    def session(self, token: str, now: int) -> Session:
        s = self.sessions.get(token)
        if s is None or now >= s.expires_at:
            self.sessions.pop(token, None)
            raise AuthRequired("missing or expired session token")
        return s

    def account_of(self, session: Session) -> UserAccount:
        return self.accounts[session.phone]

    def update_key(self, session: Session, now: int, *, sign_public: str = "",
                   pre_public: str = "") -> RegistrationResult:
        """Rotate an account's keys: revoke the old certificate and key
        record, issue a fresh certificate over the new public key."""
        account = self.account_of(session)
        old_key_id = hash_data(bytes.fromhex(account.sign_public)).hex
        secrets = None
        if account.custody == "ca":
            pair = keygen_sign(self.rng)
            sign_public = pair.public.hex()
            secrets = {"sign_secret": pair.secret.hex()}
        elif not sign_public:
            raise ValueError("local custody requires a client-generated sign_public")

        self.ca.revoke_cert(account.cert_serial)
        if old_key_id in self.ca.key_records and self.ca.key_records[old_key_id].status == "active":
            self.ca.revoke_key(old_key_id, now)
        account.sign_public = sign_public
        if pre_public:
            account.pre_public = pre_public
        cert = self._issue_for(account, now)
        self.ca.log_key_use(hash_data(bytes.fromhex(sign_public)).hex, now, "update")
        return RegistrationResult(account=account, certificate=cert, secrets=secrets)

    def create_admin(self, *, phone: str, name: str, password: str, now: int,
                     sign_public: str = "", custody: str = "ca") -> RegistrationResult:
        """Bootstrap administrator, created at genesis time."""
        result = self.register(
            role="MIFS", phone=phone, name=name, password=password, now=now,
            custody=custody, sign_public=sign_public,
        )
        result.account.is_admin = True
        result.account.status = "active"
        result.certificate = self._issue_for(result.account, now)
        return result


# -- access grants -------------------------------------------------------------------

def normalize_scope(scope: dict) -> dict:
    record_ids = sorted(set(scope.get("record_ids", [])))
    trapdoors = sorted(set(scope.get("trapdoors", [])))
    return {"record_ids": record_ids, "trapdoors": trapdoors}


@dataclass(frozen=True)
class AccessGrant:
    """Grantor-signed license: who may read what, and when. The wire
    document is the canonical body plus the signature, so it can be
    saved and re-verified byte-for-byte."""

    grantor_pub: str
    grantee_pub: str
    scope: dict  # {"record_ids": [...], "trapdoors": [...]}
    start: int
    end: int
    signature: str
    rekey_ref: Optional[str] = None

    def body_doc(self) -> dict:
        doc = {
            "grantor_pub": self.grantor_pub,
            "grantee_pub": self.grantee_pub,
            "scope": normalize_scope(self.scope),
            "start": self.start,
            "end": self.end,
        }
        if self.rekey_ref is not None:
            doc["rekey_ref"] = self.rekey_ref
        return doc

    def body_bytes(self) -> bytes:
        return canonical_json(self.body_doc())

    @property
    def serial(self) -> str:
        return hash_data(self.body_bytes()).hex

    def to_doc(self) -> dict:
        return {**self.body_doc(), "sig": self.signature}

    @classmethod
    def from_doc(cls, doc: dict) -> "AccessGrant":
        return cls(
            grantor_pub=doc["grantor_pub"],
            grantee_pub=doc["grantee_pub"],
            scope=normalize_scope(doc.get("scope", {})),
            start=int(doc["start"]),
            end=int(doc["end"]),
            signature=doc["sig"],
            rekey_ref=doc.get("rekey_ref"),
        )


OwnerLookup = Callable[[str], Optional[str]]  # record id -> owner_pub hex


def grant_access(grantor_secret: bytes, grantor_pub: str, grantee_pub: str,
                 scope: dict, start: int, end: int,
                 owner_of: OwnerLookup,
                 rekey_ref: Optional[str] = None) -> AccessGrant:
    """Build and sign a grant. The grantor must own every scoped record;
    a scope carrying trapdoors (private-data search/fetch) must name a
    registered rekey."""
    scope = normalize_scope(scope)
    if start >= end:
        raise InvalidGrant("start_time must precede end_time")
    for record_id in scope["record_ids"]:
        owner = owner_of(record_id)
        if owner != grantor_pub:
            raise ScopeNotOwned(f"grantor does not own record {record_id}")
    if scope["trapdoors"] and rekey_ref is None:
        raise InvalidGrant("private scope requires a rekey_ref")
    unsigned = AccessGrant(
        grantor_pub=grantor_pub,
        grantee_pub=grantee_pub,
        scope=scope,
        start=start,
        end=end,
        signature="",
        rekey_ref=rekey_ref,
    )
    sig = sign(grantor_secret, unsigned.body_bytes())
    return AccessGrant(**{**unsigned.__dict__, "signature": sig.data.hex()})


def verify_grant(grant: AccessGrant, requested_scope: dict, now: int) -> None:
    """Raise the precise refusal (BadSignature, NotYetValid, Expired,
    OutOfScope) or return None. Window is [start, end); scope check is
    subset inclusion. Pure in (grant, request, now)."""
    try:
        pub = bytes.fromhex(grant.grantor_pub)
        sig = Signature(bytes.fromhex(grant.signature))
    except ValueError:
        raise BadSignature("malformed grant signature") from None
    if not verify(pub, grant.body_bytes(), sig):
        raise BadSignature("grant signature does not verify")
    if now < grant.start:
        raise NotYetValid(f"grant becomes valid at {grant.start}")
    if now >= grant.end:
        raise Expired(f"grant expired at {grant.end}")
    requested = normalize_scope(requested_scope)
    held = normalize_scope(grant.scope)
    if not set(requested["record_ids"]) <= set(held["record_ids"]):
        raise OutOfScope("requested record outside the granted scope")
    if not set(requested["trapdoors"]) <= set(held["trapdoors"]):
        raise OutOfScope("requested trapdoor outside the granted scope")


def check_grant(grant: AccessGrant, requested_scope: dict, now: int) -> str:
    """Verdict as a stable code string: 'ok' or the refusal name."""
    try:
        verify_grant(grant, requested_scope, now)
        return "ok"
    except (BadSignature, NotYetValid, Expired, OutOfScope) as exc:
        return exc.code
