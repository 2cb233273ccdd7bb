"""Error hierarchy shared across the system.

Every error surfaced through the gateway API carries a stable ``code``
string (the class name) so clients can match on it.
"""

from __future__ import annotations


class HealthchainError(Exception):
    """Base class; ``code`` is the stable wire identifier."""

    @property
    def code(self) -> str:
        return type(self).__name__

    @property
    def message(self) -> str:
        return str(self) or self.code


# crypto_core
class AuthenticationFailure(HealthchainError):
    pass


# merkle
class EmptyInput(HealthchainError):
    pass


class IndexOutOfRange(HealthchainError):
    pass


# pre
class MessageNotInGroup(HealthchainError):
    pass


class MalformedCiphertext(HealthchainError):
    pass


class ZeroBlind(HealthchainError):
    pass


class AlreadyReencrypted(HealthchainError):
    pass


class BadExponent(HealthchainError):
    pass


# sse
class DuplicateDocId(HealthchainError):
    pass


class EmptyKeyword(HealthchainError):
    pass


# ledger
class ContractError(HealthchainError):
    pass


class TxTooLarge(HealthchainError):
    pass


class BrokenChain(HealthchainError):
    pass


class TxInvalidated(HealthchainError):
    pass


# contract
class DuplicateEntity(ContractError):
    pass


class UnknownEntity(ContractError):
    pass


class NotFound(ContractError):
    pass


class BadArity(ContractError):
    pass


class MalformedRecord(ContractError):
    pass


class StaleVersion(ContractError):
    pass


# ca_authz
class PhoneTaken(HealthchainError):
    pass


class MissingInstitution(HealthchainError):
    pass


class PendingReview(HealthchainError):
    pass


class BadCredentials(HealthchainError):
    pass


class UnknownUser(HealthchainError):
    pass


class ScopeNotOwned(HealthchainError):
    pass


class InvalidGrant(HealthchainError):
    pass


class BadSignature(HealthchainError):
    pass


class NotYetValid(HealthchainError):
    pass


class Expired(HealthchainError):
    pass


class OutOfScope(HealthchainError):
    pass


# gateway
class SizeExceeded(HealthchainError):
    pass


class RootMismatch(HealthchainError):
    pass


class UnknownObject(HealthchainError):
    pass


class UnknownIndex(HealthchainError):
    pass


class MissingReKey(HealthchainError):
    pass


class AuthRequired(HealthchainError):
    pass


class Forbidden(HealthchainError):
    pass


class UnknownRequest(HealthchainError):
    pass


class UnknownExchange(HealthchainError):
    pass
