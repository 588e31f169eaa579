"""Static path discovery and certificate path validation.

Paths through the bridge PKI are configured explicitly, anchor first.
Discovery picks the first configured path whose terminal CA issued the
presented end-entity certificate; validation walks the chain verifying
signatures, validity windows, revocation (hard-fail) and folds the
acceptable policy-OID set through each cross-certificate's mappings.

The policy processing is deliberately the simple forward fold: a single
acceptable set, mapped or intersected at each CA step.  anyPolicy and
the policy-constraint extensions are out of scope.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric import ec, padding, rsa

from .certs import Certificate
from .crl import CrlCache, RevocationStatus, check_revocation


class NoConfiguredPath(Exception):
    """No static path terminates at the end-entity's issuer.

    Carries the issuer DN so the onboarding workflow can surface it.
    """

    def __init__(self, issuer_one_line: str):
        super().__init__(f"no configured path for issuer {issuer_one_line}")
        self.issuer_one_line = issuer_one_line


class BrokenConfiguredPath(Exception):
    """A configured path references certificates that are not issuer-linked."""


@dataclass(frozen=True)
class StaticPathConfig:
    """Trust anchors, named static paths, and per-anchor acceptable policies.

    Each path is an ordered list of certificate names, beginning at a
    trust anchor and ending at the CA that issues end-entity certs.
    """

    trust_anchors: tuple[str, ...]
    paths: tuple[tuple[str, tuple[str, ...]], ...]  # (name, cert names)
    accepted_policies: dict[str, frozenset[str]]  # anchor subject DN -> OID set

    def __post_init__(self):
        anchors = set(self.trust_anchors)
        for name, chain in self.paths:
            if not chain or chain[0] not in anchors:
                raise ValueError(f"path {name!r} does not begin at a trust anchor")


class PathOutcome(enum.Enum):
    VALID = "valid"
    SIGNATURE_INVALID = "signature-invalid"
    EXPIRED = "expired"
    NOT_YET_VALID = "not-yet-valid"
    REVOKED = "revoked"
    REVOCATION_UNAVAILABLE = "revocation-unavailable"
    POLICY_VIOLATION = "policy-violation"
    UNKNOWN_CRITICAL_EXTENSION = "unknown-critical-extension"


@dataclass(frozen=True)
class ValidationResult:
    outcome: PathOutcome
    chain: tuple[Certificate, ...]
    effective_policies: frozenset[str] = frozenset()
    sdn: str = ""
    failed_index: int | None = None

    @property
    def valid(self) -> bool:
        return self.outcome is PathOutcome.VALID


def resolve_pool(pool: dict[str, Certificate], names: tuple[str, ...]) -> list[Certificate]:
    try:
        return [pool[name] for name in names]
    except KeyError as exc:
        raise BrokenConfiguredPath(f"unknown certificate reference {exc}") from exc


def discover_path(
    end_entity: Certificate,
    pool: dict[str, Certificate],
    config: StaticPathConfig,
) -> tuple[Certificate, ...]:
    """Return the first configured chain ending at the end-entity's issuer.

    The returned chain runs anchor -> intermediates -> end-entity.  A
    bounded sanity check confirms each adjacent pair is issuer->subject
    linked; a config that fails it is a deployment error, not a login
    failure.
    """
    issuer = end_entity.issuer_dn.one_line
    for name, cert_names in config.paths:
        certs = resolve_pool(pool, cert_names)
        if certs[-1].subject_dn.one_line != issuer:
            continue
        for pred, succ in zip(certs, certs[1:]):
            if pred.subject_dn.one_line != succ.issuer_dn.one_line:
                raise BrokenConfiguredPath(
                    f"path {name!r}: {succ.subject_dn.one_line} not issued by "
                    f"{pred.subject_dn.one_line}"
                )
        return tuple(certs) + (end_entity,)
    raise NoConfiguredPath(issuer)


def map_policies(acceptable: frozenset[str], cross_cert: Certificate) -> frozenset[str]:
    """Fold the acceptable policy set through one CA certificate.

    Cross-certificates translate each acceptable issuer-domain OID to
    its subject-domain equivalent; unmapped policies are dropped (the
    agreement does not cover them).  A plain intermediate without the
    mappings extension simply intersects with its asserted policies.
    """
    if cross_cert.policy_mappings:
        return frozenset(
            subject_oid
            for issuer_oid, subject_oid in cross_cert.policy_mappings
            if issuer_oid in acceptable
        )
    return acceptable & cross_cert.policies


def _verify_issued_by(cert: Certificate, issuer: Certificate) -> bool:
    backing = cert.x509()
    key = issuer.x509().public_key()
    try:
        if isinstance(key, rsa.RSAPublicKey):
            key.verify(
                backing.signature,
                backing.tbs_certificate_bytes,
                padding.PKCS1v15(),
                backing.signature_hash_algorithm,
            )
        elif isinstance(key, ec.EllipticCurvePublicKey):
            key.verify(
                backing.signature,
                backing.tbs_certificate_bytes,
                ec.ECDSA(backing.signature_hash_algorithm),
            )
        else:
            return False
        return True
    except InvalidSignature:
        return False


def validate_path(
    chain: tuple[Certificate, ...],
    crls: CrlCache,
    config: StaticPathConfig,
    now: datetime,
) -> ValidationResult:
    """Validate a discovered chain at instant ``now``.

    Pure function of (chain, cache snapshot, config, now); the cache is
    never mutated and no fetches happen here.
    """
    if len(chain) < 2:
        raise ValueError("chain must contain at least an anchor and an end-entity")

    anchor = chain[0]
    end_entity = chain[-1]
    sdn = end_entity.subject_dn.one_line

    def fail(outcome: PathOutcome, index: int) -> ValidationResult:
        return ValidationResult(outcome=outcome, chain=chain, sdn=sdn, failed_index=index)

    acceptable = config.accepted_policies.get(anchor.subject_dn.one_line)
    if acceptable is None:
        raise ValueError(
            f"chain anchor {anchor.subject_dn.one_line} has no accepted-policy set"
        )

    for index, cert in enumerate(chain):
        if cert.unknown_critical_extensions:
            return fail(PathOutcome.UNKNOWN_CRITICAL_EXTENSION, index)
        if now < cert.not_before:
            return fail(PathOutcome.NOT_YET_VALID, index)
        if now > cert.not_after:
            return fail(PathOutcome.EXPIRED, index)
        if index > 0:
            issuer = chain[index - 1]
            if not _verify_issued_by(cert, issuer):
                return fail(PathOutcome.SIGNATURE_INVALID, index)
            status = check_revocation(cert, issuer, crls, now)
            if status is RevocationStatus.REVOKED:
                return fail(PathOutcome.REVOKED, index)
            if status is RevocationStatus.UNAVAILABLE:
                return fail(PathOutcome.REVOCATION_UNAVAILABLE, index)
        if 0 < index < len(chain) - 1:
            acceptable = map_policies(acceptable, cert)

    effective = acceptable & end_entity.policies
    if not effective:
        return fail(PathOutcome.POLICY_VIOLATION, len(chain) - 1)

    return ValidationResult(
        outcome=PathOutcome.VALID,
        chain=chain,
        effective_policies=effective,
        sdn=sdn,
    )
