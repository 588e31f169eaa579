"""CRL cache and hard-fail revocation checking.

Revocation data is pre-downloaded into an immutable cache snapshot so
interactive logins never wait on network fetches.  A certificate whose
issuer has no fresh, signature-verified CRL in the cache is treated as
Unavailable, which denies the login.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from urllib.request import urlopen

from cryptography import x509

from .certs import Certificate
from .dn import DistinguishedName

logger = logging.getLogger(__name__)

REFRESH_FLOOR = timedelta(minutes=5)
REFRESH_CEILING = timedelta(hours=24)


class RevocationStatus(enum.Enum):
    GOOD = "good"
    REVOKED = "revoked"
    UNAVAILABLE = "unavailable"


@dataclass(frozen=True)
class CrlCacheEntry:
    issuer_one_line: str
    this_update: datetime
    next_update: datetime
    revoked_serials: frozenset[int]
    signature_verified: bool
    fetched_at: datetime
    source: str

    def fresh_at(self, now: datetime) -> bool:
        return self.this_update <= now < self.next_update


@dataclass(frozen=True)
class CrlCache:
    """Immutable snapshot: issuer one-line DN -> verified CRL entry."""

    entries: dict[str, CrlCacheEntry] = field(default_factory=dict)

    def get(self, issuer_one_line: str) -> CrlCacheEntry | None:
        return self.entries.get(issuer_one_line)


@dataclass
class CrlSourceOutcome:
    source: str
    ok: bool
    detail: str
    issuer: str | None = None


@dataclass
class CrlRefreshReport:
    outcomes: list[CrlSourceOutcome]
    next_refresh_after: timedelta

    @property
    def all_ok(self) -> bool:
        return all(o.ok for o in self.outcomes)


def check_revocation(
    cert: Certificate,
    issuer: Certificate,
    crls: CrlCache,
    now: datetime,
) -> RevocationStatus:
    """Tri-state revocation check against the cache snapshot only."""
    entry = crls.get(issuer.subject_dn.one_line)
    if entry is None or not entry.signature_verified or not entry.fresh_at(now):
        return RevocationStatus.UNAVAILABLE
    if cert.serial in entry.revoked_serials:
        return RevocationStatus.REVOKED
    return RevocationStatus.GOOD


def default_fetch(source: str) -> bytes:
    """Read a CRL from a local path or an http(s) URL."""
    if source.startswith(("http://", "https://")):
        with urlopen(source, timeout=30) as resp:
            return resp.read()
    if source.startswith("file://"):
        source = source[len("file://") :]
    with open(source, "rb") as fh:
        return fh.read()


def _parse_and_verify(
    raw: bytes,
    pool: dict[str, Certificate],
    now: datetime,
    source: str,
) -> CrlCacheEntry:
    try:
        crl = x509.load_der_x509_crl(raw)
    except Exception:
        crl = x509.load_pem_x509_crl(raw)
    issuer_one_line = DistinguishedName.from_x509_name(crl.issuer).one_line
    issuer_cert = next(
        (c for c in pool.values() if c.subject_dn.one_line == issuer_one_line),
        None,
    )
    if issuer_cert is None:
        raise ValueError(f"no pooled certificate for CRL issuer {issuer_one_line}")
    if not crl.is_signature_valid(issuer_cert.x509().public_key()):
        raise ValueError(f"CRL signature does not verify against {issuer_one_line}")
    next_update = crl.next_update_utc
    if next_update is None:
        raise ValueError("CRL has no nextUpdate; cannot establish freshness")
    return CrlCacheEntry(
        issuer_one_line=issuer_one_line,
        this_update=crl.last_update_utc,
        next_update=next_update,
        revoked_serials=frozenset(r.serial_number for r in crl),
        signature_verified=True,
        fetched_at=now,
        source=source,
    )


def refresh_crls(
    cache: CrlCache,
    sources: list[str],
    pool: dict[str, Certificate],
    now: datetime,
    fetch=default_fetch,
) -> tuple[CrlCache, CrlRefreshReport]:
    """Fetch every source and build a fresh cache snapshot.

    Per-source failures are recorded in the report and leave the prior
    entry for that issuer untouched (last-good retention).  The caller
    swaps the returned snapshot in atomically.
    """
    entries = dict(cache.entries)
    outcomes: list[CrlSourceOutcome] = []
    for source in sources:
        try:
            raw = fetch(source)
            entry = _parse_and_verify(raw, pool, now, source)
        except Exception as exc:
            logger.warning("CRL refresh failed for %s: %s", source, exc)
            outcomes.append(CrlSourceOutcome(source=source, ok=False, detail=str(exc)))
            continue
        prior = entries.get(entry.issuer_one_line)
        if prior is not None and prior.this_update > entry.this_update:
            outcomes.append(
                CrlSourceOutcome(
                    source=source,
                    ok=True,
                    detail="older than cached entry; kept prior",
                    issuer=entry.issuer_one_line,
                )
            )
            continue
        entries[entry.issuer_one_line] = entry
        outcomes.append(
            CrlSourceOutcome(source=source, ok=True, detail="updated", issuer=entry.issuer_one_line)
        )

    next_after = REFRESH_CEILING
    for entry in entries.values():
        remaining = entry.next_update - now
        next_after = min(next_after, remaining / 2)
    next_after = max(next_after, REFRESH_FLOOR)

    return CrlCache(entries=entries), CrlRefreshReport(outcomes=outcomes, next_refresh_after=next_after)


def enumerate_sources(configured: list[str], pool: dict[str, Certificate]) -> list[str]:
    """Configured sources plus CRL distribution points of pooled certs."""
    seen: list[str] = []
    for source in list(configured) + [u for c in pool.values() for u in c.crl_urls]:
        if source not in seen:
            seen.append(source)
    return seen
