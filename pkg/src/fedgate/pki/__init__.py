from .dn import DistinguishedName
from .certs import (
    Certificate,
    MalformedEncoding,
    UnsupportedVersion,
    parse_certificate,
)
from .path import (
    NoConfiguredPath,
    PathOutcome,
    StaticPathConfig,
    ValidationResult,
    discover_path,
    map_policies,
    validate_path,
)
from .crl import (
    CrlCache,
    CrlCacheEntry,
    CrlRefreshReport,
    RevocationStatus,
    check_revocation,
    refresh_crls,
)

__all__ = [
    "Certificate",
    "CrlCache",
    "CrlCacheEntry",
    "CrlRefreshReport",
    "DistinguishedName",
    "MalformedEncoding",
    "NoConfiguredPath",
    "PathOutcome",
    "RevocationStatus",
    "StaticPathConfig",
    "UnsupportedVersion",
    "ValidationResult",
    "check_revocation",
    "discover_path",
    "map_policies",
    "parse_certificate",
    "refresh_crls",
    "validate_path",
]
