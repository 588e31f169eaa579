from .metadata import (
    ExpiredAggregate,
    FederationConfig,
    IdpDescriptor,
    MalformedMetadata,
    MetadataCache,
    generate_sp_metadata,
    load_metadata,
    refresh_metadata,
)
from .sp import (
    AudienceMismatch,
    AuthenticatedPrincipal,
    AuthnRequestRecord,
    DestinationMismatch,
    OutsideTimeWindow,
    PendingRequestStore,
    ReplayDetected,
    ReplayStore,
    SamlError,
    StaleOrUnsolicited,
    UnknownIdp,
    UnknownIssuer,
    build_authn_request,
    consume_response,
    decode_redirect_request,
)
from .xmlsig import SignatureInvalid

__all__ = [
    "AudienceMismatch",
    "AuthenticatedPrincipal",
    "AuthnRequestRecord",
    "DestinationMismatch",
    "ExpiredAggregate",
    "FederationConfig",
    "IdpDescriptor",
    "MalformedMetadata",
    "MetadataCache",
    "OutsideTimeWindow",
    "PendingRequestStore",
    "ReplayDetected",
    "ReplayStore",
    "SamlError",
    "SignatureInvalid",
    "StaleOrUnsolicited",
    "UnknownIdp",
    "UnknownIssuer",
    "build_authn_request",
    "consume_response",
    "decode_redirect_request",
    "generate_sp_metadata",
    "load_metadata",
    "refresh_metadata",
]
