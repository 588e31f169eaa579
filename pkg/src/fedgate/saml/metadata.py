"""Federation metadata aggregate: verification, caching, SP descriptor.

Trust in IdP keys comes exclusively from the aggregate, whose enveloped
signature must verify against the statically pinned federation
certificate before any entity in it is served.
"""

from __future__ import annotations

import base64
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from urllib.request import urlopen

from cryptography import x509
from cryptography.hazmat.primitives.asymmetric import rsa
from cryptography.hazmat.primitives.serialization import Encoding

from .xmlsig import SignatureInvalid, verify_enveloped
from .xmlutil import XmlParseError, parse_xml, q, serialize

logger = logging.getLogger(__name__)

BINDING_REDIRECT = "urn:oasis:names:tc:SAML:2.0:bindings:HTTP-Redirect"
BINDING_POST = "urn:oasis:names:tc:SAML:2.0:bindings:HTTP-POST"
RS_CATEGORY = "http://refeds.org/category/research-and-scholarship"
ENTITY_CATEGORY_ATTR = "http://macedir.org/entity-category"
EPPN = "eduPersonPrincipalName"
EPPN_OID = "urn:oid:1.3.6.1.4.1.5923.1.1.1.6"


class MalformedMetadata(Exception):
    pass


class ExpiredAggregate(Exception):
    pass


@dataclass
class FederationConfig:
    metadata_source: str
    federation_signing_cert: x509.Certificate
    sp_entity_id: str
    acs_url: str
    sp_key: rsa.RSAPrivateKey
    sp_cert: x509.Certificate
    refresh_period: timedelta = timedelta(hours=4)
    requested_attributes: list[str] = field(default_factory=lambda: [EPPN])
    rs_category_asserted: bool = False
    clock_skew: timedelta = timedelta(seconds=120)

    def __post_init__(self):
        if not self.acs_url.startswith("https://"):
            raise ValueError("assertion consumer service URL must be https")
        if self.refresh_period <= timedelta(0):
            raise ValueError("refresh period must be positive")


@dataclass(frozen=True)
class IdpDescriptor:
    entity_id: str
    sso_redirect_url: str
    signing_certs: tuple[x509.Certificate, ...]
    display_name: str


@dataclass(frozen=True)
class MetadataCache:
    entities: dict[str, IdpDescriptor]
    fetched_at: datetime
    valid_until: datetime | None
    aggregate_signature_ok: bool = True

    def usable_at(self, now: datetime) -> bool:
        return self.valid_until is None or now <= self.valid_until


def default_fetch(source: str) -> bytes:
    if source.startswith(("http://", "https://")):
        with urlopen(source, timeout=30) as resp:
            return resp.read()
    if source.startswith("file://"):
        source = source[len("file://") :]
    with open(source, "rb") as fh:
        return fh.read()


def _parse_instant(value: str) -> datetime:
    return datetime.fromisoformat(value.replace("Z", "+00:00")).astimezone(timezone.utc)


def _idp_from_entity(entity: ET.Element) -> IdpDescriptor | None:
    descriptor = entity.find(q("md", "IDPSSODescriptor"))
    if descriptor is None:
        return None
    entity_id = entity.get("entityID")
    if not entity_id:
        raise MalformedMetadata("EntityDescriptor without entityID")
    sso = next(
        (
            s.get("Location")
            for s in descriptor.findall(q("md", "SingleSignOnService"))
            if s.get("Binding") == BINDING_REDIRECT and s.get("Location")
        ),
        None,
    )
    if sso is None:
        raise MalformedMetadata(f"{entity_id}: no redirect-binding SSO endpoint")
    certs = []
    for key_descriptor in descriptor.findall(q("md", "KeyDescriptor")):
        if key_descriptor.get("use") not in (None, "signing"):
            continue
        for b64 in key_descriptor.findall(
            f"{q('ds', 'KeyInfo')}/{q('ds', 'X509Data')}/{q('ds', 'X509Certificate')}"
        ):
            certs.append(x509.load_der_x509_certificate(base64.b64decode(b64.text or "")))
    if not certs:
        raise MalformedMetadata(f"{entity_id}: no signing certificate")
    display = entity.findtext(
        f"{q('md', 'Organization')}/{q('md', 'OrganizationDisplayName')}", entity_id
    )
    return IdpDescriptor(
        entity_id=entity_id,
        sso_redirect_url=sso,
        signing_certs=tuple(certs),
        display_name=display,
    )


def load_metadata(
    source: str,
    federation_cert: x509.Certificate,
    now: datetime,
    fetch=default_fetch,
) -> MetadataCache:
    """Fetch, signature-verify and index a metadata aggregate."""
    raw = fetch(source)
    return load_metadata_bytes(raw, federation_cert, now)


def load_metadata_bytes(
    raw: bytes, federation_cert: x509.Certificate, now: datetime
) -> MetadataCache:
    try:
        root = parse_xml(raw)
    except XmlParseError as exc:
        raise MalformedMetadata(str(exc)) from exc
    if root.tag != q("md", "EntitiesDescriptor"):
        raise MalformedMetadata("aggregate root is not md:EntitiesDescriptor")

    verify_enveloped(root, [federation_cert.public_key()])

    valid_until = None
    if root.get("validUntil"):
        valid_until = _parse_instant(root.get("validUntil"))
        if valid_until < now:
            raise ExpiredAggregate(f"aggregate validUntil {valid_until.isoformat()} has passed")

    entities: dict[str, IdpDescriptor] = {}
    for entity in root.findall(q("md", "EntityDescriptor")):
        idp = _idp_from_entity(entity)
        if idp is not None:
            entities[idp.entity_id] = idp
    if not entities:
        raise MalformedMetadata("aggregate contains no identity providers")

    return MetadataCache(entities=entities, fetched_at=now, valid_until=valid_until)


@dataclass
class RefreshStatus:
    refreshed: bool
    degraded: bool
    detail: str


def refresh_metadata(
    cache: MetadataCache | None,
    config: FederationConfig,
    now: datetime,
    fetch=default_fetch,
) -> tuple[MetadataCache | None, RefreshStatus]:
    """Reload the aggregate; on failure retain the previous cache while usable."""
    try:
        fresh = load_metadata(config.metadata_source, config.federation_signing_cert, now, fetch)
        return fresh, RefreshStatus(refreshed=True, degraded=False, detail="refreshed")
    except Exception as exc:
        logger.warning("metadata refresh failed: %s", exc)
        if cache is not None and cache.usable_at(now):
            return cache, RefreshStatus(
                refreshed=False, degraded=False, detail=f"retained last-good: {exc}"
            )
        return cache, RefreshStatus(
            refreshed=False, degraded=True, detail=f"no usable metadata: {exc}"
        )


def generate_sp_metadata(config: FederationConfig) -> bytes:
    """Serialize our SP entity descriptor for submission to the federation."""
    entity = ET.Element(q("md", "EntityDescriptor"), entityID=config.sp_entity_id)
    if config.rs_category_asserted:
        extensions = ET.SubElement(entity, q("md", "Extensions"))
        entity_attrs = ET.SubElement(extensions, q("mdattr", "EntityAttributes"))
        attribute = ET.SubElement(
            entity_attrs, q("saml", "Attribute"), Name=ENTITY_CATEGORY_ATTR
        )
        ET.SubElement(attribute, q("saml", "AttributeValue")).text = RS_CATEGORY
    sp = ET.SubElement(
        entity,
        q("md", "SPSSODescriptor"),
        protocolSupportEnumeration="urn:oasis:names:tc:SAML:2.0:protocol",
    )
    key_descriptor = ET.SubElement(sp, q("md", "KeyDescriptor"), use="signing")
    key_info = ET.SubElement(key_descriptor, q("ds", "KeyInfo"))
    x509_data = ET.SubElement(key_info, q("ds", "X509Data"))
    ET.SubElement(x509_data, q("ds", "X509Certificate")).text = base64.b64encode(
        config.sp_cert.public_bytes(Encoding.DER)
    ).decode()
    ET.SubElement(
        sp,
        q("md", "AssertionConsumerService"),
        Binding=BINDING_POST,
        Location=config.acs_url,
        index="0",
        isDefault="true",
    )
    acs_service = ET.SubElement(sp, q("md", "AttributeConsumingService"), index="0")
    ET.SubElement(acs_service, q("md", "ServiceName"), {"{http://www.w3.org/XML/1998/namespace}lang": "en"}).text = config.sp_entity_id
    for name in config.requested_attributes:
        ET.SubElement(
            acs_service,
            q("md", "RequestedAttribute"),
            Name=name,
            isRequired="false",
        )
    return serialize(entity)
