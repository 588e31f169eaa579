"""SAML 2.0 service provider engine.

Outbound: signed authentication requests over the HTTP-Redirect binding
(raw DEFLATE + base64 + URL encoding, detached query signature).
Inbound: signed responses over the HTTP-POST binding, checked in a
fixed order — known issuer, signature, destination, request
correlation, time window, audience, replay — before attributes are
released to the gateway.
"""

from __future__ import annotations

import base64
import secrets
import threading
import xml.etree.ElementTree as ET
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from urllib.parse import parse_qs, quote, urlencode, urlparse

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import padding

from .metadata import EPPN, EPPN_OID, BINDING_POST, FederationConfig, MetadataCache
from .xmlenc import DecryptionFailed, decrypt_element
from .xmlsig import SignatureInvalid, sign_enveloped, verify_enveloped
from .xmlutil import XmlParseError, parse_xml, q, serialize

SIG_ALG_RSA_SHA256 = "http://www.w3.org/2001/04/xmldsig-more#rsa-sha256"


class SamlError(Exception):
    """Base class for response-processing failures."""


class UnknownIdp(SamlError):
    pass


class UnknownIssuer(SamlError):
    pass


class DestinationMismatch(SamlError):
    pass


class StaleOrUnsolicited(SamlError):
    pass


class OutsideTimeWindow(SamlError):
    pass


class AudienceMismatch(SamlError):
    pass


class ReplayDetected(SamlError):
    pass


class MalformedResponse(SamlError):
    pass


@dataclass(frozen=True)
class AuthnRequestRecord:
    request_id: str
    idp_entity_id: str
    issued_at: datetime
    relay_state: str


@dataclass(frozen=True)
class AuthenticatedPrincipal:
    idp_entity_id: str
    attributes: dict[str, tuple[str, ...]]
    assertion_id: str
    session_window: tuple[datetime | None, datetime | None]

    @property
    def eppn(self) -> str | None:
        for name in (EPPN, EPPN_OID):
            values = self.attributes.get(name)
            if values and values[0]:
                return values[0]
        return None


class PendingRequestStore:
    """Live authn-request records; each is consumable exactly once."""

    def __init__(self, max_age: timedelta = timedelta(minutes=10)):
        self._records: dict[str, AuthnRequestRecord] = {}
        self._lock = threading.Lock()
        self.max_age = max_age

    def add(self, record: AuthnRequestRecord) -> None:
        with self._lock:
            self._records[record.request_id] = record

    def consume(self, request_id: str, now: datetime) -> AuthnRequestRecord | None:
        with self._lock:
            record = self._records.pop(request_id, None)
        if record is None or now - record.issued_at > self.max_age:
            return None
        return record

    def purge(self, now: datetime) -> None:
        with self._lock:
            self._records = {
                rid: rec
                for rid, rec in self._records.items()
                if now - rec.issued_at <= self.max_age
            }


class ReplayStore:
    """Assertion ids already consumed, kept until their window closes."""

    def __init__(self):
        self._seen: dict[str, datetime] = {}
        self._lock = threading.Lock()

    def check_and_add(self, assertion_id: str, expires: datetime) -> bool:
        """True when the id is fresh (and is now recorded)."""
        with self._lock:
            if assertion_id in self._seen:
                return False
            self._seen[assertion_id] = expires
            return True

    def purge(self, now: datetime) -> None:
        with self._lock:
            self._seen = {aid: exp for aid, exp in self._seen.items() if exp > now}


def _instant(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_instant(value: str) -> datetime:
    return datetime.fromisoformat(value.replace("Z", "+00:00")).astimezone(timezone.utc)


def encode_redirect_payload(document: bytes) -> str:
    compressor = zlib.compressobj(9, zlib.DEFLATED, -15)
    deflated = compressor.compress(document) + compressor.flush()
    return base64.b64encode(deflated).decode("ascii")


def decode_redirect_payload(value: str) -> bytes:
    return zlib.decompress(base64.b64decode(value), -15)


def build_authn_request(
    idp_entity_id: str,
    cache: MetadataCache,
    config: FederationConfig,
    relay_state: str,
    now: datetime,
) -> tuple[str, AuthnRequestRecord]:
    """Build the redirect URL to the IdP and the record for InResponseTo."""
    idp = cache.entities.get(idp_entity_id)
    if idp is None:
        raise UnknownIdp(idp_entity_id)

    request_id = "_" + secrets.token_hex(16)
    request = ET.Element(
        q("samlp", "AuthnRequest"),
        ID=request_id,
        Version="2.0",
        IssueInstant=_instant(now),
        Destination=idp.sso_redirect_url,
        AssertionConsumerServiceURL=config.acs_url,
        ProtocolBinding=BINDING_POST,
    )
    ET.SubElement(request, q("saml", "Issuer")).text = config.sp_entity_id

    payload = encode_redirect_payload(serialize(request))
    # Canonical query ordering for the detached signature:
    # SAMLRequest, RelayState, SigAlg.
    parts = [("SAMLRequest", payload)]
    if relay_state:
        parts.append(("RelayState", relay_state))
    parts.append(("SigAlg", SIG_ALG_RSA_SHA256))
    signed_query = urlencode(parts, quote_via=quote)
    signature = config.sp_key.sign(
        signed_query.encode("ascii"), padding.PKCS1v15(), hashes.SHA256()
    )
    query = signed_query + "&" + urlencode(
        [("Signature", base64.b64encode(signature).decode("ascii"))], quote_via=quote
    )
    separator = "&" if urlparse(idp.sso_redirect_url).query else "?"
    url = idp.sso_redirect_url + separator + query

    record = AuthnRequestRecord(
        request_id=request_id,
        idp_entity_id=idp_entity_id,
        issued_at=now,
        relay_state=relay_state,
    )
    return url, record


def decode_redirect_request(url: str) -> tuple[ET.Element, dict[str, str]]:
    """Decode a redirect-binding URL back into the request document.

    Used by the mock IdP and by round-trip tests.
    """
    params = {k: v[0] for k, v in parse_qs(urlparse(url).query).items()}
    document = parse_xml(decode_redirect_payload(params["SAMLRequest"]))
    return document, params


def _attributes_from_assertion(assertion: ET.Element) -> dict[str, tuple[str, ...]]:
    attributes: dict[str, tuple[str, ...]] = {}
    for attribute in assertion.findall(
        f"{q('saml', 'AttributeStatement')}/{q('saml', 'Attribute')}"
    ):
        name = attribute.get("Name") or ""
        values = tuple(
            (v.text or "") for v in attribute.findall(q("saml", "AttributeValue"))
        )
        if name:
            attributes[name] = values
    return attributes


def consume_response(
    post_params: dict[str, str],
    cache: MetadataCache,
    config: FederationConfig,
    pending: PendingRequestStore,
    replay_seen: ReplayStore,
    now: datetime,
) -> AuthenticatedPrincipal:
    """Verify a POST-binding response and extract the principal.

    Check order is fixed; each check has a dedicated failure type so
    negative tests can pin which one rejected the response.
    """
    try:
        raw = base64.b64decode(post_params["SAMLResponse"])
        response = parse_xml(raw)
    except (KeyError, ValueError, XmlParseError) as exc:
        raise MalformedResponse(f"undecodable response: {exc}") from exc
    if response.tag != q("samlp", "Response"):
        raise MalformedResponse("root element is not samlp:Response")

    # 1. Issuer must be a cached, federation-verified IdP.
    issuer = (response.findtext(q("saml", "Issuer")) or "").strip()
    idp = cache.entities.get(issuer)
    if idp is None:
        raise UnknownIssuer(issuer or "<missing issuer>")

    # 2. At least one enveloped signature (Response or Assertion) must
    #    verify against that IdP's metadata certificates.
    keys = [cert.public_key() for cert in idp.signing_certs]
    response_signed = response.find(q("ds", "Signature")) is not None
    if response_signed:
        verify_enveloped(response, keys)

    # Decrypt the assertion if needed (the outer signature covers the
    # ciphertext, so this happens after the response-level check).
    assertion = response.find(q("saml", "Assertion"))
    encrypted = response.find(
        f"{q('saml', 'EncryptedAssertion')}/{q('xenc', 'EncryptedData')}"
    )
    if assertion is None and encrypted is not None:
        try:
            assertion = decrypt_element(encrypted, config.sp_key)
        except DecryptionFailed as exc:
            raise MalformedResponse(f"assertion decryption failed: {exc}") from exc
        if assertion.tag != q("saml", "Assertion"):
            raise MalformedResponse("decrypted element is not an assertion")
    if assertion is None:
        raise MalformedResponse("response carries no assertion")

    if not response_signed:
        if assertion.find(q("ds", "Signature")) is None:
            raise SignatureInvalid("neither response nor assertion is signed")
        verify_enveloped(assertion, keys)

    # 3. Destination must be our ACS.
    if response.get("Destination") != config.acs_url:
        raise DestinationMismatch(response.get("Destination") or "<missing>")

    # 4. InResponseTo must match a live request record (consumed here);
    #    unsolicited responses are rejected outright.
    in_response_to = response.get("InResponseTo")
    if not in_response_to:
        raise StaleOrUnsolicited("response carries no InResponseTo")
    record = pending.consume(in_response_to, now)
    if record is None:
        raise StaleOrUnsolicited(in_response_to)
    if record.idp_entity_id != issuer:
        raise StaleOrUnsolicited("request was addressed to a different IdP")

    # 5. Assertion time window, with clock skew.
    skew = config.clock_skew
    conditions = assertion.find(q("saml", "Conditions"))
    not_before = not_on_or_after = None
    if conditions is not None:
        if conditions.get("NotBefore"):
            not_before = _parse_instant(conditions.get("NotBefore"))
        if conditions.get("NotOnOrAfter"):
            not_on_or_after = _parse_instant(conditions.get("NotOnOrAfter"))
    if not_before is not None and now < not_before - skew:
        raise OutsideTimeWindow(f"not valid before {not_before.isoformat()}")
    if not_on_or_after is not None and now >= not_on_or_after + skew:
        raise OutsideTimeWindow(f"not valid on or after {not_on_or_after.isoformat()}")

    # 6. Audience restriction must name us.
    audiences = [
        (a.text or "").strip()
        for a in assertion.findall(
            f"{q('saml', 'Conditions')}/{q('saml', 'AudienceRestriction')}/{q('saml', 'Audience')}"
        )
    ]
    if config.sp_entity_id not in audiences:
        raise AudienceMismatch(", ".join(audiences) or "<no audience>")

    # 7. Replay: each assertion id is accepted once.
    assertion_id = assertion.get("ID") or ""
    if not assertion_id:
        raise MalformedResponse("assertion carries no ID")
    retention = (not_on_or_after or now) + skew
    if not replay_seen.check_and_add(assertion_id, retention):
        raise ReplayDetected(assertion_id)

    return AuthenticatedPrincipal(
        idp_entity_id=issuer,
        attributes=_attributes_from_assertion(assertion),
        assertion_id=assertion_id,
        session_window=(not_before, not_on_or_after),
    )
