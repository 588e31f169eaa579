"""Mock SAML identity provider for testbed scenarios.

Answers decoded redirect-binding requests with signed response
documents, and can emit deliberately broken ones: one mutation per
negative scenario so each verifier check is individually load-bearing.
"""

from __future__ import annotations

import base64
import secrets
import xml.etree.ElementTree as ET
from datetime import datetime, timedelta, timezone

from cryptography import x509
from cryptography.hazmat.primitives.asymmetric import rsa

from ..saml.sp import decode_redirect_request
from ..saml.xmlenc import encrypt_element
from ..saml.xmlsig import sign_enveloped
from ..saml.xmlutil import q, serialize

STATUS_SUCCESS = "urn:oasis:names:tc:SAML:2.0:status:Success"


class MockIdp:
    def __init__(self, entity_id: str, key: rsa.RSAPrivateKey, cert: x509.Certificate):
        self.entity_id = entity_id
        self.key = key
        self.cert = cert

    def _instant(self, dt: datetime) -> str:
        return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")

    def respond_to_url(self, redirect_url: str, principal: str, now: datetime, **kwargs) -> dict[str, str]:
        """Consume the SP's redirect URL and produce ACS POST parameters."""
        request, params = decode_redirect_request(redirect_url)
        return self.respond(
            request_id=request.get("ID"),
            acs_url=request.get("AssertionConsumerServiceURL"),
            sp_entity_id=request.findtext(q("saml", "Issuer"), "").strip(),
            principal=principal,
            now=now,
            relay_state=params.get("RelayState", ""),
            **kwargs,
        )

    def respond(
        self,
        request_id: str | None,
        acs_url: str,
        sp_entity_id: str,
        principal: str | None,
        now: datetime,
        relay_state: str = "",
        *,
        attributes: dict[str, list[str]] | None = None,
        issuer_override: str | None = None,
        signing_key: rsa.RSAPrivateKey | None = None,
        destination_override: str | None = None,
        unsolicited: bool = False,
        window_override: tuple[datetime, datetime] | None = None,
        audience_override: str | None = None,
        empty_attributes: bool = False,
        encrypt_for: rsa.RSAPublicKey | None = None,
        tamper_after_signing: bool = False,
        assertion_id: str | None = None,
    ) -> dict[str, str]:
        issuer = issuer_override or self.entity_id
        not_before, not_on_or_after = window_override or (
            now - timedelta(minutes=1),
            now + timedelta(minutes=5),
        )
        audience = audience_override or sp_entity_id
        if attributes is None and not empty_attributes and principal is not None:
            attributes = {"eduPersonPrincipalName": [principal]}

        assertion = ET.Element(
            q("saml", "Assertion"),
            ID=assertion_id or ("_a" + secrets.token_hex(16)),
            Version="2.0",
            IssueInstant=self._instant(now),
        )
        ET.SubElement(assertion, q("saml", "Issuer")).text = issuer
        subject = ET.SubElement(assertion, q("saml", "Subject"))
        ET.SubElement(
            subject,
            q("saml", "NameID"),
            Format="urn:oasis:names:tc:SAML:2.0:nameid-format:transient",
        ).text = "_t" + secrets.token_hex(8)
        conditions = ET.SubElement(
            assertion,
            q("saml", "Conditions"),
            NotBefore=self._instant(not_before),
            NotOnOrAfter=self._instant(not_on_or_after),
        )
        restriction = ET.SubElement(conditions, q("saml", "AudienceRestriction"))
        ET.SubElement(restriction, q("saml", "Audience")).text = audience
        if attributes:
            statement = ET.SubElement(assertion, q("saml", "AttributeStatement"))
            for name, values in attributes.items():
                attribute = ET.SubElement(statement, q("saml", "Attribute"), Name=name)
                for value in values:
                    ET.SubElement(attribute, q("saml", "AttributeValue")).text = value

        response = ET.Element(
            q("samlp", "Response"),
            ID="_r" + secrets.token_hex(16),
            Version="2.0",
            IssueInstant=self._instant(now),
            Destination=destination_override or acs_url,
        )
        if not unsolicited and request_id:
            response.set("InResponseTo", request_id)
        ET.SubElement(response, q("saml", "Issuer")).text = issuer
        status = ET.SubElement(response, q("samlp", "Status"))
        ET.SubElement(status, q("samlp", "StatusCode"), Value=STATUS_SUCCESS)

        if encrypt_for is not None:
            wrapper = ET.SubElement(response, q("saml", "EncryptedAssertion"))
            wrapper.append(encrypt_element(assertion, encrypt_for))
        else:
            response.append(assertion)

        sign_enveloped(response, signing_key or self.key, self.cert, position=1)

        if tamper_after_signing:
            target = response.find(
                f"{q('saml', 'Assertion')}/{q('saml', 'AttributeStatement')}"
                f"/{q('saml', 'Attribute')}/{q('saml', 'AttributeValue')}"
            )
            # Flip one byte of one attribute value after signing.
            target.text = ("X" + target.text[1:]) if target.text else "X"

        params = {"SAMLResponse": base64.b64encode(serialize(response)).decode()}
        if relay_state:
            params["RelayState"] = relay_state
        return params
