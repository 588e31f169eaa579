"""Enveloped XML signatures, constrained profile.

Exactly one profile is produced and accepted: RSA with SHA-256, SHA-256
digests, C14N 2.0 canonicalization with prefix rewriting, a single
reference to the enveloping element by its ID with the enveloped
transform.  Anything else fails verification.  Full XML-DSig generality
is a known attack surface and nothing we interoperate with needs it.
"""

from __future__ import annotations

import base64
import hashlib
import xml.etree.ElementTree as ET

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.hazmat.primitives.serialization import Encoding

from .xmlutil import canonicalize, q, without_child

ALG_C14N2 = "http://www.w3.org/2010/xml-c14n2"
ALG_RSA_SHA256 = "http://www.w3.org/2001/04/xmldsig-more#rsa-sha256"
ALG_SHA256 = "http://www.w3.org/2001/04/xmlenc#sha256"
ALG_ENVELOPED = "http://www.w3.org/2000/09/xmldsig#enveloped-signature"


class SignatureInvalid(Exception):
    """Signature missing, outside the accepted profile, or failing to verify."""


def _digest_without_signature(elem: ET.Element) -> bytes:
    stripped = without_child(elem, q("ds", "Signature"))
    return hashlib.sha256(canonicalize(stripped)).digest()


def sign_enveloped(elem: ET.Element, key: rsa.RSAPrivateKey, cert=None, position: int = 0) -> None:
    """Insert an enveloped ds:Signature over ``elem`` at child ``position``.

    ``elem`` must carry an ``ID`` attribute.  An X509Certificate element
    is included when ``cert`` is given (informational; trust comes from
    metadata, never from KeyInfo).
    """
    element_id = elem.get("ID")
    if not element_id:
        raise ValueError("element to sign must carry an ID attribute")
    digest = base64.b64encode(_digest_without_signature(elem)).decode()

    signed_info = ET.Element(q("ds", "SignedInfo"))
    ET.SubElement(signed_info, q("ds", "CanonicalizationMethod"), Algorithm=ALG_C14N2)
    ET.SubElement(signed_info, q("ds", "SignatureMethod"), Algorithm=ALG_RSA_SHA256)
    reference = ET.SubElement(signed_info, q("ds", "Reference"), URI=f"#{element_id}")
    transforms = ET.SubElement(reference, q("ds", "Transforms"))
    ET.SubElement(transforms, q("ds", "Transform"), Algorithm=ALG_ENVELOPED)
    ET.SubElement(transforms, q("ds", "Transform"), Algorithm=ALG_C14N2)
    ET.SubElement(reference, q("ds", "DigestMethod"), Algorithm=ALG_SHA256)
    ET.SubElement(reference, q("ds", "DigestValue")).text = digest

    signature_value = key.sign(canonicalize(signed_info), padding.PKCS1v15(), hashes.SHA256())

    signature = ET.Element(q("ds", "Signature"))
    signature.append(signed_info)
    ET.SubElement(signature, q("ds", "SignatureValue")).text = base64.b64encode(
        signature_value
    ).decode()
    if cert is not None:
        key_info = ET.SubElement(signature, q("ds", "KeyInfo"))
        x509_data = ET.SubElement(key_info, q("ds", "X509Data"))
        ET.SubElement(x509_data, q("ds", "X509Certificate")).text = base64.b64encode(
            cert.public_bytes(Encoding.DER)
        ).decode()
    elem.insert(position, signature)


def _require(condition: bool, detail: str) -> None:
    if not condition:
        raise SignatureInvalid(detail)


def verify_enveloped(elem: ET.Element, public_keys: list[rsa.RSAPublicKey]) -> None:
    """Verify the enveloped signature on ``elem`` against any given key.

    Raises SignatureInvalid unless the document matches the constrained
    profile and one of the keys verifies the signature.
    """
    signatures = elem.findall(q("ds", "Signature"))
    _require(len(signatures) == 1, "expected exactly one enveloped signature")
    signature = signatures[0]

    signed_info = signature.find(q("ds", "SignedInfo"))
    _require(signed_info is not None, "missing SignedInfo")

    c14n_method = signed_info.find(q("ds", "CanonicalizationMethod"))
    _require(
        c14n_method is not None and c14n_method.get("Algorithm") == ALG_C14N2,
        "canonicalization method outside profile",
    )
    sig_method = signed_info.find(q("ds", "SignatureMethod"))
    _require(
        sig_method is not None and sig_method.get("Algorithm") == ALG_RSA_SHA256,
        "signature method outside profile",
    )
    references = signed_info.findall(q("ds", "Reference"))
    _require(len(references) == 1, "expected exactly one reference")
    reference = references[0]
    element_id = elem.get("ID")
    _require(
        reference.get("URI") in ("", f"#{element_id}"),
        "reference does not target the enveloping element",
    )
    transforms = [
        t.get("Algorithm")
        for t in reference.findall(f"{q('ds', 'Transforms')}/{q('ds', 'Transform')}")
    ]
    _require(transforms == [ALG_ENVELOPED, ALG_C14N2], "transform chain outside profile")
    digest_method = reference.find(q("ds", "DigestMethod"))
    _require(
        digest_method is not None and digest_method.get("Algorithm") == ALG_SHA256,
        "digest method outside profile",
    )

    digest_value = reference.findtext(q("ds", "DigestValue"), "").strip()
    _require(
        base64.b64decode(digest_value) == _digest_without_signature(elem),
        "digest mismatch",
    )

    signature_value = base64.b64decode(
        signature.findtext(q("ds", "SignatureValue"), "").strip()
    )
    signed_info_c14n = canonicalize(signed_info)
    for key in public_keys:
        if not isinstance(key, rsa.RSAPublicKey):
            continue
        try:
            key.verify(signature_value, signed_info_c14n, padding.PKCS1v15(), hashes.SHA256())
            return
        except InvalidSignature:
            continue
    raise SignatureInvalid("signature does not verify against any trusted key")
