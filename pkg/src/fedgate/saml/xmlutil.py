"""XML helpers shared by the SAML modules.

Parsing refuses documents containing a DTD (entity expansion is the
classic XML denial-of-service vector and nothing in the SAML profile we
accept uses one).  Canonicalization uses the stdlib C14N 2.0 serializer
with sequential prefix rewriting, which makes the canonical bytes
independent of the prefixes a peer happened to serialize with.
"""

from __future__ import annotations

import copy
import xml.etree.ElementTree as ET

NS = {
    "saml": "urn:oasis:names:tc:SAML:2.0:assertion",
    "samlp": "urn:oasis:names:tc:SAML:2.0:protocol",
    "md": "urn:oasis:names:tc:SAML:2.0:metadata",
    "ds": "http://www.w3.org/2000/09/xmldsig#",
    "xenc": "http://www.w3.org/2001/04/xmlenc#",
    "mdattr": "urn:oasis:names:tc:SAML:metadata:attribute",
}


def q(prefix: str, local: str) -> str:
    return f"{{{NS[prefix]}}}{local}"


class XmlParseError(ValueError):
    pass


def parse_xml(data: bytes | str) -> ET.Element:
    if isinstance(data, str):
        data = data.encode("utf-8")
    if b"<!DOCTYPE" in data or b"<!ENTITY" in data:
        raise XmlParseError("documents with a DTD are rejected")
    try:
        return ET.fromstring(data)
    except ET.ParseError as exc:
        raise XmlParseError(str(exc)) from exc


def serialize(elem: ET.Element) -> bytes:
    return ET.tostring(elem, encoding="utf-8", xml_declaration=False)


def canonicalize(elem: ET.Element) -> bytes:
    """Canonical bytes of a subtree, prefix-normalized."""
    text = ET.tostring(elem, encoding="unicode")
    return ET.canonicalize(text, rewrite_prefixes=True).encode("utf-8")


def without_child(elem: ET.Element, tag: str) -> ET.Element:
    """Deep copy of ``elem`` with any direct ``tag`` children removed."""
    clone = copy.deepcopy(elem)
    for child in clone.findall(tag):
        clone.remove(child)
    return clone
