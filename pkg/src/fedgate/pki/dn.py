"""Distinguished name handling.

DNs are rendered in the slash-separated one-line form used as the
account-mapping key, e.g. ``/C=US/O=U.S. Government/OU=DoD/CN=Doe.John.123``.
Rendering preserves the order in which RDNs are encoded in the certificate,
so the same DER always yields the same string.
"""

from __future__ import annotations

from dataclasses import dataclass

from cryptography import x509
from cryptography.x509.oid import NameOID

# Short names for the attribute types we expect to meet in practice.
# Anything else is rendered as its dotted OID.
_SHORT_NAMES = {
    NameOID.COUNTRY_NAME: "C",
    NameOID.STATE_OR_PROVINCE_NAME: "ST",
    NameOID.LOCALITY_NAME: "L",
    NameOID.ORGANIZATION_NAME: "O",
    NameOID.ORGANIZATIONAL_UNIT_NAME: "OU",
    NameOID.COMMON_NAME: "CN",
    NameOID.EMAIL_ADDRESS: "emailAddress",
    NameOID.SERIAL_NUMBER: "serialNumber",
    NameOID.DN_QUALIFIER: "dnQualifier",
    NameOID.DOMAIN_COMPONENT: "DC",
    NameOID.TITLE: "title",
    NameOID.GIVEN_NAME: "GN",
    NameOID.SURNAME: "SN",
}


def _escape_value(value: str) -> str:
    # '/' separates RDNs and '+' separates values inside a multi-valued
    # RDN, so both must be escaped inside attribute values.
    return value.replace("\\", "\\\\").replace("/", "\\/").replace("+", "\\+")


@dataclass(frozen=True)
class DistinguishedName:
    """An ordered RDN sequence plus its canonical one-line rendering."""

    rdn_sequence: tuple[tuple[tuple[str, str], ...], ...]

    @classmethod
    def from_x509_name(cls, name: x509.Name) -> "DistinguishedName":
        rdns = []
        for rdn in name.rdns:
            pairs = []
            for attr in rdn:
                short = _SHORT_NAMES.get(attr.oid, attr.oid.dotted_string)
                value = attr.value
                if isinstance(value, bytes):
                    value = value.decode("utf-8", errors="replace")
                pairs.append((short, value))
            rdns.append(tuple(pairs))
        return cls(rdn_sequence=tuple(rdns))

    @property
    def one_line(self) -> str:
        parts = []
        for rdn in self.rdn_sequence:
            rendered = "+".join(
                f"{name}={_escape_value(value)}" for name, value in rdn
            )
            parts.append(rendered)
        return "/" + "/".join(parts)

    def __str__(self) -> str:
        return self.one_line
