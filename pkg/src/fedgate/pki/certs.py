"""X.509 certificate parsing.

Produces the parsed view used by path discovery and validation: DNs in
one-line form, policy OIDs, policy mappings from cross-certificates,
basic constraints and CRL distribution points.

The policy-mappings extension (2.5.29.33) is decoded from raw DER here
because the underlying library does not model it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime

from cryptography import x509
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.serialization import Encoding
from cryptography.x509.oid import ExtensionOID, ObjectIdentifier

from .dn import DistinguishedName

POLICY_MAPPINGS_OID = ObjectIdentifier("2.5.29.33")

# Critical extensions our validation logic understands.  Any other
# critical extension is recorded and fails path validation later.
_HANDLED_CRITICAL = {
    ExtensionOID.BASIC_CONSTRAINTS,
    ExtensionOID.KEY_USAGE,
    ExtensionOID.CERTIFICATE_POLICIES,
    POLICY_MAPPINGS_OID,
}


class MalformedEncoding(ValueError):
    """Input is not a valid DER/PEM X.509 certificate."""


class UnsupportedVersion(ValueError):
    """Certificate version predates v3; extensions are required."""


@dataclass(frozen=True)
class Certificate:
    raw_bytes: bytes
    serial: int
    subject_dn: DistinguishedName
    issuer_dn: DistinguishedName
    not_before: datetime
    not_after: datetime
    public_key_descriptor: str
    policies: frozenset[str]
    policy_mappings: tuple[tuple[str, str], ...]
    is_ca: bool
    crl_urls: tuple[str, ...]
    signature_algorithm: str
    unknown_critical_extensions: tuple[str, ...] = ()
    _backing: x509.Certificate = field(repr=False, compare=False, default=None)

    @property
    def sdn(self) -> str:
        return self.subject_dn.one_line

    def fingerprint_sha256(self) -> str:
        return self._backing.fingerprint(hashes.SHA256()).hex()

    def x509(self) -> x509.Certificate:
        return self._backing


def _read_der_tlv(data: bytes, offset: int) -> tuple[int, bytes, int]:
    """Return (tag, value, next_offset) for one DER TLV at offset."""
    if offset + 2 > len(data):
        raise MalformedEncoding("truncated DER structure")
    tag = data[offset]
    length = data[offset + 1]
    offset += 2
    if length & 0x80:
        nbytes = length & 0x7F
        if nbytes == 0 or offset + nbytes > len(data):
            raise MalformedEncoding("bad DER length")
        length = int.from_bytes(data[offset : offset + nbytes], "big")
        offset += nbytes
    if offset + length > len(data):
        raise MalformedEncoding("truncated DER value")
    return tag, data[offset : offset + length], offset + length


def _decode_oid(body: bytes) -> str:
    if not body:
        raise MalformedEncoding("empty OID")
    first = body[0]
    arcs = [first // 40, first % 40]
    value = 0
    for byte in body[1:]:
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            arcs.append(value)
            value = 0
    return ".".join(str(a) for a in arcs)


def _encode_oid(dotted: str) -> bytes:
    arcs = [int(a) for a in dotted.split(".")]
    body = bytes([arcs[0] * 40 + arcs[1]])
    for arc in arcs[2:]:
        chunk = bytearray([arc & 0x7F])
        arc >>= 7
        while arc:
            chunk.append((arc & 0x7F) | 0x80)
            arc >>= 7
        body += bytes(reversed(chunk))
    return b"\x06" + _encode_length(len(body)) + body


def _encode_length(n: int) -> bytes:
    if n < 0x80:
        return bytes([n])
    raw = n.to_bytes((n.bit_length() + 7) // 8, "big")
    return bytes([0x80 | len(raw)]) + raw


def encode_policy_mappings(pairs: list[tuple[str, str]]) -> bytes:
    """DER for the policyMappings extension value (SEQUENCE OF pairs)."""
    inner = b""
    for issuer_oid, subject_oid in pairs:
        pair = _encode_oid(issuer_oid) + _encode_oid(subject_oid)
        inner += b"\x30" + _encode_length(len(pair)) + pair
    return b"\x30" + _encode_length(len(inner)) + inner


def decode_policy_mappings(der: bytes) -> tuple[tuple[str, str], ...]:
    tag, body, end = _read_der_tlv(der, 0)
    if tag != 0x30 or end != len(der):
        raise MalformedEncoding("policyMappings is not a SEQUENCE")
    pairs = []
    offset = 0
    while offset < len(body):
        tag, pair_body, offset = _read_der_tlv(body, offset)
        if tag != 0x30:
            raise MalformedEncoding("policyMappings entry is not a SEQUENCE")
        tag1, oid1, mid = _read_der_tlv(pair_body, 0)
        tag2, oid2, end2 = _read_der_tlv(pair_body, mid)
        if tag1 != 0x06 or tag2 != 0x06 or end2 != len(pair_body):
            raise MalformedEncoding("policyMappings entry is not an OID pair")
        pairs.append((_decode_oid(oid1), _decode_oid(oid2)))
    return tuple(pairs)


def parse_certificate(data: bytes) -> Certificate:
    """Parse a DER (or PEM-wrapped) X.509 v3 certificate.

    Unknown non-critical extensions are ignored; unknown critical
    extensions are recorded so path validation can reject them.
    """
    if isinstance(data, str):
        data = data.encode("ascii")
    try:
        if b"-----BEGIN" in data:
            backing = x509.load_pem_x509_certificate(data)
        else:
            backing = x509.load_der_x509_certificate(data)
    except Exception as exc:
        raise MalformedEncoding(f"not a valid X.509 certificate: {exc}") from exc

    if backing.version is not x509.Version.v3:
        raise UnsupportedVersion(
            f"certificate version {backing.version.name} lacks required extensions"
        )

    policies: set[str] = set()
    mappings: tuple[tuple[str, str], ...] = ()
    is_ca = False
    crl_urls: list[str] = []
    unknown_critical: list[str] = []

    for ext in backing.extensions:
        if ext.oid == ExtensionOID.CERTIFICATE_POLICIES:
            for info in ext.value:
                policies.add(info.policy_identifier.dotted_string)
        elif ext.oid == POLICY_MAPPINGS_OID:
            raw = ext.value.value if isinstance(ext.value, x509.UnrecognizedExtension) else ext.value.public_bytes()
            mappings = decode_policy_mappings(raw)
        elif ext.oid == ExtensionOID.BASIC_CONSTRAINTS:
            is_ca = ext.value.ca
        elif ext.oid == ExtensionOID.CRL_DISTRIBUTION_POINTS:
            for point in ext.value:
                for name in point.full_name or []:
                    if isinstance(name, x509.UniformResourceIdentifier):
                        crl_urls.append(name.value)
        elif ext.critical and ext.oid not in _HANDLED_CRITICAL:
            unknown_critical.append(ext.oid.dotted_string)

    key = backing.public_key()
    descriptor = f"{type(key).__name__.replace('_', '').lower()}:{key.key_size if hasattr(key, 'key_size') else ''}"

    return Certificate(
        raw_bytes=backing.public_bytes(Encoding.DER),
        serial=backing.serial_number,
        subject_dn=DistinguishedName.from_x509_name(backing.subject),
        issuer_dn=DistinguishedName.from_x509_name(backing.issuer),
        not_before=backing.not_valid_before_utc,
        not_after=backing.not_valid_after_utc,
        public_key_descriptor=descriptor,
        policies=frozenset(policies),
        policy_mappings=mappings,
        is_ca=is_ca,
        crl_urls=tuple(crl_urls),
        signature_algorithm=backing.signature_algorithm_oid.dotted_string,
        unknown_critical_extensions=tuple(unknown_critical),
        _backing=backing,
    )
