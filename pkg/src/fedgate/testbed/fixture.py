"""Deterministic miniature federation generator.

Produces a three-program bridge PKI (roots A, B and Bridge, a
bidirectional Bridge<->A cross-certificate pair forming a loop, a
unilateral Bridge->B cross-certificate, policy mapping extensions,
issuing CAs, end-entity users and per-CA CRLs), a two-IdP signed SAML
metadata aggregate with a mock IdP key, SP material, TLS listener
certificates, a seeded identity store and a ready gateway config.

Everything derives from the integer seed: same seed, same bytes.
"""

from __future__ import annotations

import base64
import json
import random
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

import yaml
from cryptography import x509
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
)
from cryptography.x509.oid import ExtensionOID, NameOID, ObjectIdentifier

from ..pki.certs import POLICY_MAPPINGS_OID, encode_policy_mappings, parse_certificate
from ..saml.xmlsig import sign_enveloped
from ..saml.xmlutil import q, serialize
from ..store import IdentityStore
from .detkeys import deterministic_rsa_key

ARC = "1.3.6.1.4.1.55555"
OIDS = {
    "bridge": {"mh": f"{ARC}.1.1", "basic": f"{ARC}.1.2"},
    "program_a": {"mh": f"{ARC}.2.1", "basic": f"{ARC}.2.2"},
    "program_b": {"mh": f"{ARC}.3.1", "basic": f"{ARC}.3.2"},
}

REFERENCE_TIME = datetime(2026, 8, 1, 12, 0, 0, tzinfo=timezone.utc)
CA_NOT_BEFORE = datetime(2026, 1, 1, tzinfo=timezone.utc)
CA_NOT_AFTER = datetime(2036, 1, 1, tzinfo=timezone.utc)
USER_NOT_AFTER = datetime(2031, 1, 1, tzinfo=timezone.utc)
EXPIRED_NOT_AFTER = datetime(2026, 6, 1, tzinfo=timezone.utc)
CRL_THIS_UPDATE = datetime(2026, 7, 31, 12, 0, 0, tzinfo=timezone.utc)
CRL_NEXT_UPDATE = datetime(2026, 9, 1, 12, 0, 0, tzinfo=timezone.utc)
AGGREGATE_VALID_UNTIL = datetime(2026, 10, 1, tzinfo=timezone.utc)

JDOE_EPPN = "jdoe@example.edu"
ADMIN_EPPN = "admin@example.edu"


@dataclass
class FixtureManifest:
    data: dict
    root: Path

    def __getitem__(self, key):
        return self.data[key]

    @property
    def reference_time(self) -> datetime:
        return datetime.fromisoformat(self.data["reference_time"])

    def cert_path(self, name: str) -> Path:
        return self.root / "pki" / f"{name}.cert.pem"

    def key_path(self, name: str) -> Path:
        return self.root / "pki" / f"{name}.key.pem"

    def scenario(self, name: str) -> dict:
        return self.data["scenarios"][name]


def load_manifest(fixture_dir: str | Path) -> FixtureManifest:
    root = Path(fixture_dir)
    return FixtureManifest(data=json.loads((root / "manifest.json").read_text()), root=root)


def _name(ou: str, cn: str) -> x509.Name:
    return x509.Name(
        [
            x509.NameAttribute(NameOID.COUNTRY_NAME, "US"),
            x509.NameAttribute(NameOID.ORGANIZATION_NAME, "Testbed"),
            x509.NameAttribute(NameOID.ORGANIZATIONAL_UNIT_NAME, ou),
            x509.NameAttribute(NameOID.COMMON_NAME, cn),
        ]
    )


def _policies_ext(oids: list[str]) -> x509.CertificatePolicies:
    return x509.CertificatePolicies(
        [x509.PolicyInformation(ObjectIdentifier(oid), None) for oid in oids]
    )


def _build_cert(
    subject: x509.Name,
    issuer_name: x509.Name,
    subject_key,
    signing_key,
    serial: int,
    not_before: datetime,
    not_after: datetime,
    is_ca: bool,
    policies: list[str],
    mappings: list[tuple[str, str]] | None = None,
    san: list | None = None,
) -> x509.Certificate:
    builder = (
        x509.CertificateBuilder()
        .subject_name(subject)
        .issuer_name(issuer_name)
        .public_key(subject_key.public_key())
        .serial_number(serial)
        .not_valid_before(not_before)
        .not_valid_after(not_after)
        .add_extension(x509.BasicConstraints(ca=is_ca, path_length=None), critical=True)
    )
    if policies:
        builder = builder.add_extension(_policies_ext(policies), critical=False)
    if mappings:
        builder = builder.add_extension(
            x509.UnrecognizedExtension(POLICY_MAPPINGS_OID, encode_policy_mappings(mappings)),
            critical=False,
        )
    if san:
        builder = builder.add_extension(x509.SubjectAlternativeName(san), critical=False)
    return builder.sign(signing_key, hashes.SHA256())


def _self_signed(name_obj, key, serial, not_before=CA_NOT_BEFORE, not_after=CA_NOT_AFTER, san=None):
    return _build_cert(
        name_obj, name_obj, key, key, serial, not_before, not_after,
        is_ca=True, policies=[], san=san,
    )


def _write_key(path: Path, key) -> None:
    path.write_bytes(
        key.private_bytes(Encoding.PEM, PrivateFormat.PKCS8, NoEncryption())
    )


def _build_crl(issuer_name: x509.Name, signing_key, revoked_serials: list[int]) -> bytes:
    builder = (
        x509.CertificateRevocationListBuilder()
        .issuer_name(issuer_name)
        .last_update(CRL_THIS_UPDATE)
        .next_update(CRL_NEXT_UPDATE)
    )
    for serial in revoked_serials:
        builder = builder.add_revoked_certificate(
            x509.RevokedCertificateBuilder()
            .serial_number(serial)
            .revocation_date(CRL_THIS_UPDATE)
            .build()
        )
    return builder.sign(signing_key, hashes.SHA256()).public_bytes(Encoding.DER)


def _idp_entity(entity_id: str, sso_url: str, display: str, cert: x509.Certificate) -> ET.Element:
    entity = ET.Element(q("md", "EntityDescriptor"), entityID=entity_id)
    idp = ET.SubElement(
        entity,
        q("md", "IDPSSODescriptor"),
        protocolSupportEnumeration="urn:oasis:names:tc:SAML:2.0:protocol",
    )
    key_descriptor = ET.SubElement(idp, q("md", "KeyDescriptor"), use="signing")
    key_info = ET.SubElement(key_descriptor, q("ds", "KeyInfo"))
    x509_data = ET.SubElement(key_info, q("ds", "X509Data"))
    ET.SubElement(x509_data, q("ds", "X509Certificate")).text = base64.b64encode(
        cert.public_bytes(Encoding.DER)
    ).decode()
    ET.SubElement(
        idp,
        q("md", "SingleSignOnService"),
        Binding="urn:oasis:names:tc:SAML:2.0:bindings:HTTP-Redirect",
        Location=sso_url,
    )
    org = ET.SubElement(entity, q("md", "Organization"))
    ET.SubElement(org, q("md", "OrganizationName"), {"{http://www.w3.org/XML/1998/namespace}lang": "en"}).text = display
    ET.SubElement(org, q("md", "OrganizationDisplayName"), {"{http://www.w3.org/XML/1998/namespace}lang": "en"}).text = display
    ET.SubElement(org, q("md", "OrganizationURL"), {"{http://www.w3.org/XML/1998/namespace}lang": "en"}).text = entity_id
    return entity


# Scenario table: what the main test suite asserts against.
def _scenario_table(valid_sdn: str, a_mh: str) -> dict:
    return {
        "pki-login": {
            "expect": "session",
            "user_cert": "user-valid-mh",
            "chain_length": 4,
            "effective_policies": [a_mh],
            "sdn": valid_sdn,
        },
        "policy-reject": {"expect": "policy-violation", "user_cert": "user-basic-only"},
        "revoked-user": {"expect": "revoked", "user_cert": "user-revoked"},
        "expired-user": {"expect": "expired", "user_cert": "user-expired"},
        "crl-outage": {"expect": "session", "user_cert": "user-valid-mh"},
        "loop": {"expect": "terminates", "iterations": 10000},
        "saml-login": {"expect": "session", "eppn": JDOE_EPPN},
        "unknown-issuer": {"expect": "rejected", "check": "UnknownIssuer"},
        "tamper": {"expect": "rejected", "check": "SignatureInvalid"},
        "wrong-destination": {"expect": "rejected", "check": "DestinationMismatch"},
        "unsolicited": {"expect": "rejected", "check": "StaleOrUnsolicited"},
        "time-window": {"expect": "rejected", "check": "OutsideTimeWindow"},
        "audience": {"expect": "rejected", "check": "AudienceMismatch"},
        "replay": {"expect": "rejected", "check": "ReplayDetected"},
        "privacy-idp": {"expect": "explained-failure"},
        "idp-removed": {"expect": "rejected", "check": "UnknownIssuer"},
        "encrypted-assertion": {"expect": "session", "eppn": JDOE_EPPN},
        "onboard-saml": {"expect": "pending-then-approved", "eppn": "newuser@partner.edu"},
        "onboard-pki": {"expect": "pending-then-approved", "user_cert": "user-valid-mh"},
    }


def generate_fixture(seed: int, out_dir: str | Path) -> FixtureManifest:
    rng = random.Random(seed)
    out = Path(out_dir)
    for sub in ("pki", "crls", "saml", "ssh", "sshkeys"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    def serial() -> int:
        return rng.randrange(1, 2**63)

    br, pa, pb = OIDS["bridge"], OIDS["program_a"], OIDS["program_b"]

    # Key generation order is fixed; do not reorder without bumping the
    # fixture layout version.
    keys = {
        name: deterministic_rsa_key(rng)
        for name in (
            "bridge-root", "a-root", "b-root", "a-issuing", "b-issuing",
            "user-valid-mh", "user-basic-only", "user-revoked", "user-expired",
            "federation", "idp1", "idp2", "sp", "tls",
        )
    }

    names = {
        "bridge-root": _name("Bridge", "Testbed Bridge Root CA"),
        "a-root": _name("ProgramA", "Program A Root CA"),
        "b-root": _name("ProgramB", "Program B Root CA"),
        "a-issuing": _name("ProgramA", "Program A Issuing CA"),
        "b-issuing": _name("ProgramB", "Program B Issuing CA"),
        "user-valid-mh": _name("ProgramA", "Doe.John.1234567890"),
        "user-basic-only": _name("ProgramA", "Roe.Richard.2468013579"),
        "user-revoked": _name("ProgramA", "Poe.Edgar.1357924680"),
        "user-expired": _name("ProgramA", "Moe.Jane.9081726354"),
    }

    certs: dict[str, x509.Certificate] = {}
    meta: list[dict] = []

    def emit(name, cert, role, mappings=None, path=None):
        certs[name] = cert
        parsed = parse_certificate(cert.public_bytes(Encoding.DER))
        meta.append(
            {
                "name": name,
                "role": role,
                "subject": parsed.subject_dn.one_line,
                "issuer": parsed.issuer_dn.one_line,
                "serial": parsed.serial,
                "policies": sorted(parsed.policies),
                "mappings": [list(m) for m in (mappings or [])],
                "is_ca": parsed.is_ca,
                "path": path,
            }
        )

    emit("bridge-root", _self_signed(names["bridge-root"], keys["bridge-root"], serial()), "trust-anchor")
    emit("a-root", _self_signed(names["a-root"], keys["a-root"], serial()), "root")
    emit("b-root", _self_signed(names["b-root"], keys["b-root"], serial()), "root")

    cross_b_to_a_maps = [(br["mh"], pa["mh"]), (br["basic"], pa["basic"])]
    emit(
        "cross-bridge-to-a",
        _build_cert(
            names["a-root"], names["bridge-root"], keys["a-root"], keys["bridge-root"],
            serial(), CA_NOT_BEFORE, CA_NOT_AFTER, is_ca=True,
            policies=[br["mh"], br["basic"]], mappings=cross_b_to_a_maps,
        ),
        "cross-certificate",
        mappings=cross_b_to_a_maps,
        path="bridge-to-a",
    )
    cross_a_to_b_maps = [(pa["mh"], br["mh"])]
    emit(
        "cross-a-to-bridge",
        _build_cert(
            names["bridge-root"], names["a-root"], keys["bridge-root"], keys["a-root"],
            serial(), CA_NOT_BEFORE, CA_NOT_AFTER, is_ca=True,
            policies=[pa["mh"]], mappings=cross_a_to_b_maps,
        ),
        "cross-certificate (loop partner)",
        mappings=cross_a_to_b_maps,
    )
    cross_b_to_b_maps = [(br["mh"], pb["mh"])]
    emit(
        "cross-bridge-to-b",
        _build_cert(
            names["b-root"], names["bridge-root"], keys["b-root"], keys["bridge-root"],
            serial(), CA_NOT_BEFORE, CA_NOT_AFTER, is_ca=True,
            policies=[br["mh"]], mappings=cross_b_to_b_maps,
        ),
        "cross-certificate",
        mappings=cross_b_to_b_maps,
        path="bridge-to-b",
    )
    emit(
        "a-issuing",
        _build_cert(
            names["a-issuing"], names["a-root"], keys["a-issuing"], keys["a-root"],
            serial(), CA_NOT_BEFORE, CA_NOT_AFTER, is_ca=True,
            policies=[pa["mh"], pa["basic"]],
        ),
        "issuing-ca",
        path="bridge-to-a",
    )
    emit(
        "b-issuing",
        _build_cert(
            names["b-issuing"], names["b-root"], keys["b-issuing"], keys["b-root"],
            serial(), CA_NOT_BEFORE, CA_NOT_AFTER, is_ca=True,
            policies=[pb["mh"]],
        ),
        "issuing-ca",
        path="bridge-to-b",
    )

    def user(name, policy_oid, not_after=USER_NOT_AFTER):
        return _build_cert(
            names[name], names["a-issuing"], keys[name], keys["a-issuing"],
            serial(), CA_NOT_BEFORE, not_after, is_ca=False, policies=[policy_oid],
        )

    emit("user-valid-mh", user("user-valid-mh", pa["mh"]), "end-entity")
    emit("user-basic-only", user("user-basic-only", pa["basic"]), "end-entity")
    emit("user-revoked", user("user-revoked", pa["mh"]), "end-entity")
    emit("user-expired", user("user-expired", pa["mh"], EXPIRED_NOT_AFTER), "end-entity")

    # Structural self-check: the desk-scale landscape must actually
    # contain the loop and enough material for every scenario.
    end_entities = [m for m in meta if m["role"] == "end-entity"]
    crosses = [m for m in meta if m["role"].startswith("cross-certificate")]
    assert len(end_entities) == 4, "fixture must contain 4 end-entity users"
    assert len(crosses) >= 2, "fixture must contain at least 2 cross-certificates"
    pair = {(c["issuer"], c["subject"]) for c in crosses}
    assert any((s, i) in pair for i, s in pair), "fixture must contain a bidirectional pair"

    for name, cert in certs.items():
        (out / "pki" / f"{name}.cert.pem").write_bytes(cert.public_bytes(Encoding.PEM))
        if name in keys:
            # Cross-certificates certify an existing subject key and
            # have no key material of their own.
            _write_key(out / "pki" / f"{name}.key.pem", keys[name])

    # CRLs: one per issuing CA name.  a-issuing revokes user-revoked.
    revoked_serial = certs["user-revoked"].serial_number
    crl_files = {
        "bridge-root": _build_crl(names["bridge-root"], keys["bridge-root"], []),
        "a-root": _build_crl(names["a-root"], keys["a-root"], []),
        "b-root": _build_crl(names["b-root"], keys["b-root"], []),
        "a-issuing": _build_crl(names["a-issuing"], keys["a-issuing"], [revoked_serial]),
        "b-issuing": _build_crl(names["b-issuing"], keys["b-issuing"], []),
    }
    for issuer, der in crl_files.items():
        (out / "crls" / f"{issuer}.crl").write_bytes(der)

    # SAML material.
    saml_dir = out / "saml"
    fed_cert = _self_signed(
        x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, "Testbed Federation Signing")]),
        keys["federation"], serial(),
    )
    idp_entities = [
        ("https://idp1.test.example/idp", "https://idp1.test.example/sso", "Example University One", "idp1"),
        ("https://idp2.test.example/idp", "https://idp2.test.example/sso", "Example Institute Two", "idp2"),
    ]
    idp_certs = {}
    for entity_id, sso, display, key_name in idp_entities:
        idp_certs[key_name] = _self_signed(
            x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, f"Testbed IdP {key_name}")]),
            keys[key_name], serial(),
        )
    sp_cert = _self_signed(
        x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, "fedgate SP")]),
        keys["sp"], serial(),
    )
    tls_cert = _self_signed(
        x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, "localhost")]),
        keys["tls"], serial(),
        san=[x509.DNSName("localhost"), x509.DNSName("pki.localhost")],
    )

    aggregate = ET.Element(
        q("md", "EntitiesDescriptor"),
        ID="_aggregate" + format(rng.getrandbits(64), "016x"),
        validUntil=AGGREGATE_VALID_UNTIL.strftime("%Y-%m-%dT%H:%M:%SZ"),
        Name="urn:testbed:federation",
    )
    for entity_id, sso, display, key_name in idp_entities:
        aggregate.append(_idp_entity(entity_id, sso, display, idp_certs[key_name]))
    sign_enveloped(aggregate, keys["federation"], fed_cert)
    (saml_dir / "aggregate.xml").write_bytes(serialize(aggregate))

    (saml_dir / "federation.cert.pem").write_bytes(fed_cert.public_bytes(Encoding.PEM))
    _write_key(saml_dir / "federation.key.pem", keys["federation"])
    for key_name, cert in idp_certs.items():
        (saml_dir / f"{key_name}.cert.pem").write_bytes(cert.public_bytes(Encoding.PEM))
        _write_key(saml_dir / f"{key_name}.key.pem", keys[key_name])
    (saml_dir / "sp.cert.pem").write_bytes(sp_cert.public_bytes(Encoding.PEM))
    _write_key(saml_dir / "sp.key.pem", keys["sp"])
    (out / "tls.cert.pem").write_bytes(tls_cert.public_bytes(Encoding.PEM))
    _write_key(out / "tls.key.pem", keys["tls"])

    valid_sdn = parse_certificate(certs["user-valid-mh"].public_bytes(Encoding.DER)).sdn

    # Seed identity store: jdoe holds both external credentials, admin
    # drives the admin API.
    store_path = out / "store.json"
    if store_path.exists():
        store_path.unlink()
    store = IdentityStore(store_path)
    jdoe = store.create_user("jdoe", "jdoe@example.edu")
    store.set_principal(jdoe.user_id, JDOE_EPPN)
    store.map_certificate(jdoe.user_id, valid_sdn, USER_NOT_AFTER)
    admin = store.create_user("admin", "admin@example.edu")
    store.set_principal(admin.user_id, ADMIN_EPPN)

    sp_entity_id = "https://gateway.test.example/sp"
    acs_url = "https://localhost:8443/saml/acs"

    gateway_config = {
        "listeners": {
            "main": {"host": "127.0.0.1", "port": 8443, "tls_cert": "tls.cert.pem", "tls_key": "tls.key.pem"},
            "pki": {"host": "127.0.0.1", "port": 8444, "tls_cert": "tls.cert.pem", "tls_key": "tls.key.pem"},
        },
        "main_base_url": "https://localhost:8443",
        "pki_base_url": "https://localhost:8444",
        "saml": {
            "metadata_source": "saml/aggregate.xml",
            "federation_cert": "saml/federation.cert.pem",
            "sp_entity_id": sp_entity_id,
            "acs_url": acs_url,
            "sp_key": "saml/sp.key.pem",
            "sp_cert": "saml/sp.cert.pem",
            "requested_attributes": ["eduPersonPrincipalName", "mail", "displayName"],
            "rs_category_asserted": True,
        },
        "pki": {
            "cert_dir": "pki",
            "trust_anchors": ["bridge-root"],
            "paths": {
                "bridge-to-a": ["bridge-root", "cross-bridge-to-a", "a-issuing"],
                "bridge-to-b": ["bridge-root", "cross-bridge-to-b", "b-issuing"],
            },
            "accepted_policies": {"bridge-root": [br["mh"]]},
            "crl_sources": [f"crls/{issuer}.crl" for issuer in crl_files],
        },
        "ssh": {
            "min_rsa_bits": 2048,
            "forbidden_algorithms": ["ssh-dss"],
            "authority_root": "sshkeys",
            "blacklist": "ssh/debian-blacklist.txt",
        },
        "store_path": "store.json",
        "audit_log": "audit.log",
        "admin_user_ids": [admin.user_id],
        "redirect_secret": f"fixture-{seed}",
    }
    (out / "gateway.yaml").write_text(yaml.safe_dump(gateway_config, sort_keys=True))
    (out / "ssh" / "debian-blacklist.txt").write_text(
        "# fixture Debian weak-key fingerprint blacklist\n"
    )

    manifest = {
        "layout_version": 1,
        "seed": seed,
        "reference_time": REFERENCE_TIME.isoformat(),
        "policy_oids": OIDS,
        "certificates": meta,
        "trust_anchors": ["bridge-root"],
        "paths": gateway_config["pki"]["paths"],
        "accepted_policies": {"bridge-root": [br["mh"]]},
        "crls": [
            {
                "issuer": issuer,
                "file": f"crls/{issuer}.crl",
                "revoked": (["user-revoked"] if issuer == "a-issuing" else []),
            }
            for issuer in crl_files
        ],
        "users": {
            "jdoe": {"user_id": jdoe.user_id, "eppn": JDOE_EPPN, "sdn": valid_sdn},
            "admin": {"user_id": admin.user_id, "eppn": ADMIN_EPPN},
        },
        "idp": [
            {
                "entity_id": entity_id,
                "sso_url": sso,
                "display_name": display,
                "cert": f"saml/{key_name}.cert.pem",
                "key": f"saml/{key_name}.key.pem",
            }
            for entity_id, sso, display, key_name in idp_entities
        ],
        "sp": {"entity_id": sp_entity_id, "acs_url": acs_url},
        "scenarios": _scenario_table(valid_sdn, pa["mh"]),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return FixtureManifest(data=manifest, root=out)
