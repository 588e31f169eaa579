"""Gateway configuration.

The YAML file points at certificate/key material on disk; this module
loads it into the typed config the application consumes.  The testbed
builds the same structure directly from a generated fixture.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path

import yaml
from cryptography import x509
from cryptography.hazmat.primitives.serialization import load_pem_private_key

from ..pki.certs import Certificate, parse_certificate
from ..pki.path import StaticPathConfig
from ..saml.metadata import FederationConfig
from ..sessions import SessionPolicy
from ..sshkeys import KeyPolicy


@dataclass
class ListenerConfig:
    host: str
    port: int
    tls_cert: str | None = None
    tls_key: str | None = None

    @property
    def authority(self) -> str:
        return f"{self.host}:{self.port}"


@dataclass
class PkiConfig:
    pool: dict[str, Certificate]
    path_config: StaticPathConfig
    crl_sources: list[str]


@dataclass
class SshConfig:
    policy: KeyPolicy
    authority_root: Path
    blacklist_path: Path | None = None


@dataclass
class GatewayConfig:
    main_listener: ListenerConfig
    pki_listener: ListenerConfig
    main_base_url: str
    pki_base_url: str
    saml: FederationConfig
    pki: PkiConfig
    ssh: SshConfig
    store_path: Path
    audit_log_path: Path | None
    admin_user_ids: set[int] = field(default_factory=set)
    session_policy: SessionPolicy = field(default_factory=SessionPolicy)
    redirect_secret: bytes = b""

    def __post_init__(self):
        if self.main_listener.authority == self.pki_listener.authority:
            raise ValueError("main and PKI listeners must have distinct authorities")


def _load_pool(cert_dir: Path) -> dict[str, Certificate]:
    pool = {}
    for path in sorted(cert_dir.glob("*.cert.pem")):
        pool[path.stem.removesuffix(".cert")] = parse_certificate(path.read_bytes())
    return pool


def load_config(path: str | Path, secret_dir: str | Path | None = None) -> GatewayConfig:
    """Load a YAML gateway config; relative paths resolve against the file."""
    path = Path(path)
    base = path.parent
    raw = yaml.safe_load(path.read_text())
    secret_base = Path(secret_dir) if secret_dir else base

    def resolve(p: str, secret: bool = False) -> Path:
        candidate = Path(p)
        if candidate.is_absolute():
            return candidate
        return (secret_base if secret else base) / candidate

    saml_raw = raw["saml"]
    sp_key = load_pem_private_key(
        resolve(saml_raw["sp_key"], secret=True).read_bytes(), password=None
    )
    saml = FederationConfig(
        metadata_source=str(resolve(saml_raw["metadata_source"])),
        federation_signing_cert=x509.load_pem_x509_certificate(
            resolve(saml_raw["federation_cert"]).read_bytes()
        ),
        sp_entity_id=saml_raw["sp_entity_id"],
        acs_url=saml_raw["acs_url"],
        sp_key=sp_key,
        sp_cert=x509.load_pem_x509_certificate(resolve(saml_raw["sp_cert"]).read_bytes()),
        refresh_period=timedelta(seconds=saml_raw.get("refresh_period_seconds", 14400)),
        requested_attributes=saml_raw.get(
            "requested_attributes", ["eduPersonPrincipalName"]
        ),
        rs_category_asserted=saml_raw.get("rs_category_asserted", False),
    )

    pki_raw = raw["pki"]
    pool = _load_pool(resolve(pki_raw["cert_dir"]))
    path_config = StaticPathConfig(
        trust_anchors=tuple(pki_raw["trust_anchors"]),
        paths=tuple((name, tuple(chain)) for name, chain in pki_raw["paths"].items()),
        accepted_policies={
            pool[anchor].subject_dn.one_line: frozenset(oids)
            for anchor, oids in pki_raw["accepted_policies"].items()
        },
    )
    pki = PkiConfig(
        pool=pool,
        path_config=path_config,
        crl_sources=[str(resolve(s)) if not str(s).startswith("http") else s for s in pki_raw["crl_sources"]],
    )

    ssh_raw = raw.get("ssh", {})
    ssh = SshConfig(
        policy=KeyPolicy(
            min_rsa_bits=ssh_raw.get("min_rsa_bits", 2048),
            forbidden_algorithms=frozenset(ssh_raw.get("forbidden_algorithms", ["ssh-dss"])),
        ),
        authority_root=resolve(ssh_raw.get("authority_root", "sshkeys")),
        blacklist_path=resolve(ssh_raw["blacklist"]) if ssh_raw.get("blacklist") else None,
    )

    def listener(section: dict) -> ListenerConfig:
        section = dict(section)
        for key in ("tls_cert", "tls_key"):
            if section.get(key):
                section[key] = str(resolve(section[key]))
        return ListenerConfig(**section)

    listeners = raw["listeners"]
    main = listener(listeners["main"])
    pki_listener = listener(listeners["pki"])

    session_raw = raw.get("session", {})
    policy = SessionPolicy(
        idle_timeout=timedelta(seconds=session_raw.get("idle_timeout_seconds", 1800)),
        max_lifetime=timedelta(seconds=session_raw.get("max_lifetime_seconds", 43200)),
    )

    return GatewayConfig(
        main_listener=main,
        pki_listener=pki_listener,
        main_base_url=raw.get("main_base_url", f"https://{main.authority}"),
        pki_base_url=raw.get("pki_base_url", f"https://{pki_listener.authority}"),
        saml=saml,
        pki=pki,
        ssh=ssh,
        store_path=resolve(raw["store_path"]),
        audit_log_path=resolve(raw["audit_log"]) if raw.get("audit_log") else None,
        admin_user_ids=set(raw.get("admin_user_ids", [])),
        session_policy=policy,
        redirect_secret=str(raw.get("redirect_secret", "fedgate-dev")).encode(),
    )
