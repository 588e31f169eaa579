"""Scripted end-to-end scenarios over a generated fixture.

Each scenario gets a pristine gateway (fresh copy of the seeded store,
clock pinned to the fixture reference time) and drives it through the
in-process browser.  The expectations live in the fixture manifest's
scenario table; this module checks the observable outcome against them
and reports one pass/fail result per scenario.
"""

from __future__ import annotations

import json
import logging
import shutil
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from urllib.parse import urlencode

from cryptography import x509
from cryptography.hazmat.primitives.serialization import Encoding, load_pem_private_key

from ..gateway.app import Gateway
from ..gateway.config import load_config
from ..gateway.http import Response
from ..pki.certs import parse_certificate
from ..pki.path import discover_path, validate_path
from ..sessions import COOKIE_NAME
from ..saml.xmlsig import sign_enveloped
from ..saml.xmlutil import parse_xml, q, serialize
from .browser import FakeBrowser
from .fixture import FixtureManifest, load_manifest
from .mock_idp import MockIdp

logger = logging.getLogger(__name__)

ADMIN_HEADERS = {"X-Admin-Api-Version": "1", "Content-Type": "application/json"}


class ScenarioFailure(AssertionError):
    """A scenario's observable outcome did not match the manifest."""


def _expect(condition: bool, detail: str) -> None:
    if not condition:
        raise ScenarioFailure(detail)


@dataclass
class ScenarioResult:
    name: str
    passed: bool
    detail: str
    transcript: list[str] = field(default_factory=list)


class Clock:
    """Injectable clock, pinned to the fixture reference time."""

    def __init__(self, start: datetime):
        self.now = start

    def __call__(self) -> datetime:
        return self.now

    def advance(self, delta: timedelta) -> None:
        self.now = self.now + delta


class ScenarioContext:
    """One pristine gateway plus the helpers scenarios share."""

    def __init__(self, manifest: FixtureManifest, workdir: Path):
        self.manifest = manifest
        self.workdir = workdir
        self.clock = Clock(manifest.reference_time)
        self.transcript: list[str] = []

        config = load_config(manifest.root / "gateway.yaml")
        shutil.copy(manifest.root / "store.json", workdir / "store.json")
        config.store_path = workdir / "store.json"
        config.audit_log_path = workdir / "audit.log"
        config.ssh.authority_root = workdir / "sshkeys"
        self.gateway = Gateway(config, clock=self.clock)
        self.gateway.refresh_metadata_now()
        self.gateway.refresh_crls_now()

    # -- raw material -----------------------------------------------------

    def client_der(self, cert_name: str) -> bytes:
        pem = self.manifest.cert_path(cert_name).read_bytes()
        return x509.load_pem_x509_certificate(pem).public_bytes(Encoding.DER)

    def browser(self, cert_name: str | None = None) -> FakeBrowser:
        der = self.client_der(cert_name) if cert_name else None
        browser = FakeBrowser(self.gateway, client_cert_der=der)
        browser.transcript = self.transcript
        return browser

    def admin_browser(self) -> FakeBrowser:
        admin_id = self.manifest["users"]["admin"]["user_id"]
        session, _ = self.gateway.sessions.create(admin_id, "saml", self.clock())
        browser = self.browser()
        browser.cookies[COOKIE_NAME] = session.token
        return browser

    def mock_idp(self, index: int = 0) -> MockIdp:
        entry = self.manifest["idp"][index]
        key = load_pem_private_key(
            (self.manifest.root / entry["key"]).read_bytes(), password=None
        )
        cert = x509.load_pem_x509_certificate(
            (self.manifest.root / entry["cert"]).read_bytes()
        )
        return MockIdp(entry["entity_id"], key, cert)

    # -- composite flows ----------------------------------------------------

    def saml_login(
        self,
        browser: FakeBrowser,
        principal: str | None,
        idp_index: int = 0,
        **mutations,
    ) -> Response:
        """Run the full redirect/POST exchange; returns the ACS response."""
        entry = self.manifest["idp"][idp_index]
        start = browser.get(
            "/login/saml?" + urlencode({"idp": entry["entity_id"], "next": "/"})
        )
        _expect(start.status == 302, f"expected redirect to IdP, got {start.status}")
        location = start.header("Location") or ""
        _expect(
            location.startswith(entry["sso_url"]),
            f"redirect did not target the IdP SSO endpoint: {location}",
        )
        params = self.mock_idp(idp_index).respond_to_url(
            location, principal, self.clock(), **mutations
        )
        return browser.post("/saml/acs", form=params)

    def pki_login(self, cert_name: str) -> tuple[FakeBrowser, Response]:
        browser = self.browser(cert_name)
        response = browser.get(self.gateway.config.pki_base_url + "/login/pki")
        return browser, response

    def admin_json(
        self, browser: FakeBrowser, method: str, path: str, payload: dict | None = None
    ) -> Response:
        body = json.dumps(payload).encode() if payload is not None else b""
        return browser.request(method, path, body=body, headers=dict(ADMIN_HEADERS))

    def last_audit(self) -> dict:
        records = self.gateway.audit.records
        _expect(bool(records), "no audit records written")
        return records[-1]

    def reduced_aggregate(self, drop_entity_id: str) -> bytes:
        """Re-sign the fixture aggregate with one IdP removed."""
        root = parse_xml((self.manifest.root / "saml" / "aggregate.xml").read_bytes())
        for child in list(root):
            if child.tag == q("ds", "Signature"):
                root.remove(child)
            elif child.tag == q("md", "EntityDescriptor") and child.get("entityID") == drop_entity_id:
                root.remove(child)
        key = load_pem_private_key(
            (self.manifest.root / "saml" / "federation.key.pem").read_bytes(),
            password=None,
        )
        cert = x509.load_pem_x509_certificate(
            (self.manifest.root / "saml" / "federation.cert.pem").read_bytes()
        )
        sign_enveloped(root, key, cert)
        return serialize(root)


# -- PKI scenarios -------------------------------------------------------


def _scn_pki_login(ctx: ScenarioContext) -> None:
    expected = ctx.manifest.scenario("pki-login")
    fetches_before = ctx.gateway.fetch_count
    browser, response = ctx.pki_login(expected["user_cert"])
    _expect(response.status == 200, f"expected landing page, got {response.status}")
    _expect(browser.has_session, "no session cookie after certificate login")
    _expect(
        ctx.gateway.fetch_count == fetches_before,
        "login performed network fetches; revocation must come from the warm cache",
    )

    end_entity = parse_certificate(ctx.client_der(expected["user_cert"]))
    chain = discover_path(
        end_entity, ctx.gateway.config.pki.pool, ctx.gateway.config.pki.path_config
    )
    _expect(
        len(chain) == expected["chain_length"],
        f"chain length {len(chain)} != {expected['chain_length']}",
    )
    result = validate_path(
        chain, ctx.gateway.crl_cache, ctx.gateway.config.pki.path_config, ctx.clock()
    )
    _expect(result.valid, f"validation outcome {result.outcome.value}")
    _expect(
        result.effective_policies == frozenset(expected["effective_policies"]),
        f"effective policies {sorted(result.effective_policies)}",
    )
    _expect(result.sdn == expected["sdn"], f"subject DN mismatch: {result.sdn}")


def _pki_rejection(ctx: ScenarioContext, name: str, outcome_value: str) -> None:
    expected = ctx.manifest.scenario(name)
    browser, response = ctx.pki_login(expected["user_cert"])
    _expect(response.status == 403, f"expected 403, got {response.status}")
    _expect(not browser.has_session, "rejected login still produced a session")
    record = ctx.last_audit()
    _expect(
        record["action"] == "pki-login-rejected"
        and record["detail"].startswith(outcome_value),
        f"audit record does not pin the cause: {record}",
    )


def _scn_policy_reject(ctx: ScenarioContext) -> None:
    _pki_rejection(ctx, "policy-reject", "policy-violation")


def _scn_revoked_user(ctx: ScenarioContext) -> None:
    _pki_rejection(ctx, "revoked-user", "revoked")


def _scn_expired_user(ctx: ScenarioContext) -> None:
    _pki_rejection(ctx, "expired-user", "expired")


def _scn_crl_outage(ctx: ScenarioContext) -> None:
    expected = ctx.manifest.scenario("crl-outage")
    broken = next(s for s in ctx.gateway.config.pki.crl_sources if "a-issuing" in s)

    def flaky_fetch(source: str) -> bytes:
        if source == broken:
            raise OSError("distribution point unreachable")
        return Path(source).read_bytes()

    report = ctx.gateway.refresh_crls_now(fetch=flaky_fetch)
    _expect(not report.all_ok, "refresh should report the unreachable source")
    failed = [o for o in report.outcomes if not o.ok]
    _expect(
        len(failed) == 1 and failed[0].source == broken,
        f"unexpected failure set: {[(o.source, o.detail) for o in failed]}",
    )

    browser, response = ctx.pki_login(expected["user_cert"])
    _expect(
        response.status == 200 and browser.has_session,
        "login must keep working from the retained CRL snapshot",
    )


def _scn_loop(ctx: ScenarioContext) -> None:
    expected = ctx.manifest.scenario("loop")
    pool = ctx.gateway.config.pki.pool
    _expect(
        "cross-a-to-bridge" in pool,
        "pool is missing the loop-forming cross-certificate",
    )
    end_entity = parse_certificate(ctx.client_der("user-valid-mh"))
    chain = discover_path(end_entity, pool, ctx.gateway.config.pki.path_config)
    first = validate_path(
        chain, ctx.gateway.crl_cache, ctx.gateway.config.pki.path_config, ctx.clock()
    )
    _expect(first.valid, f"baseline validation failed: {first.outcome.value}")
    for _ in range(int(expected["iterations"]) - 1):
        again = validate_path(
            chain, ctx.gateway.crl_cache, ctx.gateway.config.pki.path_config, ctx.clock()
        )
        _expect(again == first, "validation result drifted between iterations")


# -- SAML scenarios ----------------------------------------------------------


def _scn_saml_login(ctx: ScenarioContext) -> None:
    expected = ctx.manifest.scenario("saml-login")
    browser = ctx.browser()
    response = ctx.saml_login(browser, expected["eppn"])
    _expect(response.status == 200, f"expected landing page, got {response.status}")
    _expect(browser.has_session, "no session cookie after federated login")
    record = ctx.last_audit()
    _expect(record["action"] == "saml-login", f"unexpected final audit record: {record}")


def _saml_rejection(ctx: ScenarioContext, name: str, **mutations) -> None:
    expected = ctx.manifest.scenario(name)
    eppn = ctx.manifest["users"]["jdoe"]["eppn"]
    browser = ctx.browser()
    response = ctx.saml_login(browser, eppn, **mutations)
    _expect(response.status == 403, f"expected 403, got {response.status}")
    _expect(not browser.has_session, "rejected response still produced a session")
    record = ctx.last_audit()
    _expect(
        record["action"] == "saml-login-rejected" and record["target"] == expected["check"],
        f"expected rejection by {expected['check']}, audit says: {record}",
    )


def _scn_unknown_issuer(ctx: ScenarioContext) -> None:
    _saml_rejection(ctx, "unknown-issuer", issuer_override="https://rogue.example/idp")


def _scn_tamper(ctx: ScenarioContext) -> None:
    _saml_rejection(ctx, "tamper", tamper_after_signing=True)


def _scn_wrong_destination(ctx: ScenarioContext) -> None:
    _saml_rejection(
        ctx, "wrong-destination", destination_override="https://elsewhere.example/acs"
    )


def _scn_unsolicited(ctx: ScenarioContext) -> None:
    _saml_rejection(ctx, "unsolicited", unsolicited=True)


def _scn_time_window(ctx: ScenarioContext) -> None:
    now = ctx.clock()
    _saml_rejection(
        ctx,
        "time-window",
        window_override=(now - timedelta(hours=2), now - timedelta(hours=1)),
    )


def _scn_audience(ctx: ScenarioContext) -> None:
    _saml_rejection(ctx, "audience", audience_override="https://other-sp.example/sp")


def _scn_replay(ctx: ScenarioContext) -> None:
    expected = ctx.manifest.scenario("replay")
    eppn = ctx.manifest["users"]["jdoe"]["eppn"]
    assertion_id = "_a" + "5c" * 16

    first = ctx.browser()
    response = ctx.saml_login(first, eppn, assertion_id=assertion_id)
    _expect(
        response.status == 200 and first.has_session,
        "first presentation of the assertion must succeed",
    )

    second = ctx.browser()
    response = ctx.saml_login(second, eppn, assertion_id=assertion_id)
    _expect(response.status == 403, f"expected 403 on replay, got {response.status}")
    _expect(not second.has_session, "replayed assertion still produced a session")
    record = ctx.last_audit()
    _expect(
        record["action"] == "saml-login-rejected" and record["target"] == expected["check"],
        f"expected rejection by {expected['check']}, audit says: {record}",
    )


def _scn_privacy_idp(ctx: ScenarioContext) -> None:
    browser = ctx.browser()
    response = ctx.saml_login(browser, None, empty_attributes=True)
    _expect(response.status == 403, f"expected 403, got {response.status}")
    _expect(
        b"released no attributes" in response.body,
        "page must explain that the IdP withheld attributes",
    )
    _expect(not browser.has_session, "attribute-free login still produced a session")
    _expect(
        ctx.gateway.store.list_pending() == [],
        "nothing actionable should be queued for admins",
    )
    record = ctx.last_audit()
    _expect(
        record["action"] == "saml-login-empty-attributes",
        f"unexpected audit record: {record}",
    )


def _scn_idp_removed(ctx: ScenarioContext) -> None:
    expected = ctx.manifest.scenario("idp-removed")
    entry = ctx.manifest["idp"][0]
    eppn = ctx.manifest["users"]["jdoe"]["eppn"]

    # Start the exchange while the IdP is still published...
    browser = ctx.browser()
    start = browser.get(
        "/login/saml?" + urlencode({"idp": entry["entity_id"], "next": "/"})
    )
    _expect(start.status == 302, f"expected redirect to IdP, got {start.status}")
    params = ctx.mock_idp(0).respond_to_url(
        start.header("Location"), eppn, ctx.clock()
    )

    # ...then drop it from the aggregate before the response lands.
    reduced = ctx.reduced_aggregate(drop_entity_id=entry["entity_id"])
    status = ctx.gateway.refresh_metadata_now(fetch=lambda source: reduced)
    _expect(status.refreshed, f"reduced aggregate did not load: {status.detail}")

    response = browser.post("/saml/acs", form=params)
    _expect(response.status == 403, f"expected 403, got {response.status}")
    record = ctx.last_audit()
    _expect(
        record["action"] == "saml-login-rejected" and record["target"] == expected["check"],
        f"expected rejection by {expected['check']}, audit says: {record}",
    )


def _scn_encrypted_assertion(ctx: ScenarioContext) -> None:
    expected = ctx.manifest.scenario("encrypted-assertion")
    browser = ctx.browser()
    response = ctx.saml_login(
        browser,
        expected["eppn"],
        encrypt_for=ctx.gateway.config.saml.sp_key.public_key(),
    )
    _expect(response.status == 200, f"expected landing page, got {response.status}")
    _expect(browser.has_session, "no session after encrypted-assertion login")


# -- onboarding scenarios ----------------------------------------------------


def _approve_sole_pending(ctx: ScenarioContext, identifier: str, user_id: int) -> None:
    pending = ctx.gateway.store.list_pending()
    _expect(
        len(pending) == 1 and pending[0].identifier == identifier,
        f"expected one pending credential for {identifier}, got "
        f"{[(p.kind, p.identifier) for p in pending]}",
    )
    admin = ctx.admin_browser()
    response = ctx.admin_json(
        admin,
        "POST",
        f"/api/admin/pending/{pending[0].pending_id}/approve",
        {"user_id": user_id},
    )
    _expect(response.status == 200, f"approval failed: {response.body!r}")
    _expect(ctx.gateway.store.list_pending() == [], "pending queue should drain")


def _scn_onboard_saml(ctx: ScenarioContext) -> None:
    expected = ctx.manifest.scenario("onboard-saml")
    eppn = expected["eppn"]

    browser = ctx.browser()
    response = ctx.saml_login(browser, eppn)
    _expect(
        response.status == 403 and eppn.encode() in response.body,
        "unknown principal must land on the pending-approval page",
    )
    _expect(not browser.has_session, "unknown principal must not get a session")

    admin = ctx.admin_browser()
    created = ctx.admin_json(
        admin,
        "POST",
        "/api/admin/users",
        {"username": "newuser", "email": eppn},
    )
    _expect(created.status == 201, f"user creation failed: {created.body!r}")
    user_id = created.json_body()["user_id"]
    _approve_sole_pending(ctx, eppn, user_id)

    retry = ctx.browser()
    response = ctx.saml_login(retry, eppn)
    _expect(
        response.status == 200 and retry.has_session,
        "approved principal must be able to sign in",
    )


def _scn_onboard_pki(ctx: ScenarioContext) -> None:
    expected = ctx.manifest.scenario("onboard-pki")
    jdoe_id = ctx.manifest["users"]["jdoe"]["user_id"]
    sdn = ctx.manifest["users"]["jdoe"]["sdn"]

    # Make the certificate unknown again: drop the seeded mapping.
    mappings = ctx.gateway.store.list_mappings(jdoe_id)
    _expect(len(mappings) == 1, "fixture should seed exactly one mapping for jdoe")
    ctx.gateway.store.remove_certificate(mappings[0].cert_id)

    browser, response = ctx.pki_login(expected["user_cert"])
    _expect(
        response.status == 403 and sdn.encode() in response.body,
        "unmapped certificate must land on the pending-approval page",
    )
    _expect(not browser.has_session, "unmapped certificate must not get a session")

    _approve_sole_pending(ctx, sdn, jdoe_id)

    retry, response = ctx.pki_login(expected["user_cert"])
    _expect(
        response.status == 200 and retry.has_session,
        "approved certificate must be able to sign in",
    )


SCENARIOS: dict[str, callable] = {
    "pki-login": _scn_pki_login,
    "policy-reject": _scn_policy_reject,
    "revoked-user": _scn_revoked_user,
    "expired-user": _scn_expired_user,
    "crl-outage": _scn_crl_outage,
    "loop": _scn_loop,
    "saml-login": _scn_saml_login,
    "unknown-issuer": _scn_unknown_issuer,
    "tamper": _scn_tamper,
    "wrong-destination": _scn_wrong_destination,
    "unsolicited": _scn_unsolicited,
    "time-window": _scn_time_window,
    "audience": _scn_audience,
    "replay": _scn_replay,
    "privacy-idp": _scn_privacy_idp,
    "idp-removed": _scn_idp_removed,
    "encrypted-assertion": _scn_encrypted_assertion,
    "onboard-saml": _scn_onboard_saml,
    "onboard-pki": _scn_onboard_pki,
}


def run_scenario(name: str, fixture_dir: str | Path) -> ScenarioResult:
    """Run one named scenario against a pristine gateway."""
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}")
    manifest = load_manifest(fixture_dir)
    with tempfile.TemporaryDirectory(prefix=f"fedgate-{name}-") as tmp:
        ctx = ScenarioContext(manifest, Path(tmp))
        try:
            SCENARIOS[name](ctx)
        except ScenarioFailure as exc:
            return ScenarioResult(name, False, str(exc), ctx.transcript)
        return ScenarioResult(name, True, "ok", ctx.transcript)


def run_all(fixture_dir: str | Path) -> list[ScenarioResult]:
    return [run_scenario(name, fixture_dir) for name in SCENARIOS]
