"""Handler-layer behavior: gating, redirect cookie, admin API, key pages."""

from __future__ import annotations

from datetime import timedelta

import pytest
from cryptography.hazmat.primitives.asymmetric import ed25519, rsa
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from fedgate.gateway.app import NEXT_COOKIE
from fedgate.sessions import COOKIE_NAME
from fedgate.testbed.scenarios import ADMIN_HEADERS


def _user_browser(ctx, username):
    user_id = ctx.manifest["users"][username]["user_id"]
    session, _ = ctx.gateway.sessions.create(user_id, "saml", ctx.clock())
    browser = ctx.browser()
    browser.cookies[COOKIE_NAME] = session.token
    return browser


def _openssh_line(key, comment):
    public = key.public_key().public_bytes(Encoding.OpenSSH, PublicFormat.OpenSSH)
    return public.decode() + " " + comment


@pytest.fixture()
def ed_line():
    return _openssh_line(ed25519.Ed25519PrivateKey.generate(), "user@laptop")


class TestAuthGating:
    def test_unauthenticated_page_redirects_to_login(self, ctx):
        response = ctx.browser().get("/sshkeys", follow_redirects=False)
        assert response.status == 302
        assert response.header("Location") == "/login?next=%2Fsshkeys"

    def test_query_string_preserved_in_next(self, ctx):
        response = ctx.browser().get("/?tab=keys", follow_redirects=False)
        assert response.header("Location") == "/login?next=%2F%3Ftab%3Dkeys"

    def test_unauthenticated_api_gets_401_json(self, ctx):
        response = ctx.browser().get("/api/admin/users")
        assert response.status == 401
        assert response.json_body() == {"error": "authentication required"}

    def test_garbage_session_token_treated_as_anonymous(self, ctx):
        browser = ctx.browser()
        browser.cookies[COOKIE_NAME] = "forged-token"
        response = browser.get("/", follow_redirects=False)
        assert response.status == 302

    def test_unknown_page_is_404_when_signed_in(self, ctx):
        response = _user_browser(ctx, "jdoe").get("/no/such/page")
        assert response.status == 404


class TestNextCookie:
    """The post-login destination rides in a signed, short-lived cookie."""

    def _login_then_pki(self, ctx, next_path, mangle=None):
        browser = ctx.browser(ctx.manifest.scenario("pki-login")["user_cert"])
        browser.get(f"/login?next={next_path}")
        assert NEXT_COOKIE in browser.cookies
        if mangle:
            mangle(browser)
        return browser.get(
            ctx.gateway.config.pki_base_url + "/login/pki", follow_redirects=False
        )

    def test_intact_cookie_routes_to_destination(self, ctx):
        response = self._login_then_pki(ctx, "/sshkeys")
        assert response.status == 302
        assert response.header("Location") == ctx.gateway.config.main_base_url + "/sshkeys"

    def test_tampered_cookie_falls_back_to_root(self, ctx):
        def flip(browser):
            value = browser.cookies[NEXT_COOKIE]
            browser.cookies[NEXT_COOKIE] = ("A" if value[0] != "A" else "B") + value[1:]

        response = self._login_then_pki(ctx, "/sshkeys", mangle=flip)
        assert response.header("Location") == ctx.gateway.config.main_base_url + "/"

    def test_expired_cookie_falls_back_to_root(self, ctx):
        def age_out(browser):
            ctx.clock.advance(timedelta(minutes=6))

        response = self._login_then_pki(ctx, "/sshkeys", mangle=age_out)
        assert response.header("Location") == ctx.gateway.config.main_base_url + "/"

    def test_offsite_destination_never_signed(self, ctx):
        # The login page refuses to sign a non-local destination at all.
        response = self._login_then_pki(ctx, "https%3A%2F%2Fevil.example%2F")
        assert response.header("Location") == ctx.gateway.config.main_base_url + "/"

    def test_missing_cookie_falls_back_to_root(self, ctx):
        def strip(browser):
            del browser.cookies[NEXT_COOKIE]

        response = self._login_then_pki(ctx, "/sshkeys", mangle=strip)
        assert response.header("Location") == ctx.gateway.config.main_base_url + "/"


class TestFailurePages:
    def test_missing_client_certificate(self, ctx):
        response = ctx.browser().get(ctx.gateway.config.pki_base_url + "/login/pki")
        assert response.status == 401
        assert b"data-category='bad credential'" in response.body

    def test_metadata_outage_shows_provider_unavailable(self, ctx):
        ctx.gateway.metadata_cache = None
        response = ctx.browser().get("/login/saml?idp=x")
        assert response.status == 503
        assert b"data-category='provider unavailable'" in response.body

    def test_login_page_lists_providers(self, ctx):
        response = ctx.browser().get("/login")
        assert response.status == 200
        assert b"Example University One" in response.body
        assert b"client certificate" in response.body


class TestLogout:
    def test_logout_clears_cookie_and_session(self, ctx):
        browser = _user_browser(ctx, "jdoe")
        assert browser.get("/").status == 200
        token = browser.cookies[COOKIE_NAME]
        response = browser.get("/logout", follow_redirects=False)
        assert response.status == 302
        assert response.header("Location") == "/login"
        assert COOKIE_NAME not in browser.cookies
        assert ctx.gateway.sessions.validate(token, ctx.clock()) is None


class TestSshKeyPages:
    def test_round_trip_through_the_form(self, ctx, ed_line):
        browser = _user_browser(ctx, "jdoe")
        response = browser.post("/sshkeys", form={"authorized_keys": ed_line})
        assert response.status == 200
        body = response.json_body()
        assert body["written"] == 1
        assert body["verdicts"][0]["accepted"] is True

        page = browser.get("/sshkeys")
        assert page.status == 200
        assert body["verdicts"][0]["fingerprint"].encode() in page.body

    def test_malformed_lines_rejected_with_line_numbers(self, ctx, ed_line):
        browser = _user_browser(ctx, "jdoe")
        response = browser.post(
            "/sshkeys", form={"authorized_keys": ed_line + "\nnot a key\n"}
        )
        assert response.status == 422
        body = response.json_body()
        assert body["error"] == "malformed entries"
        assert [entry["line"] for entry in body["lines"]] == [2]

    def test_vetoed_key_rejected_and_file_untouched(self, ctx, ed_line):
        browser = _user_browser(ctx, "jdoe")
        browser.post("/sshkeys", form={"authorized_keys": ed_line})

        weak = _openssh_line(
            rsa.generate_private_key(public_exponent=65537, key_size=1024), "weak@host"
        )
        response = browser.post(
            "/sshkeys", form={"authorized_keys": ed_line + "\n" + weak}
        )
        assert response.status == 422
        body = response.json_body()
        assert body["error"] == "vetoed keys"
        refused = [v for v in body["verdicts"] if not v["accepted"]]
        assert len(refused) == 1
        assert refused[0]["reasons"] == ["WeakLength"]

        username = "jdoe"
        assert ctx.gateway.authority.read(username).strip() == ed_line


class TestAdminApi:
    def test_non_admin_forbidden(self, ctx):
        browser = _user_browser(ctx, "jdoe")
        response = ctx.admin_json(browser, "GET", "/api/admin/users")
        assert response.status == 403

    def test_version_header_required(self, ctx):
        admin = ctx.admin_browser()
        response = admin.get("/api/admin/users")
        assert response.status == 400
        assert "X-Admin-Api-Version" in response.json_body()["error"]
        response = admin.request(
            "GET", "/api/admin/users", headers={**ADMIN_HEADERS, "X-Admin-Api-Version": "2"}
        )
        assert response.status == 400

    def test_user_listing_shape(self, ctx):
        admin = ctx.admin_browser()
        body = ctx.admin_json(admin, "GET", "/api/admin/users").json_body()
        by_name = {u["username"]: u for u in body["users"]}
        jdoe = by_name["jdoe"]
        assert set(jdoe) == {
            "user_id", "username", "email", "active", "ts_principal", "mappings",
        }
        assert jdoe["ts_principal"] == ctx.manifest["users"]["jdoe"]["eppn"]
        assert jdoe["mappings"][0]["subject_dn"] == ctx.manifest["users"]["jdoe"]["sdn"]

    def test_create_patch_and_fetch_user(self, ctx):
        admin = ctx.admin_browser()
        created = ctx.admin_json(
            admin, "POST", "/api/admin/users",
            {"username": "fresh", "email": "fresh@example.edu"},
        )
        assert created.status == 201
        user_id = created.json_body()["user_id"]

        patched = ctx.admin_json(
            admin, "PATCH", f"/api/admin/users/{user_id}",
            {"email": "new@example.edu", "ts_principal": "fresh@example.edu"},
        )
        assert patched.status == 200
        body = patched.json_body()
        assert body["email"] == "new@example.edu"
        assert body["ts_principal"] == "fresh@example.edu"

        fetched = ctx.admin_json(admin, "GET", f"/api/admin/users/{user_id}")
        assert fetched.json_body() == body

    def test_unknown_user_is_404(self, ctx):
        admin = ctx.admin_browser()
        assert ctx.admin_json(admin, "GET", "/api/admin/users/999").status == 404
        assert ctx.admin_json(admin, "DELETE", "/api/admin/certs/999").status == 404
        assert (
            ctx.admin_json(admin, "POST", "/api/admin/pending/999/reject").status == 404
        )

    def test_unknown_endpoint_is_404(self, ctx):
        admin = ctx.admin_browser()
        assert ctx.admin_json(admin, "GET", "/api/admin/frobnicate").status == 404

    def test_mapping_conflict_is_409(self, ctx):
        admin = ctx.admin_browser()
        taken_sdn = ctx.manifest["users"]["jdoe"]["sdn"]
        admin_id = ctx.manifest["users"]["admin"]["user_id"]
        response = ctx.admin_json(
            admin, "POST", f"/api/admin/users/{admin_id}/certs",
            {"subject_dn": taken_sdn},
        )
        assert response.status == 409
        assert "already mapped" in response.json_body()["error"]

    def test_cert_mapping_lifecycle(self, ctx):
        admin = ctx.admin_browser()
        admin_id = ctx.manifest["users"]["admin"]["user_id"]
        created = ctx.admin_json(
            admin, "POST", f"/api/admin/users/{admin_id}/certs",
            {"subject_dn": "/C=US/CN=Admin.Alt", "not_after": "2027-01-01T00:00:00+00:00"},
        )
        assert created.status == 201
        cert_id = created.json_body()["cert_id"]
        assert (
            ctx.admin_json(admin, "DELETE", f"/api/admin/certs/{cert_id}").status == 204
        )
        assert ctx.gateway.store.find_user_by_sdn("/C=US/CN=Admin.Alt") is None

    def test_deactivation_revokes_live_sessions(self, ctx):
        victim = _user_browser(ctx, "jdoe")
        assert victim.get("/").status == 200

        admin = ctx.admin_browser()
        jdoe_id = ctx.manifest["users"]["jdoe"]["user_id"]
        response = ctx.admin_json(
            admin, "PATCH", f"/api/admin/users/{jdoe_id}", {"active": False}
        )
        assert response.status == 200 and response.json_body()["active"] is False

        bounced = victim.get("/", follow_redirects=False)
        assert bounced.status == 302  # straight back to sign-in

        ctx.admin_json(admin, "PATCH", f"/api/admin/users/{jdoe_id}", {"active": True})
        assert ctx.gateway.store.get_user(jdoe_id).active

    def test_pending_queue_endpoints(self, ctx):
        ctx.gateway.store.record_failed_credential(
            "saml", "newcomer@example.edu", "idp=x", ctx.clock()
        )
        ctx.gateway.store.record_failed_credential("pki", "/CN=Stranger", "", ctx.clock())

        admin = ctx.admin_browser()
        listing = ctx.admin_json(admin, "GET", "/api/admin/pending").json_body()
        by_kind = {p["kind"]: p for p in listing["pending"]}
        assert set(by_kind) == {"saml", "pki"}
        assert by_kind["saml"]["identifier"] == "newcomer@example.edu"
        assert by_kind["saml"]["attempt_count"] == 1

        jdoe_id = ctx.manifest["users"]["jdoe"]["user_id"]
        rejected = ctx.admin_json(
            admin, "POST", f"/api/admin/pending/{by_kind['saml']['pending_id']}/reject"
        )
        assert rejected.status == 200

        # Approving the certificate onto a user who already holds the
        # jdoe SDN is fine; it is a different subject.
        approved = ctx.admin_json(
            admin, "POST", f"/api/admin/pending/{by_kind['pki']['pending_id']}/approve",
            {"user_id": jdoe_id},
        )
        assert approved.status == 200
        assert ctx.gateway.store.list_pending() == []
        assert ctx.gateway.store.find_user_by_sdn("/CN=Stranger").user.user_id == jdoe_id

    def test_actions_are_audited(self, ctx):
        admin = ctx.admin_browser()
        ctx.admin_json(
            admin, "POST", "/api/admin/users",
            {"username": "audited", "email": "a@example.edu"},
        )
        record = ctx.last_audit()
        assert record["action"] == "create-user"
        assert record["target"] == "audited"
        assert record["actor"] == "admin"


class TestStaticAssets:
    def test_admin_console_served_from_registered_assets(self, ctx):
        ctx.gateway.static_assets["/admin/index.html"] = (
            "text/html; charset=utf-8",
            b"<html>console</html>",
        )
        for path in ("/admin/", "/admin/index.html"):
            response = ctx.browser().get(path)
            assert response.status == 200
            assert response.body == b"<html>console</html>"

    def test_unknown_asset_is_404(self, ctx):
        assert ctx.browser().get("/static/missing.js").status == 404

    def test_load_static_assets_from_directory(self, ctx, tmp_path):
        assets = tmp_path / "assets"
        (assets / "sub").mkdir(parents=True)
        (assets / "index.html").write_text("<html>console</html>")
        (assets / "sub" / "app.js").write_text("export {};")
        assert ctx.gateway.load_static_assets(assets) == 2

        page = ctx.browser().get("/admin/index.html")
        assert page.status == 200
        assert page.header("Content-Type") == "text/html; charset=utf-8"
        script = ctx.browser().get("/admin/sub/app.js")
        assert script.status == 200
        assert script.body == b"export {};"
