"""HTTP front end: provider selection, both login flows, onboarding,
SSH key self-service and the admin API.

Error detail shown to users is deliberately coarse (bad credential,
pending approval, provider unavailable, internal); the specific cause
goes to the audit log for privileged review.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import html
import logging
import threading
from datetime import datetime, timezone
from urllib.parse import urlencode

from ..pki.certs import MalformedEncoding, UnsupportedVersion, parse_certificate
from ..pki.crl import CrlCache, enumerate_sources, refresh_crls
from ..pki.path import (
    BrokenConfiguredPath,
    NoConfiguredPath,
    PathOutcome,
    discover_path,
    validate_path,
)
from ..saml import sp as saml_sp
from ..saml.metadata import MetadataCache, refresh_metadata
from ..saml.sp import PendingRequestStore, ReplayStore, SamlError
from ..sessions import COOKIE_NAME, SessionStore
from ..sshkeys import (
    UserFileAuthority,
    VetoedKey,
    evaluate_key,
    load_blacklist,
    parse_authorized_keys,
    write_authorized_keys,
)
from ..store import ConflictingMapping, IdentityStore, StoreError, UnknownUser
from .audit import AuditLog
from .config import GatewayConfig
from .http import MAIN_LISTENER, PKI_LISTENER, Request, Response

logger = logging.getLogger(__name__)

ADMIN_API_VERSION = "1"
NEXT_COOKIE = "fedgate_next"

# Paths reachable without a session, per listener.  Everything else
# requires a valid session cookie.
PUBLIC_MAIN_PATHS = {"/login", "/login/saml", "/saml/acs"}
PUBLIC_MAIN_PREFIXES = ("/static/", "/admin/")
PUBLIC_PKI_PATHS = {"/login/pki"}


def _page(title: str, body: str) -> str:
    return (
        "<!doctype html><html><head><title>"
        + html.escape(title)
        + "</title></head><body>"
        + body
        + "</body></html>"
    )


class Gateway:
    def __init__(self, config: GatewayConfig, clock=None, fetch_counter_hook=None):
        self.config = config
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self.store = IdentityStore(config.store_path)
        self.sessions = SessionStore(config.session_policy)
        self.store.on_deactivate = self.sessions.destroy_all_for_user
        self.audit = AuditLog(config.audit_log_path)
        self.pending_requests = PendingRequestStore()
        self.replay_seen = ReplayStore()
        self.authority = UserFileAuthority(config.ssh.authority_root)
        self.debian_blacklist = (
            load_blacklist(config.ssh.blacklist_path)
            if config.ssh.blacklist_path
            else frozenset()
        )
        self.static_assets: dict[str, tuple[str, bytes]] = {}

        self._state_lock = threading.Lock()
        self.metadata_cache: MetadataCache | None = None
        self.metadata_degraded = False
        self.crl_cache = CrlCache()
        self.fetch_count = 0
        self._fetch_hook = fetch_counter_hook

    # -- background refresh entry points --------------------------------

    def _counted_fetch(self, base_fetch):
        def fetch(source):
            self.fetch_count += 1
            if self._fetch_hook is not None:
                self._fetch_hook(source)
            return base_fetch(source)

        return fetch

    def refresh_metadata_now(self, fetch=None):
        from ..saml.metadata import default_fetch

        fetch = self._counted_fetch(fetch or default_fetch)
        cache, status = refresh_metadata(
            self.metadata_cache, self.config.saml, self.clock(), fetch
        )
        with self._state_lock:
            self.metadata_cache = cache
            self.metadata_degraded = status.degraded
        if not status.refreshed:
            logger.warning("metadata refresh: %s", status.detail)
        return status

    def refresh_crls_now(self, fetch=None):
        from ..pki.crl import default_fetch

        fetch = self._counted_fetch(fetch or default_fetch)
        sources = enumerate_sources(self.config.pki.crl_sources, self.config.pki.pool)
        cache, report = refresh_crls(
            self.crl_cache, sources, self.config.pki.pool, self.clock(), fetch
        )
        with self._state_lock:
            self.crl_cache = cache
        if not report.all_ok:
            logger.warning(
                "CRL refresh partial failure: %s",
                [o.detail for o in report.outcomes if not o.ok],
            )
        return report

    def expire_crl_cache(self) -> None:
        """Testbed hook: drop all cached CRLs (simulates staleness)."""
        with self._state_lock:
            self.crl_cache = CrlCache()

    # -- session helpers -------------------------------------------------

    def _session_user(self, request: Request):
        token = request.cookies.get(COOKIE_NAME)
        if not token:
            return None
        user_id = self.sessions.validate(token, self.clock())
        if user_id is None:
            return None
        try:
            user = self.store.get_user(user_id)
        except UnknownUser:
            return None
        if not user.active:
            self.sessions.destroy_all_for_user(user_id)
            return None
        return user

    def _sign_next(self, destination: str, now: datetime) -> str:
        expires = str(int(now.timestamp()) + 300)
        mac = hmac.new(
            self.config.redirect_secret,
            f"{destination}|{expires}".encode(),
            hashlib.sha256,
        ).hexdigest()
        payload = base64.urlsafe_b64encode(
            f"{destination}|{expires}|{mac}".encode()
        ).decode()
        return f"{NEXT_COOKIE}={payload}; Path=/; Secure; HttpOnly; SameSite=Lax; Max-Age=300"

    def _verify_next(self, request: Request) -> str:
        raw = request.cookies.get(NEXT_COOKIE)
        if not raw:
            return "/"
        try:
            destination, expires, mac = (
                base64.urlsafe_b64decode(raw.encode()).decode().split("|")
            )
            expected = hmac.new(
                self.config.redirect_secret,
                f"{destination}|{expires}".encode(),
                hashlib.sha256,
            ).hexdigest()
            if not hmac.compare_digest(mac, expected):
                return "/"
            if int(expires) < int(self.clock().timestamp()):
                return "/"
            if not destination.startswith("/"):
                return "/"
            return destination
        except Exception:
            return "/"

    # -- request dispatch --------------------------------------------------

    def handle(self, request: Request) -> Response:
        try:
            if request.listener == PKI_LISTENER:
                return self._handle_pki_listener(request)
            return self._handle_main_listener(request)
        except Exception:
            logger.exception("unhandled error for %s %s", request.method, request.path)
            return self._failure_page("internal", "An internal error occurred.", 500)

    def _is_public_main(self, path: str) -> bool:
        return path in PUBLIC_MAIN_PATHS or path.startswith(PUBLIC_MAIN_PREFIXES)

    def _handle_main_listener(self, request: Request) -> Response:
        path = request.path
        if path == "/login" and request.method == "GET":
            return self._login_page(request)
        if path == "/login/saml" and request.method == "GET":
            return self._start_saml(request)
        if path == "/saml/acs" and request.method == "POST":
            return self._saml_acs(request)
        if path.startswith(PUBLIC_MAIN_PREFIXES):
            return self._static(request)

        user = self._session_user(request)
        if user is None:
            if path.startswith("/api/"):
                return Response.json({"error": "authentication required"}, 401)
            destination = path
            if request.query:
                destination += "?" + urlencode(request.query)
            return Response.redirect("/login?" + urlencode({"next": destination}))

        if path == "/" and request.method == "GET":
            return Response.html(
                _page(
                    "Gateway",
                    f"<h1>Signed in as {html.escape(user.username)}</h1>"
                    '<p><a href="/sshkeys">SSH keys</a> &middot; <a href="/logout">Log out</a></p>',
                )
            )
        if path == "/logout":
            token = request.cookies.get(COOKIE_NAME, "")
            self.sessions.destroy(token)
            return Response.redirect("/login").with_cookie(
                f"{COOKIE_NAME}=; Path=/; Max-Age=0"
            )
        if path == "/sshkeys" and request.method == "GET":
            return self._sshkeys_view(user)
        if path == "/sshkeys" and request.method == "POST":
            return self._sshkeys_update(user, request)
        if path.startswith("/api/admin/"):
            return self._admin_api(user, request)
        return self._failure_page("internal", "No such page.", 404)

    def _handle_pki_listener(self, request: Request) -> Response:
        if request.path in PUBLIC_PKI_PATHS or request.path == "/":
            return self._pki_login(request)
        return self._failure_page("internal", "No such page.", 404)

    # -- pages -------------------------------------------------------------

    def _failure_page(self, category: str, message: str, status: int = 403) -> Response:
        # Coarse category only; specifics live in the audit log.
        return Response.html(
            _page(
                "Sign-in failed",
                f"<h1>Sign-in failed</h1><p data-category={html.escape(category)!r}>"
                f"{html.escape(message)}</p><p><a href='/login'>Back to sign-in</a></p>",
            ),
            status,
        )

    def _pending_page(self, identifier: str) -> Response:
        return Response.html(
            _page(
                "Pending approval",
                "<h1>Account link pending approval</h1>"
                "<p>Your credential was recorded and is awaiting administrator review:</p>"
                f"<pre>{html.escape(identifier)}</pre>",
            ),
            403,
        )

    def _login_page(self, request: Request) -> Response:
        next_path = request.query.get("next", "/")
        if not next_path.startswith("/"):
            next_path = "/"
        cache = self.metadata_cache
        items = []
        if cache is not None and not self.metadata_degraded:
            for entity_id, idp in sorted(cache.entities.items()):
                href = "/login/saml?" + urlencode({"idp": entity_id, "next": next_path})
                items.append(
                    f"<li><a href={href!r}>{html.escape(idp.display_name)}</a></li>"
                )
        else:
            items.append("<li>Federated sign-in temporarily unavailable</li>")
        pki_href = self.config.pki_base_url + "/login/pki"
        items.append(f"<li><a href={pki_href!r}>Sign in with a client certificate</a></li>")
        response = Response.html(
            _page("Sign in", "<h1>Choose a sign-in provider</h1><ul>" + "".join(items) + "</ul>")
        )
        response.with_cookie(self._sign_next(next_path, self.clock()))
        return response

    # -- SAML flow -----------------------------------------------------------

    def _start_saml(self, request: Request) -> Response:
        cache = self.metadata_cache
        now = self.clock()
        if cache is None or not cache.usable_at(now) or self.metadata_degraded:
            return self._failure_page(
                "provider unavailable", "Federation metadata is unavailable.", 503
            )
        idp_entity = request.query.get("idp", "")
        relay_state = request.query.get("next", "/")
        if not relay_state.startswith("/"):
            relay_state = "/"
        try:
            url, record = saml_sp.build_authn_request(
                idp_entity, cache, self.config.saml, relay_state, now
            )
        except saml_sp.UnknownIdp:
            return self._failure_page("bad credential", "Unknown identity provider.", 404)
        self.pending_requests.add(record)
        return Response.redirect(url)

    def _saml_acs(self, request: Request) -> Response:
        now = self.clock()
        cache = self.metadata_cache
        if cache is None or not cache.usable_at(now):
            return self._failure_page(
                "provider unavailable", "Federation metadata is unavailable.", 503
            )
        try:
            principal = saml_sp.consume_response(
                request.form, cache, self.config.saml, self.pending_requests,
                self.replay_seen, now,
            )
        except SamlError as exc:
            self.audit.record(
                "anonymous", "saml-login-rejected", type(exc).__name__, str(exc), now
            )
            return self._failure_page(
                "bad credential", "The sign-in response could not be accepted.", 403
            )
        except (saml_sp.SignatureInvalid, saml_sp.DecryptionFailed, saml_sp.XmlParseError) as exc:
            self.audit.record(
                "anonymous", "saml-login-rejected", type(exc).__name__, str(exc), now
            )
            return self._failure_page(
                "bad credential", "The sign-in response could not be accepted.", 403
            )

        eppn = principal.eppn
        if eppn is None:
            # Privacy-filtering IdP released no attributes: nothing to
            # record, nothing an admin could act on.
            self.audit.record(
                "anonymous", "saml-login-empty-attributes", principal.idp_entity_id, "", now
            )
            return Response.html(
                _page(
                    "Attributes not released",
                    "<h1>Your identity provider released no attributes</h1>"
                    "<p>Sign-in succeeded at your organization, but it did not tell us who "
                    "you are. Ask your identity-provider operators to release "
                    "<code>eduPersonPrincipalName</code> to this service.</p>",
                ),
                403,
            )

        found = self.store.find_user_by_principal(eppn)
        if found is None:
            pending = self.store.record_failed_credential(
                "saml",
                eppn,
                f"idp={principal.idp_entity_id} addr={request.remote_addr}",
                now,
            )
            self.audit.record("anonymous", "saml-login-pending", eppn, f"pending_id={pending.pending_id}", now)
            return self._pending_page(eppn)
        if not found.user.active:
            self.audit.record(found.user.username, "saml-login-denied", eppn, "user deactivated", now)
            return self._failure_page("bad credential", "This account is deactivated.", 403)

        _, cookie = self.sessions.create(found.user.user_id, "saml", now)
        self.audit.record(found.user.username, "saml-login", eppn, "", now)
        destination = request.form.get("RelayState", "/")
        if not destination.startswith("/"):
            destination = "/"
        return Response.redirect(destination).with_cookie(cookie)

    # -- PKI flow --------------------------------------------------------------

    def _pki_login(self, request: Request) -> Response:
        now = self.clock()
        if request.client_cert_der is None:
            return self._failure_page(
                "bad credential", "No client certificate was presented.", 401
            )
        try:
            end_entity = parse_certificate(request.client_cert_der)
        except (MalformedEncoding, UnsupportedVersion) as exc:
            self.audit.record("anonymous", "pki-login-rejected", "parse", str(exc), now)
            return self._failure_page("bad credential", "Certificate could not be parsed.", 400)

        try:
            chain = discover_path(
                end_entity, self.config.pki.pool, self.config.pki.path_config
            )
        except NoConfiguredPath as exc:
            pending = self.store.record_failed_credential(
                "pki",
                end_entity.sdn,
                f"issuer={exc.issuer_one_line} addr={request.remote_addr} (no configured path)",
                now,
            )
            self.audit.record(
                "anonymous", "pki-login-pending", end_entity.sdn,
                f"no configured path; pending_id={pending.pending_id}", now,
            )
            return self._pending_page(end_entity.sdn)
        except BrokenConfiguredPath as exc:
            self.audit.record("anonymous", "pki-login-error", end_entity.sdn, str(exc), now)
            return self._failure_page("internal", "Path configuration error.", 500)

        result = validate_path(chain, self.crl_cache, self.config.pki.path_config, now)
        if not result.valid:
            self.audit.record(
                "anonymous", "pki-login-rejected", end_entity.sdn,
                f"{result.outcome.value} at index {result.failed_index}", now,
            )
            category = (
                "provider unavailable"
                if result.outcome is PathOutcome.REVOCATION_UNAVAILABLE
                else "bad credential"
            )
            return self._failure_page(category, "Certificate validation failed.", 403)

        found = self.store.find_user_by_sdn(result.sdn)
        if found is None:
            pending = self.store.record_failed_credential(
                "pki",
                result.sdn,
                f"issuer={end_entity.issuer_dn.one_line} addr={request.remote_addr}",
                now,
            )
            self.audit.record(
                "anonymous", "pki-login-pending", result.sdn,
                f"pending_id={pending.pending_id}", now,
            )
            return self._pending_page(result.sdn)
        if not found.user.active:
            self.audit.record(found.user.username, "pki-login-denied", result.sdn, "user deactivated", now)
            return self._failure_page("bad credential", "This account is deactivated.", 403)

        _, cookie = self.sessions.create(found.user.user_id, "pki", now)
        self.audit.record(found.user.username, "pki-login", result.sdn, "", now)
        destination = self.config.main_base_url + self._verify_next(request)
        return Response.redirect(destination).with_cookie(cookie)

    # -- SSH key self-service -----------------------------------------------------

    def _verdict_summary(self, verdicts) -> list[dict]:
        return [
            {
                "fingerprint": key.fingerprint,
                "algorithm": key.algorithm,
                "bits": key.bit_length,
                "accepted": verdict.accepted,
                "reasons": [r.value for r in verdict.reasons],
            }
            for key, verdict in verdicts
        ]

    def _sshkeys_view(self, user) -> Response:
        text = self.authority.read(user.username)
        keys, errors = parse_authorized_keys(text)
        rows = []
        for key in keys:
            verdict = evaluate_key(key, self.config.ssh.policy, self.debian_blacklist)
            status = "ok" if verdict.accepted else ", ".join(r.value for r in verdict.reasons)
            rows.append(
                f"<tr><td>{html.escape(key.algorithm)}</td>"
                f"<td>{html.escape(key.fingerprint)}</td>"
                f"<td>{html.escape(key.comment)}</td><td>{html.escape(status)}</td></tr>"
            )
        body = (
            "<h1>SSH keys</h1><table><tr><th>Algorithm</th><th>Fingerprint</th>"
            "<th>Comment</th><th>Status</th></tr>" + "".join(rows) + "</table>"
            "<form method='post' action='/sshkeys'>"
            f"<textarea name='authorized_keys'>{html.escape(text)}</textarea>"
            "<button type='submit'>Replace keys</button></form>"
        )
        return Response.html(_page("SSH keys", body))

    def _sshkeys_update(self, user, request: Request) -> Response:
        now = self.clock()
        text = request.form.get("authorized_keys", "")
        keys, errors = parse_authorized_keys(text)
        if errors:
            return Response.json(
                {
                    "error": "malformed entries",
                    "lines": [{"line": e.line_number, "detail": e.detail} for e in errors],
                },
                422,
            )
        try:
            verdicts = write_authorized_keys(
                self.authority, user.username, keys, self.config.ssh.policy,
                self.debian_blacklist,
            )
        except VetoedKey as exc:
            self.audit.record(user.username, "sshkeys-vetoed", user.username, str(exc), now)
            return Response.json(
                {"error": "vetoed keys", "verdicts": self._verdict_summary(exc.verdicts)},
                422,
            )
        self.audit.record(user.username, "sshkeys-update", user.username, f"{len(keys)} keys", now)
        return Response.json({"written": len(keys), "verdicts": self._verdict_summary(verdicts)})

    # -- static assets (admin console build output) ---------------------------------

    def load_static_assets(self, directory, prefix: str = "/admin/") -> int:
        """Register every file under ``directory`` for serving at ``prefix``."""
        import mimetypes
        from pathlib import Path

        directory = Path(directory)
        count = 0
        for path in sorted(directory.rglob("*")):
            if not path.is_file():
                continue
            content_type = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
            if content_type.startswith("text/"):
                content_type += "; charset=utf-8"
            relative = path.relative_to(directory).as_posix()
            self.static_assets[prefix + relative] = (content_type, path.read_bytes())
            count += 1
        return count

    def _static(self, request: Request) -> Response:
        asset = self.static_assets.get(request.path)
        if asset is None and request.path.rstrip("/") == "/admin":
            asset = self.static_assets.get("/admin/index.html")
        if asset is None:
            return Response.text("not found", 404)
        content_type, body = asset
        return Response(status=200, headers=[("Content-Type", content_type)], body=body)

    # -- admin API --------------------------------------------------------------------

    def _admin_api(self, user, request: Request) -> Response:
        if user.user_id not in self.config.admin_user_ids:
            return Response.json({"error": "admin role required"}, 403)
        if request.header("X-Admin-Api-Version") != ADMIN_API_VERSION:
            return Response.json(
                {"error": f"X-Admin-Api-Version: {ADMIN_API_VERSION} header required"}, 400
            )
        now = self.clock()
        path = request.path.removeprefix("/api/admin")
        segments = [s for s in path.split("/") if s]
        try:
            return self._admin_route(user, request, segments, now)
        except (UnknownUser, StoreError) as exc:
            if isinstance(exc, ConflictingMapping):
                return Response.json({"error": str(exc)}, 409)
            return Response.json({"error": str(exc)}, 404)
        except (KeyError, ValueError) as exc:
            return Response.json({"error": f"bad request: {exc}"}, 400)

    def _user_payload(self, user) -> dict:
        return {
            "user_id": user.user_id,
            "username": user.username,
            "email": user.email,
            "active": user.active,
            "ts_principal": user.ts_principal,
            "mappings": [
                {
                    "cert_id": m.cert_id,
                    "subject_dn": m.subject_dn,
                    "not_after": m.not_after.isoformat() if m.not_after else None,
                }
                for m in self.store.list_mappings(user.user_id)
            ],
        }

    def _admin_route(self, actor, request: Request, segments: list[str], now) -> Response:
        method = request.method

        if segments == ["users"] and method == "GET":
            return Response.json(
                {"users": [self._user_payload(u) for u in self.store.list_users()]}
            )
        if segments == ["users"] and method == "POST":
            body = request.json()
            created = self.store.create_user(body["username"], body["email"])
            self.audit.record(actor.username, "create-user", created.username, "", now)
            return Response.json(self._user_payload(created), 201)
        if len(segments) == 2 and segments[0] == "users":
            user_id = int(segments[1])
            if method == "GET":
                return Response.json(self._user_payload(self.store.get_user(user_id)))
            if method == "PATCH":
                body = request.json()
                if "email" in body:
                    self.store.update_user(user_id, email=body["email"])
                if "ts_principal" in body:
                    self.store.set_principal(user_id, body["ts_principal"] or None)
                if "active" in body:
                    if body["active"]:
                        self.store.reactivate_user(user_id)
                    else:
                        self.store.deactivate_user(user_id)
                self.audit.record(
                    actor.username, "edit-user", str(user_id), ",".join(sorted(body)), now
                )
                return Response.json(self._user_payload(self.store.get_user(user_id)))
        if len(segments) == 3 and segments[0] == "users" and segments[2] == "certs" and method == "POST":
            user_id = int(segments[1])
            body = request.json()
            not_after = (
                datetime.fromisoformat(body["not_after"]) if body.get("not_after") else None
            )
            mapping = self.store.map_certificate(user_id, body["subject_dn"], not_after)
            self.audit.record(
                actor.username, "map-certificate", body["subject_dn"], f"user={user_id}", now
            )
            return Response.json({"cert_id": mapping.cert_id}, 201)
        if len(segments) == 2 and segments[0] == "certs" and method == "DELETE":
            cert_id = int(segments[1])
            self.store.remove_certificate(cert_id)
            self.audit.record(actor.username, "remove-certificate", str(cert_id), "", now)
            return Response(status=204)
        if segments == ["pending"] and method == "GET":
            return Response.json(
                {
                    "pending": [
                        {
                            "pending_id": p.pending_id,
                            "kind": p.kind,
                            "identifier": p.identifier,
                            "context": p.context,
                            "first_seen": p.first_seen.isoformat(),
                            "last_seen": p.last_seen.isoformat(),
                            "attempt_count": p.attempt_count,
                        }
                        for p in self.store.list_pending()
                    ]
                }
            )
        if len(segments) == 3 and segments[0] == "pending" and method == "POST":
            pending_id = int(segments[1])
            if segments[2] == "approve":
                body = request.json()
                self.store.approve_pending(pending_id, int(body["user_id"]), now)
                self.audit.record(
                    actor.username, "approve-pending", str(pending_id),
                    f"user={body['user_id']}", now,
                )
                return Response.json({"approved": pending_id})
            if segments[2] == "reject":
                self.store.reject_pending(pending_id)
                self.audit.record(actor.username, "reject-pending", str(pending_id), "", now)
                return Response.json({"rejected": pending_id})
        return Response.json({"error": "no such endpoint"}, 404)
