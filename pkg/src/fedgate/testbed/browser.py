"""Browser-equivalent driver for in-process gateway exchanges.

Simulates what a browser does during the login flows: follows
redirects between the two listeners, carries the cookie jar, presents
a client certificate on the PKI listener, and submits forms.
"""

from __future__ import annotations

from http.cookies import SimpleCookie
from urllib.parse import urlparse

from ..gateway.app import Gateway
from ..gateway.http import MAIN_LISTENER, PKI_LISTENER, Request, Response


class FakeBrowser:
    def __init__(self, gateway: Gateway, client_cert_der: bytes | None = None):
        self.gateway = gateway
        self.client_cert_der = client_cert_der
        self.cookies: dict[str, str] = {}
        self.transcript: list[str] = []

    def _absorb_cookies(self, response: Response) -> None:
        for name, value in response.headers:
            if name.lower() != "set-cookie":
                continue
            jar = SimpleCookie()
            jar.load(value)
            for cookie_name, morsel in jar.items():
                if morsel["max-age"] == "0":
                    self.cookies.pop(cookie_name, None)
                else:
                    self.cookies[cookie_name] = morsel.value

    def _listener_for(self, url: str) -> tuple[str, str, dict[str, str]]:
        """Map an absolute or relative URL onto (listener, path, query)."""
        parsed = urlparse(url)
        path, query = Request.parse_target(url)
        config = self.gateway.config
        if parsed.netloc:
            base = f"{parsed.scheme}://{parsed.netloc}"
            if base == config.pki_base_url:
                return PKI_LISTENER, path, query
            if base == config.main_base_url:
                return MAIN_LISTENER, path, query
            raise ValueError(f"URL {url} leaves the gateway (external redirect)")
        return MAIN_LISTENER, path, query

    def request(
        self,
        method: str,
        url: str,
        listener: str | None = None,
        form: dict[str, str] | None = None,
        body: bytes = b"",
        headers: dict[str, str] | None = None,
        follow_redirects: bool = True,
        max_redirects: int = 5,
    ) -> Response:
        inferred, path, query = self._listener_for(url)
        listener = listener or inferred
        request = Request(
            method=method,
            path=path,
            listener=listener,
            query=query,
            form=form or {},
            headers={k.lower(): v for k, v in (headers or {}).items()},
            cookies=dict(self.cookies),
            body=body,
            client_cert_der=self.client_cert_der if listener == PKI_LISTENER else None,
        )
        response = self.gateway.handle(request)
        self.transcript.append(
            f"{listener} {method} {path} -> {response.status} {response.header('Location') or ''}".rstrip()
        )
        self._absorb_cookies(response)
        redirects = 0
        while follow_redirects and response.status in (301, 302) and redirects < max_redirects:
            location = response.header("Location")
            try:
                listener, path, query = self._listener_for(location)
            except ValueError:
                # Redirect to an external party (the IdP): stop and hand
                # the URL back to the caller.
                return response
            request = Request(
                method="GET",
                path=path,
                listener=listener,
                query=query,
                cookies=dict(self.cookies),
                client_cert_der=self.client_cert_der if listener == PKI_LISTENER else None,
            )
            response = self.gateway.handle(request)
            self.transcript.append(
                f"{listener} GET {path} -> {response.status} {response.header('Location') or ''}".rstrip()
            )
            self._absorb_cookies(response)
            redirects += 1
        return response

    def get(self, url: str, **kwargs) -> Response:
        return self.request("GET", url, **kwargs)

    def post(self, url: str, form: dict[str, str] | None = None, **kwargs) -> Response:
        return self.request("POST", url, form=form, **kwargs)

    @property
    def has_session(self) -> bool:
        from ..sessions import COOKIE_NAME

        return COOKIE_NAME in self.cookies
