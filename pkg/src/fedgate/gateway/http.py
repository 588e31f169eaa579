"""Minimal request/response model shared by the handler layer and servers.

Handlers are pure functions of a Request; the stdlib server adapter and
the testbed's browser-equivalent driver both speak this model, so every
scenario can run in-process or over a real TLS socket.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from http.cookies import SimpleCookie
from urllib.parse import parse_qs, urlparse

MAIN_LISTENER = "main"
PKI_LISTENER = "pki"


@dataclass
class Request:
    method: str
    path: str
    listener: str = MAIN_LISTENER
    query: dict[str, str] = field(default_factory=dict)
    form: dict[str, str] = field(default_factory=dict)
    headers: dict[str, str] = field(default_factory=dict)
    cookies: dict[str, str] = field(default_factory=dict)
    body: bytes = b""
    client_cert_der: bytes | None = None
    remote_addr: str = "127.0.0.1"

    def header(self, name: str) -> str | None:
        return self.headers.get(name.lower())

    def json(self) -> dict:
        return json.loads(self.body.decode("utf-8")) if self.body else {}

    @staticmethod
    def parse_target(target: str) -> tuple[str, dict[str, str]]:
        parsed = urlparse(target)
        query = {k: v[0] for k, v in parse_qs(parsed.query).items()}
        return parsed.path, query

    @staticmethod
    def parse_cookies(header: str | None) -> dict[str, str]:
        if not header:
            return {}
        jar = SimpleCookie()
        jar.load(header)
        return {name: morsel.value for name, morsel in jar.items()}


@dataclass
class Response:
    status: int = 200
    headers: list[tuple[str, str]] = field(default_factory=list)
    body: bytes = b""

    @classmethod
    def html(cls, content: str, status: int = 200) -> "Response":
        return cls(
            status=status,
            headers=[("Content-Type", "text/html; charset=utf-8")],
            body=content.encode("utf-8"),
        )

    @classmethod
    def json(cls, payload, status: int = 200) -> "Response":
        return cls(
            status=status,
            headers=[("Content-Type", "application/json")],
            body=json.dumps(payload, indent=1).encode("utf-8"),
        )

    @classmethod
    def redirect(cls, location: str, status: int = 302) -> "Response":
        return cls(status=status, headers=[("Location", location)])

    @classmethod
    def text(cls, content: str, status: int = 200) -> "Response":
        return cls(
            status=status,
            headers=[("Content-Type", "text/plain; charset=utf-8")],
            body=content.encode("utf-8"),
        )

    def with_cookie(self, cookie_value: str) -> "Response":
        self.headers.append(("Set-Cookie", cookie_value))
        return self

    def header(self, name: str) -> str | None:
        for key, value in self.headers:
            if key.lower() == name.lower():
                return value
        return None

    def json_body(self) -> dict:
        return json.loads(self.body.decode("utf-8"))
