"""Stdlib HTTP server adapter for the gateway handler layer.

Two listeners: the main HTTPS listener and a separate PKI listener that
requests a client certificate during the TLS handshake.  The TLS layer
accepts any pooled certificate; real path validation (cross-certs,
policy mapping, CRLs) happens in the application, because stock TLS
stacks cannot process the bridge topology correctly.
"""

from __future__ import annotations

import ssl
import tempfile
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs

from cryptography.hazmat.primitives.serialization import Encoding

from .app import Gateway
from .http import MAIN_LISTENER, PKI_LISTENER, Request, Response


def _make_handler(gateway: Gateway, listener: str):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, format, *args):  # quiet
            pass

        def _request(self) -> Request:
            path, query = Request.parse_target(self.path)
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length) if length else b""
            form = {}
            content_type = self.headers.get("Content-Type", "")
            if content_type.startswith("application/x-www-form-urlencoded"):
                form = {k: v[0] for k, v in parse_qs(body.decode("utf-8")).items()}
            client_cert = None
            if listener == PKI_LISTENER and isinstance(self.connection, ssl.SSLSocket):
                client_cert = self.connection.getpeercert(binary_form=True)
            return Request(
                method=self.command,
                path=path,
                listener=listener,
                query=query,
                form=form,
                headers={k.lower(): v for k, v in self.headers.items()},
                cookies=Request.parse_cookies(self.headers.get("Cookie")),
                body=body,
                client_cert_der=client_cert,
                remote_addr=self.client_address[0],
            )

        def _respond(self, response: Response) -> None:
            self.send_response(response.status)
            for name, value in response.headers:
                self.send_header(name, value)
            self.send_header("Content-Length", str(len(response.body)))
            self.end_headers()
            self.wfile.write(response.body)

        def _dispatch(self):
            self._respond(gateway.handle(self._request()))

        do_GET = do_POST = do_PATCH = do_DELETE = _dispatch

    return Handler


class GatewayServer:
    """Runs both listeners on background threads."""

    def __init__(self, gateway: Gateway, use_tls: bool = True):
        self.gateway = gateway
        config = gateway.config
        self.main_server = ThreadingHTTPServer(
            (config.main_listener.host, config.main_listener.port),
            _make_handler(gateway, MAIN_LISTENER),
        )
        self.pki_server = ThreadingHTTPServer(
            (config.pki_listener.host, config.pki_listener.port),
            _make_handler(gateway, PKI_LISTENER),
        )
        if use_tls:
            self.main_server.socket = self._main_context().wrap_socket(
                self.main_server.socket, server_side=True
            )
            self.pki_server.socket = self._pki_context().wrap_socket(
                self.pki_server.socket, server_side=True
            )
        self._threads: list[threading.Thread] = []

    def _main_context(self) -> ssl.SSLContext:
        config = self.gateway.config
        context = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
        context.load_cert_chain(config.main_listener.tls_cert, config.main_listener.tls_key)
        return context

    def _pki_context(self) -> ssl.SSLContext:
        config = self.gateway.config
        context = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
        context.load_cert_chain(config.pki_listener.tls_cert, config.pki_listener.tls_key)
        # Request (not require) a client certificate.  Chain building at
        # the TLS layer is disabled in favor of application-level path
        # validation: every pooled certificate is loaded as acceptable.
        context.verify_mode = ssl.CERT_OPTIONAL
        pem = "".join(
            cert.x509().public_bytes(Encoding.PEM).decode()
            for cert in config.pki.pool.values()
        )
        with tempfile.NamedTemporaryFile("w", suffix=".pem", delete=False) as fh:
            fh.write(pem)
            bundle = fh.name
        context.load_verify_locations(cafile=bundle)
        Path(bundle).unlink(missing_ok=True)
        return context

    @property
    def main_port(self) -> int:
        return self.main_server.server_address[1]

    @property
    def pki_port(self) -> int:
        return self.pki_server.server_address[1]

    def start(self) -> None:
        for server in (self.main_server, self.pki_server):
            thread = threading.Thread(target=server.serve_forever, daemon=True)
            thread.start()
            self._threads.append(thread)

    def stop(self) -> None:
        for server in (self.main_server, self.pki_server):
            server.shutdown()
            server.server_close()
