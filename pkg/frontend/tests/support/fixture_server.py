"""Starts a disposable gateway over plain HTTP for the console tests.

Generates a fresh fixture into a temporary directory, mints an admin
session, seeds one pending federated credential, and prints a single
JSON line describing how to reach the server.  Runs until stdin
closes (the test harness holds the pipe open for the suite's
lifetime).
"""

from __future__ import annotations

import json
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

from fedgate.gateway.app import Gateway
from fedgate.gateway.config import load_config
from fedgate.gateway.server import GatewayServer
from fedgate.testbed import generate_fixture, load_manifest

PENDING_EPPN = "newcomer@partner.edu"


def main() -> None:
    workdir = Path(tempfile.mkdtemp(prefix="fedgate-console-"))
    fixture = workdir / "fixture"
    generate_fixture(1, fixture)
    manifest = load_manifest(fixture)

    config = load_config(fixture / "gateway.yaml")
    config.main_listener.host = "127.0.0.1"
    config.main_listener.port = 0
    config.pki_listener.host = "127.0.0.1"
    config.pki_listener.port = 0

    gateway = Gateway(config)
    now = datetime.now(timezone.utc)
    admin_id = manifest["users"]["admin"]["user_id"]
    session, _ = gateway.sessions.create(admin_id, "saml", now)
    gateway.store.record_failed_credential(
        "saml", PENDING_EPPN, "idp=https://idp2.test.example/idp", now
    )

    server = GatewayServer(gateway, use_tls=False)
    server.start()
    print(
        json.dumps(
            {
                "base_url": f"http://127.0.0.1:{server.main_port}",
                "cookie": f"fedgate_session={session.token}",
                "admin_user_id": admin_id,
                "admin_eppn": manifest["users"]["admin"]["eppn"],
                "jdoe_user_id": manifest["users"]["jdoe"]["user_id"],
                "jdoe_eppn": manifest["users"]["jdoe"]["eppn"],
                "jdoe_sdn": manifest["users"]["jdoe"]["sdn"],
                "pending_eppn": PENDING_EPPN,
            }
        ),
        flush=True,
    )

    sys.stdin.read()  # block until the harness closes the pipe
    server.stop()


if __name__ == "__main__":
    main()
