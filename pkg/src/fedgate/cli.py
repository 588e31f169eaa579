"""Command-line entry points: fixture tooling and the gateway server."""

from __future__ import annotations

import logging
import signal
import sys
from pathlib import Path

import click


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Federated authentication gateway."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


@main.group()
def fixture() -> None:
    """Generate and exercise the deterministic testbed fixture."""


@fixture.command("generate")
@click.option("--seed", type=int, default=1, show_default=True)
@click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Directory to populate.",
)
def fixture_generate(seed: int, out: Path) -> None:
    """Write a complete fixture (PKI, CRLs, metadata, store, config)."""
    from .testbed import generate_fixture

    manifest = generate_fixture(seed, out)
    click.echo(f"fixture written to {out} ({len(manifest['certificates'])} certificates)")


@fixture.command("run")
@click.option(
    "--fixture-dir",
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    required=True,
)
@click.option(
    "--scenario",
    default="all",
    show_default=True,
    help="Scenario name, or 'all'.",
)
def fixture_run(fixture_dir: Path, scenario: str) -> None:
    """Run named scenarios against a pristine gateway; non-zero exit on failure."""
    from .testbed import SCENARIOS, run_scenario

    names = list(SCENARIOS) if scenario == "all" else [scenario]
    failures = 0
    for name in names:
        result = run_scenario(name, fixture_dir)
        marker = "PASS" if result.passed else "FAIL"
        click.echo(f"{marker} {name}: {result.detail}")
        if not result.passed:
            failures += 1
    if failures:
        raise SystemExit(1)


@main.command("serve")
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
)
@click.option(
    "--insecure-http",
    is_flag=True,
    help="Serve plain HTTP (development only; disables the client-cert listener handshake).",
)
@click.option(
    "--admin-assets",
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    default=None,
    help="Directory of built admin-console assets to serve under /admin/.",
)
def serve(config_path: Path, insecure_http: bool, admin_assets: Path | None) -> None:
    """Run both gateway listeners until interrupted."""
    from .gateway.app import Gateway
    from .gateway.config import load_config
    from .gateway.server import GatewayServer

    gateway = Gateway(load_config(config_path))
    if admin_assets is not None:
        count = gateway.load_static_assets(admin_assets)
        click.echo(f"serving {count} admin console assets under /admin/")
    gateway.refresh_metadata_now()
    gateway.refresh_crls_now()
    server = GatewayServer(gateway, use_tls=not insecure_http)
    server.start()
    click.echo(
        f"listening: main={gateway.config.main_listener.authority} "
        f"pki={gateway.config.pki_listener.authority}"
    )

    def shutdown(signum, frame):
        click.echo("shutting down")
        server.stop()
        sys.exit(0)

    signal.signal(signal.SIGINT, shutdown)
    signal.signal(signal.SIGTERM, shutdown)
    signal.pause()


@main.command("sp-metadata")
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
)
def sp_metadata(config_path: Path) -> None:
    """Print our SP entity descriptor for submission to the federation."""
    from .gateway.config import load_config
    from .saml.metadata import generate_sp_metadata

    config = load_config(config_path)
    sys.stdout.buffer.write(generate_sp_metadata(config.saml))


if __name__ == "__main__":
    main()
