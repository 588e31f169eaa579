"""Shared fixtures: one seed-1 fixture per session, fresh gateways per test."""

from __future__ import annotations

import pytest

from fedgate.testbed import generate_fixture, load_manifest
from fedgate.testbed.scenarios import ScenarioContext


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixture-seed1")
    generate_fixture(1, out)
    return out


@pytest.fixture(scope="session")
def manifest(fixture_dir):
    return load_manifest(fixture_dir)


@pytest.fixture()
def ctx(manifest, tmp_path):
    """A pristine gateway context (fresh store copy, pinned clock)."""
    return ScenarioContext(manifest, tmp_path)
