from .fixture import FixtureManifest, generate_fixture, load_manifest
from .mock_idp import MockIdp
from .scenarios import SCENARIOS, run_all, run_scenario

__all__ = [
    "FixtureManifest",
    "MockIdp",
    "SCENARIOS",
    "generate_fixture",
    "load_manifest",
    "run_all",
    "run_scenario",
]
