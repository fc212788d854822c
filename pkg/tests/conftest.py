from functools import lru_cache
from pathlib import Path

import pytest

from asmrpc.components import build_scenario, load_scenario, reseed

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@lru_cache(maxsize=None)
def scenario(name: str):
    spec = load_scenario(SCENARIOS / f"{name}.scn")
    return spec, build_scenario(spec)


def config_for(name: str, seed: int = 0):
    spec, config = scenario(name)
    return config if seed == spec.seed else reseed(spec, config, seed)


@pytest.fixture
def scenarios_dir() -> Path:
    return SCENARIOS


# criterion number -> (passed, detail), filled in by test_acceptance
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
