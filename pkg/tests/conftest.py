from __future__ import annotations

from functools import lru_cache
from pathlib import Path

import pytest

from btq.geometry import FourierSymbol
from btq.spectral import cluster_for

DATA = Path(__file__).parent / "data"

_CRITERIA: list[str] = []


@lru_cache(maxsize=None)
def cached_cluster(p: int, N: int, degree_E: int = 0, rank_E: int = 1, phi: str | None = None):
    Phi = None
    if phi == "half_cos_x":
        Phi = FourierSymbol.cos((1, 0), amplitude=0.5)
    return cluster_for(p, N=N, degree_E=degree_E, rank_E=rank_E, Phi=Phi, seed=0)


@pytest.fixture(scope="session")
def clusters():
    return cached_cluster


@pytest.fixture
def criterion():
    """Record one acceptance line; lines are echoed in the terminal summary."""

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2}: {detail}"
        _CRITERIA.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
