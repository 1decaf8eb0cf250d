from __future__ import annotations

import numpy as np
import pytest

from du_doa.array import ArrayGeometry, ArrayKind, builtin_geometry_path, load_geometry

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def random_psd(rng: np.random.Generator, m: int, rank: int | None = None) -> np.ndarray:
    rank = m if rank is None else rank
    x = rng.standard_normal((m, rank)) + 1j * rng.standard_normal((m, rank))
    return x @ x.conj().T / rank


def random_geometry(rng: np.random.Generator, m: int, kind=ArrayKind.FULL_SPHERE) -> ArrayGeometry:
    return ArrayGeometry(rng.uniform(-0.1, 0.1, (m, 3)), 343.0, kind)


@pytest.fixture(scope="session")
def linear7() -> ArrayGeometry:
    return load_geometry(builtin_geometry_path("linear7"))


@pytest.fixture(scope="session")
def robot12() -> ArrayGeometry:
    return load_geometry(builtin_geometry_path("robot_head12"))


@pytest.fixture(scope="session")
def sphere32() -> ArrayGeometry:
    return load_geometry(builtin_geometry_path("sphere32"))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
