"""Shared fixtures: benchmark states, small meshes and the desk-scale spectrum."""

from __future__ import annotations

import numpy as np
import pytest

from statemodal.core import load_state
from statemodal.eigensolver import SpectrumRequest, solve_alpha
from statemodal.fem import FeSpace, assemble_block_system
from statemodal.hexmesh import CoreLayout, build_mesh, load_layout
from statemodal.scm import data_path

WRENCH = 23.6


@pytest.fixture(scope="session")
def state():
    """Reference (supercritical) state with the consistent material-3 constants."""
    return load_state(data_path("vver1000_state_variant.toml"))


@pytest.fixture(scope="session")
def printed_state():
    return load_state(data_path("vver1000_state.toml"))


@pytest.fixture(scope="session")
def single_hex():
    return CoreLayout(WRENCH, ((1,),))


@pytest.fixture(scope="session")
def vver_layout():
    return load_layout(data_path("vver1000_layout.txt"))


@pytest.fixture(scope="session")
def hex_op(state, single_hex):
    """Single material-1 assembly, kappa=6, p=1: 21 unknowns."""
    return assemble_block_system(state, FeSpace(build_mesh(single_hex, 6), 1))


@pytest.fixture(scope="session")
def vver_op(state, vver_layout):
    return assemble_block_system(state, FeSpace(build_mesh(vver_layout, 24), 2))


@pytest.fixture(scope="session")
def vver_modes(vver_op):
    """First 10 direct and adjoint modes at kappa=24, p=2."""
    direct = solve_alpha(vver_op, SpectrumRequest(n_modes=10))
    adjoint = solve_alpha(vver_op, SpectrumRequest(n_modes=10, which="adjoint"))
    return direct, adjoint


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
