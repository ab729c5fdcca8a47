"""Shared fixtures: small discretizations and cached solves."""

from __future__ import annotations

import functools

import numpy as np
import pytest

from rarefied_pgd.discretization import build_discretization, preset
from rarefied_pgd.fullrank import solve_full_rank
from rarefied_pgd.grids import build_delta_grid
from rarefied_pgd.mesh import generate_square_mesh
from rarefied_pgd.pgd import pgd_enrich_parametric

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def tiny_disc():
    """8 elements, p=2, 8x8 velocities, 8 directions: fast enough for property tests."""
    return build_discretization(generate_square_mesh(2), 2, 8, 8, 4.0, 2.0, 8)


@functools.lru_cache(maxsize=None)
def small_disc():
    """32 elements, p=2, 8x8 velocities, 16 directions."""
    return build_discretization(generate_square_mesh(4), 2, 8, 8, 4.0, 2.0, 16)


@functools.lru_cache(maxsize=None)
def coarse_disc(domain: str = "square"):
    return preset(domain, coarse=True)


@functools.lru_cache(maxsize=None)
def cached_full_rank(which: str, case: str, delta: float):
    disc = {"tiny": tiny_disc, "small": small_disc, "coarse": coarse_disc}[which]()
    return solve_full_rank(disc, case, delta)


@functools.lru_cache(maxsize=None)
def coarse_vademecum(domain: str = "square"):
    """Case P vademecum on 33 log-spaced nodes in [0.01, 100], 15 modes."""
    grid = build_delta_grid(33, 0.01, 100.0)
    return pgd_enrich_parametric(coarse_disc(domain), "P", grid, M_md=15)


@pytest.fixture
def tiny():
    return tiny_disc()


@pytest.fixture
def small():
    return small_disc()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
