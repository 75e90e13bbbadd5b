"""Shared fixtures and small-state builders for the test suite."""

import numpy as np
import pytest

from pttflow.model import FlowState, random_solenoidal_field
from pttflow.spectral import Grid, dealias, transform_forward


@pytest.fixture(scope="session")
def grid8():
    return Grid(8)


@pytest.fixture(scope="session")
def grid16():
    return Grid(16)


def smooth_symmetric_stress(grid, rng, amp=0.1):
    """Six smooth low-mode components with seeded amplitude jitter."""
    x, y, z = grid.mesh()
    patterns = np.stack(
        [
            np.cos(x) * np.sin(y),
            np.sin(x + z),
            np.cos(y - z),
            np.sin(x) * np.cos(z),
            np.cos(x + y),
            np.sin(y) * np.sin(z),
        ]
    )
    weights = 1.0 + 0.3 * rng.standard_normal((6, 1, 1, 1))
    return dealias(grid, transform_forward(grid, amp * patterns * weights))


def random_state(grid, seed=0, amp=0.1):
    """Small random state: solenoidal velocity plus smooth symmetric stress."""
    rng = np.random.default_rng(seed)
    uhat = amp * random_solenoidal_field(grid, rng)
    tauhat = smooth_symmetric_stress(grid, rng, amp)
    return FlowState(0.0, grid, uhat, tauhat)
