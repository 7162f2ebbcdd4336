"""
Shared parameter sets.

quick:     gamma = 16, v0 = 1 (R0 = 7), L = 2, small 2D grids.
barrier:   gamma = 32, v0 = 1 (R0 = 15), for the long radial runs marked slow.
reference: gamma = 32, v0 = 0.5 (R0 = 31), L = 12; only cheap checks use it.
"""
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.model import build_params  # noqa: E402


@pytest.fixture
def quick_params():
    return build_params(chi=1.0, v0=1.0, eps=0.05, theta=0.25, sigma=0.25 / 16.0, M0=40.0, L=2.0)


@pytest.fixture
def barrier_params():
    return build_params(chi=1.0, v0=1.0, eps=0.05, theta=0.25, sigma=0.25 / 32.0, M0=40.0, L=10.0)


@pytest.fixture
def reference_params():
    return build_params(chi=1.0, v0=0.5, eps=0.05, theta=0.25, sigma=0.25 / 32.0, M0=200.0, L=12.0)
