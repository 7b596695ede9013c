"""
Shared fixtures for the CLAST test suite.

Everything written to disk goes under pytest's tmp_path; the tiny dataset is
built once per session because rendering and calibration dominate test time.
"""

import os
import sys

import numpy as np
import pytest

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, PROJECT_ROOT)

from model import NetworkConfig, StyleNet
from styleset import build_dataset, load_dataset
from tensor import RngStream


TINY_EMBED_DIM = 16


# =============================================================================
# Random streams
# =============================================================================

@pytest.fixture
def rng():
    """Fresh seeded stream per test."""
    return RngStream(42)


# =============================================================================
# Dataset and network
# =============================================================================

@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """2 classes, 3 paintings each, 4 contents of 16 px."""
    root = tmp_path_factory.mktemp("tiny_dataset")
    manifest = build_dataset(C=2, K=3, M=4, size=16, seed=0, root=root, embed_dim=TINY_EMBED_DIM)
    return load_dataset(manifest.root)


@pytest.fixture
def tiny_net_config():
    return NetworkConfig(channels=8, state_size=2, embed_dim=TINY_EMBED_DIM, fusion_depth=1)


@pytest.fixture
def tiny_net(tiny_net_config):
    return StyleNet(tiny_net_config)


@pytest.fixture
def unit_rows(rng):
    """Six unit-norm rows of width 5."""
    rows = rng.normal((6, 5))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)
