"""Shared fixtures and helpers for the test suite."""

import math

import numpy as np
import pytest

from asyncmotion import CameraIntrinsics, angle_between
from asyncmotion.sim import SimConfig, generate_scene, preset_config


@pytest.fixture
def intr():
    return CameraIntrinsics(fx=320.0, fy=320.0, cx=320.0, cy=240.0, width=640, height=480)


@pytest.fixture
def moderate_scene():
    config = preset_config("moderate", seed=3)
    return config, generate_scene(config, np.random.default_rng(3))


def aligned_angle_deg(u, v):
    """Unsigned angle between lines (sign-invariant), in degrees."""
    a = angle_between(u, v)
    return math.degrees(min(a, math.pi - a))


def random_scene(seed, **overrides):
    config = SimConfig(seed=seed, **overrides)
    return config, generate_scene(config, np.random.default_rng(seed))
