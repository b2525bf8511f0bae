"""Shared fixtures: noiseless oracle scenes and small geometry helpers."""

from __future__ import annotations

import numpy as np
import pytest

from artigen.models import JointKind, ReplacementParams, SceneConfig
from artigen.oracle import SceneBundle, build_replacement_asset, gen_scene, sample_box_surface, scene_rng
from artigen.replacement import ReplacementAsset

PRISMATIC_BASE = (0.3, 0.4, 0.3)
PRISMATIC_DRAWER = (0.2, 0.3, 0.12)


def box_surface(lo, hi, count: int = 2000, seed: int = 7) -> np.ndarray:
    """Uniform samples over all six faces of an axis-aligned box."""
    return sample_box_surface(scene_rng(seed, 0), lo, hi, count)


def motion_total(bundle: SceneBundle) -> float:
    truth = bundle.truth
    return truth.theta_true[truth.end_true] - truth.theta_true[truth.start_true]


def known_asset(bundle: SceneBundle, s: float = 1.0, offset=(0.0, 0.0)) -> tuple[ReplacementAsset, ReplacementParams]:
    g_true = ReplacementParams(s=s, r_init=motion_total(bundle), offset=offset)
    return build_replacement_asset(bundle, g_true), g_true


@pytest.fixture(scope="session")
def revolute_bundle() -> SceneBundle:
    return gen_scene(SceneConfig(kind=JointKind.REVOLUTE))


@pytest.fixture(scope="session")
def prismatic_bundle() -> SceneBundle:
    return gen_scene(SceneConfig(kind=JointKind.PRISMATIC, base_size=PRISMATIC_BASE, lid_size=PRISMATIC_DRAWER))
