"""Opt-in runs at paper scale: `pytest -m slow` (several minutes each)."""

import math

import numpy as np
import pytest

import surfremap as sr
from surfremap.fields import f4_breakpoints
from surfremap.mesh import global_edge_length

pytestmark = pytest.mark.slow


def test_f4_detection_level4():
    mesh = sr.icosphere_for_level(4)
    f = sr.F4(mesh.nodes)
    ind = sr.compute_indicators(mesh, f)
    markers, _ = sr.dual_threshold(mesh, ind.alpha, ind.beta, f)
    theta = np.arccos(np.clip(mesh.nodes[:, 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(mesh.nodes[:, 1], mesh.nodes[:, 0]), 2 * math.pi)
    h = global_edge_length(mesh)
    c0s, c1s, c2s = f4_breakpoints()
    for bp in c0s + c1s:
        assert (markers & (np.abs(theta - bp) <= h)).any(), f"break {bp} unmarked"
    # curvature-only band clean away from the crossing longitudinal jump
    dmer = np.minimum(np.abs(phi), np.minimum(np.abs(phi - math.pi), np.abs(phi - 2 * math.pi)))
    band = (np.abs(theta - c2s[0]) <= 1.5 * h) & (dmer * np.sin(theta) > 3 * h)
    assert not (markers & band).any()
    # markers stay near genuine discontinuities: latitude bands or the
    # longitudinal jump meridians (with a stencil-width skirt)
    near_any = np.zeros(mesh.n_nodes, dtype=bool)
    for bp in c0s + c1s + c2s:
        near_any |= np.abs(theta - bp) <= 5 * h
    near_any |= dmer * np.sin(theta) <= 5 * h
    assert not (markers & ~near_any).any()


def test_smooth_fields_clean_level4():
    mesh = sr.icosphere_for_level(4)
    for field in (sr.F1, sr.F2):
        f = field(mesh.nodes)
        ind = sr.compute_indicators(mesh, f)
        markers, _ = sr.dual_threshold(mesh, ind.alpha, ind.beta, f)
        assert markers.sum() == 0
