import math

import numpy as np
import pytest

from surfremap.detector import (
    EPS_BETA,
    FieldStats,
    IndicatorField,
    MarkerSet,
    build_alpha_operator,
    compute_beta,
    compute_field_stats,
    compute_indicators,
    dual_threshold,
    transfer_markers,
    write_indicator_csv,
)
from surfremap.fields import F1, F2, F3, F4, f3_breakpoints, f4_breakpoints
from surfremap.mesh import gen_icosphere, gen_planar_grid, global_edge_length, mesh_metrics
from surfremap.wls import build_stencil


@pytest.fixture(scope="module")
def ico_l1():
    return gen_icosphere(4)


@pytest.fixture(scope="module")
def ico_l2():
    return gen_icosphere(5)


def node_thetas(mesh):
    return np.arccos(np.clip(mesh.nodes[:, 2], -1.0, 1.0))


class TestAlphaOperator:
    def test_linear_field_planar(self):
        mesh = gen_planar_grid(7, 7, "tri")
        op = build_alpha_operator(mesh)
        f = 2.0 * mesh.nodes[:, 0] - 0.75 * mesh.nodes[:, 1] + 0.3
        alpha = op.matvec(f)
        assert np.abs(alpha).max() < 1e-12

    def test_constant_field_sphere(self, ico_l1):
        alpha = build_alpha_operator(ico_l1).matvec(np.full(ico_l1.n_nodes, 4.2))
        assert np.abs(alpha).max() < 1e-12

    def test_jump_band_exceeds_threshold(self, ico_l2):
        # the value jumps dominate every smooth-region indicator by orders
        f = F3(ico_l2.nodes)
        ind = compute_indicators(ico_l2, f)
        markers, tau = dual_threshold(ico_l2, ind.alpha, ind.beta, f)
        centers = np.array(
            [ico_l2.element_center(e) for e in range(ico_l2.n_elements)]
        )
        theta_c = np.arccos(np.clip(centers[:, 2], -1.0, 1.0))
        h = global_edge_length(ico_l2)
        jump_band = np.abs(theta_c - 2.27) < h
        smooth = (theta_c > 1.8) & (theta_c < 2.27 - 4 * h)
        assert np.abs(ind.alpha[jump_band]).max() > 50 * np.abs(ind.alpha[smooth]).max()

    def test_alpha_linearity(self, ico_l1):
        op = build_alpha_operator(ico_l1)
        rng = np.random.default_rng(50)
        f = rng.standard_normal(ico_l1.n_nodes)
        a1 = op.matvec(f)
        a2 = op.matvec(2.5 * f + 7.0)
        scale = np.abs(a1).max()
        assert np.abs(a2 - 2.5 * a1).max() < 1e-12 * max(scale, 1.0)


class TestBeta:
    def test_constant_alpha_zero_numerator(self, ico_l1):
        stats = FieldStats(delta_f_global=1.0, h_g=global_edge_length(ico_l1))
        beta = compute_beta(ico_l1, np.zeros(ico_l1.n_elements), stats)
        assert np.all(beta == 0.0)

    def test_equal_incident_alpha(self, ico_l1):
        stats = FieldStats(delta_f_global=1.0, h_g=global_edge_length(ico_l1))
        beta = compute_beta(ico_l1, np.full(ico_l1.n_elements, 0.37), stats)
        assert np.abs(beta).max() < 1e-10

    def test_alternating_pattern_hand_formula(self, ico_l2):
        # valence-6 node with incident alpha = (+a, -a, +a, -a, +a, -a):
        # numerator 6a, signed sum 0, so beta = 6a / safeguard
        v = next(
            v
            for v in range(ico_l2.n_nodes)
            if ico_l2.incident_elements(v).size == 6
        )
        elems = ico_l2.incident_elements(v)
        a = 1e-3
        alpha = np.zeros(ico_l2.n_elements)
        alpha[elems] = a * np.array([1, -1, 1, -1, 1, -1])
        dfg, hg = 2.0, global_edge_length(ico_l2)
        beta = compute_beta(ico_l2, alpha, FieldStats(dfg, hg))
        guard = EPS_BETA * dfg * hg**2 + np.finfo(float).tiny
        assert beta[v] == pytest.approx(6 * a / guard, rel=1e-12)
        # beta grows without bound as the safeguard shrinks
        beta2 = compute_beta(ico_l2, alpha, FieldStats(dfg * 1e-6, hg))
        assert beta2[v] > 1e5 * beta[v]

    def test_beta_scale_invariance(self, ico_l2):
        f = F3(ico_l2.nodes)
        op = build_alpha_operator(ico_l2)
        betas = []
        for lam in (1e-3, 1.0, 1e3):
            g = lam * f
            betas.append(
                compute_beta(ico_l2, op.matvec(g), compute_field_stats(ico_l2, g))
            )
        active = betas[1] > 0.1
        for b in (betas[0], betas[2]):
            rel = np.abs(b[active] - betas[1][active]) / betas[1][active]
            assert rel.max() < 0.01


class TestDualThreshold:
    def test_kappa_gate(self, ico_l1):
        beta = np.full(ico_l1.n_nodes, 0.2)
        alpha = np.full(ico_l1.n_elements, 1e9)
        f = F3(ico_l1.nodes)
        markers, _ = dual_threshold(ico_l1, alpha, beta, f)
        assert not markers.any()

    @pytest.mark.parametrize("field", [F1, F2])
    def test_smooth_fields_unmarked(self, ico_l1, ico_l2, field):
        for mesh in (ico_l1, ico_l2):
            f = field(mesh.nodes)
            ind = compute_indicators(mesh, f)
            markers, _ = dual_threshold(mesh, ind.alpha, ind.beta, f)
            assert markers.sum() == 0

    def test_f3_breaks_marked_level2(self, ico_l2):
        f = F3(ico_l2.nodes)
        ind = compute_indicators(ico_l2, f)
        markers, _ = dual_threshold(ico_l2, ind.alpha, ind.beta, f)
        theta = node_thetas(ico_l2)
        h = global_edge_length(ico_l2)
        for bp in f3_breakpoints():
            assert (markers & (np.abs(theta - bp) <= h)).any()
        far = np.ones(ico_l2.n_nodes, dtype=bool)
        for bp in f3_breakpoints():
            far &= np.abs(theta - bp) > 3 * h
        assert not (markers & far).any()

    def test_f4_breaks_marked_level2(self, ico_l2):
        f = F4(ico_l2.nodes)
        ind = compute_indicators(ico_l2, f)
        markers, _ = dual_threshold(ico_l2, ind.alpha, ind.beta, f)
        theta = node_thetas(ico_l2)
        h = global_edge_length(ico_l2)
        c0s, c1s, _ = f4_breakpoints()
        for bp in c0s + c1s:
            assert (markers & (np.abs(theta - bp) <= h)).any()

    def test_marker_invariance_scale_shift(self, ico_l1):
        for field in (F3, F4):
            f = field(ico_l1.nodes)
            ind = compute_indicators(ico_l1, f)
            base, _ = dual_threshold(ico_l1, ind.alpha, ind.beta, f)
            op = build_alpha_operator(ico_l1)
            for lam in (0.1, 10.0):
                for c in (-3.0, 5.0):
                    g = lam * f + c
                    a = op.matvec(g)
                    b = compute_beta(ico_l1, a, compute_field_stats(ico_l1, g))
                    mk, _ = dual_threshold(ico_l1, a, b, g)
                    assert np.array_equal(mk, base)

    def test_asymptotic_separation(self, ico_l1, ico_l2):
        # refinement halves h: smooth-region alpha drops ~4x (second order),
        # slope-break alpha ~2x (first order), jump alpha stays O(1)
        def band_max(mesh, lo, hi):
            f = F3(mesh.nodes)
            alpha = build_alpha_operator(mesh).matvec(f)
            centers = np.array([mesh.element_center(e) for e in range(mesh.n_elements)])
            theta_c = np.arccos(np.clip(centers[:, 2], -1.0, 1.0))
            band = (theta_c >= lo) & (theta_c <= hi)
            return np.abs(alpha[band]).max()

        h1 = global_edge_length(ico_l1)
        h2 = global_edge_length(ico_l2)
        smooth = (1.1, math.pi / 2 - 6 * h1)  # inside the sloped branch
        c1_band = (0.87 - 2 * h2, 0.87 + 2 * h2)
        c0_band = (2.27 - 2 * h2, 2.27 + 2 * h2)
        r_smooth = band_max(ico_l1, *smooth) / band_max(ico_l2, *smooth)
        r_c1 = band_max(ico_l1, *c1_band) / band_max(ico_l2, *c1_band)
        r_c0 = band_max(ico_l1, *c0_band) / band_max(ico_l2, *c0_band)
        assert 3.0 <= r_smooth <= 6.0
        assert 1.5 <= r_c1 <= 3.0
        assert 0.7 <= r_c0 <= 1.5


class TestTransferMarkers:
    def test_none_and_all(self, ico_l1):
        tgt = gen_icosphere(3)
        stencils = []
        for t in range(0, 40):
            st, _ = build_stencil(ico_l1, tgt.nodes[t], 2)
            stencils.append(st)
        none = transfer_markers(np.zeros(ico_l1.n_nodes, dtype=bool), stencils)
        assert not none.any()
        allm = transfer_markers(np.ones(ico_l1.n_nodes, dtype=bool), stencils)
        assert allm.all()

    def test_single_marker_inverted_index(self, ico_l1):
        tgt = gen_icosphere(3)
        stencils = []
        for t in range(80):
            st, _ = build_stencil(ico_l1, tgt.nodes[t], 2)
            stencils.append(st)
        src = np.zeros(ico_l1.n_nodes, dtype=bool)
        marked_node = int(stencils[3].node_ids[0])
        src[marked_node] = True
        got = transfer_markers(src, stencils)
        expected = np.array([marked_node in s.node_ids for s in stencils])
        assert np.array_equal(got, expected)

    def test_csr_form_matches_list_form(self, ico_l1):
        tgt = gen_icosphere(3)
        stencils = []
        for t in range(60):
            st, _ = build_stencil(ico_l1, tgt.nodes[t], 2)
            stencils.append(st)
        ids = np.concatenate([s.node_ids for s in stencils])
        counts = np.array([s.node_ids.size for s in stencils])
        offsets = np.concatenate(([0], np.cumsum(counts)))
        rng = np.random.default_rng(51)
        src = rng.random(ico_l1.n_nodes) < 0.02
        assert np.array_equal(
            transfer_markers(src, stencils), transfer_markers(src, (offsets, ids))
        )


def test_indicator_csv_dump(tmp_path, ico_l1):
    f = F3(ico_l1.nodes)
    ind = compute_indicators(ico_l1, f)
    markers, tau = dual_threshold(ico_l1, ind.alpha, ind.beta, f)
    ms = MarkerSet(
        source_markers=markers,
        target_markers=None,
        kappa=0.3,
        tau=tau,
        c_local=0.1,
        c_global=0.05,
    )
    path = tmp_path / "indicators.csv"
    write_indicator_csv(path, ind, ms)
    lines = path.read_text().splitlines()
    assert lines[0] == "kind,index,alpha,beta,tau,marked"
    assert len(lines) == 1 + ico_l1.n_elements + ico_l1.n_nodes
