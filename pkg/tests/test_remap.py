import math

import numpy as np
import pytest

from surfremap.errors import ConfigError, DimensionMismatchError, NonFiniteError, OpenMeshError
from surfremap.fields import F1, F2, F3, F4, Constant, PolynomialUV, error_norms
from surfremap.mesh import gen_cubed_sphere, gen_icosphere, gen_planar_grid
from surfremap.remap import (
    LinearPlan,
    RemapConfig,
    build_plan,
    conservation_error,
    integrate_sphere,
    linear_interp_remap,
    load_plan,
    repeated_transfer,
    save_plan,
)


@pytest.fixture(scope="module")
def sphere_pair():
    return gen_icosphere(3), gen_cubed_sphere(13)


@pytest.fixture(scope="module")
def small_plan(sphere_pair):
    src, tgt = sphere_pair
    return build_plan(src, tgt, RemapConfig(degree=4))


class TestConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            build_plan(gen_icosphere(2), gen_icosphere(1), RemapConfig(degree=5))
        with pytest.raises(ConfigError):
            RemapConfig(eno_degree=4).validate()
        with pytest.raises(ConfigError):
            RemapConfig(scheme="gaussian").validate()
        with pytest.raises(ConfigError):
            RemapConfig(sigma=0.5).validate()

    def test_json_round_trip(self):
        cfg = RemapConfig(degree=6, sigma=1.3, eno=False)
        back = RemapConfig.from_json(cfg.to_json())
        assert back == cfg


class TestBuildPlan:
    def test_row_counts_and_sparsity(self, sphere_pair, small_plan):
        src, tgt = sphere_pair
        assert small_plan.smooth_op.shape == (tgt.n_nodes, src.n_nodes)
        for t in (0, 100, tgt.n_nodes - 1):
            cols, _ = small_plan.smooth_op.row(t)
            assert cols.size <= small_plan.stencil_nodes(t).size

    def test_constant_field(self, small_plan):
        res = small_plan.apply(np.ones(small_plan.source.n_nodes))
        assert np.abs(res.values - 1.0).max() < 1e-10
        assert not res.target_markers.any()

    def test_identical_meshes_reproduce_polynomials(self):
        mesh = gen_planar_grid(6, 6, "tri")
        plan = build_plan(mesh, mesh, RemapConfig(degree=2, eno=False))
        field = PolynomialUV({(0, 0): 1.0, (1, 0): 2.0, (2, 0): 1.0, (1, 1): -3.0, (0, 2): 1.0})
        f = field(mesh.nodes)
        res = plan.apply(f)
        assert np.abs(res.values - f).max() < 1e-9

    def test_rejects_bad_field(self, small_plan):
        with pytest.raises(DimensionMismatchError):
            small_plan.apply(np.ones(3))
        bad = np.ones(small_plan.source.n_nodes)
        bad[5] = np.inf
        with pytest.raises(NonFiniteError):
            small_plan.apply(bad)


class TestApply:
    def test_smooth_bypass_equals_operator(self, small_plan):
        f = F1(small_plan.source.nodes)
        res = small_plan.apply(f)
        assert not res.target_markers.any()
        direct = small_plan.smooth_op.matvec(f)
        scale = np.abs(direct).max()
        assert np.abs(res.values - direct).max() <= 1e-15 * scale

    def test_marked_values_limited_to_element_range(self, small_plan):
        src = small_plan.source
        f = F3(src.nodes)
        res = small_plan.apply(f)
        assert res.target_markers.any()
        assert set(np.flatnonzero(res.limiter_active)) <= set(
            np.flatnonzero(res.target_markers)
        )
        for t in np.flatnonzero(res.target_markers):
            ids = src.element(int(small_plan.elem_of_target[t]))
            lo, hi = f[ids].min(), f[ids].max()
            assert lo <= res.values[t] <= hi

    def test_one_step_f3_bounds(self, small_plan):
        f = F3(small_plan.source.nodes)
        res = small_plan.apply(f)
        tol = 1e-6 * 0.88
        assert res.values.min() >= 0.12 - tol
        assert res.values.max() <= 1.0 + tol

    def test_scale_shift_equivariance(self, small_plan):
        for field in (F3, F4):
            f = field(small_plan.source.nodes)
            base = small_plan.apply(f).values
            for lam in (1e-3, 1e3):
                for c in (-1e6, 1e6):
                    got = small_plan.apply(lam * f + c).values
                    want = lam * base + c
                    scale = np.abs(want).max()
                    assert np.abs(got - want).max() <= 1e-9 * scale


class TestLinearInterp:
    def test_values_at_source_nodes(self, sphere_pair):
        src, _ = sphere_pair
        f = F1(src.nodes)
        got = linear_interp_remap(src, src, f)
        assert np.abs(got - f).max() < 1e-12

    def test_triangle_centroid_mean(self):
        mesh = gen_planar_grid(1, 1, "tri")
        f = np.array([1.0, 2.0, 3.0, 4.0])
        ids = mesh.element(0)
        centroid = mesh.nodes[ids].mean(axis=0)
        plan = LinearPlan(mesh, gen_planar_grid(1, 1, "tri"))
        got = linear_interp_remap(mesh, mesh, f)  # nodes reproduce themselves
        assert np.abs(got - f).max() < 1e-12
        from surfremap.mesh import ElementLocation, element_interp_row

        loc = ElementLocation(element_id=0, natural=np.array([1 / 3, 1 / 3, 1 / 3]))
        row_ids, w = element_interp_row(mesh, loc)
        assert w @ f[row_ids] == pytest.approx(f[ids].mean())

    def test_convex_bounds(self, sphere_pair):
        src, tgt = sphere_pair
        rng = np.random.default_rng(60)
        f = rng.standard_normal(src.n_nodes)
        got = linear_interp_remap(src, tgt, f)
        assert got.min() >= f.min() - 1e-12
        assert got.max() <= f.max() + 1e-12


class TestRepeatedTransfer:
    def test_one_step_equals_composition(self, sphere_pair):
        src, tgt = sphere_pair
        ab = build_plan(src, tgt, RemapConfig(degree=2))
        ba = build_plan(tgt, src, RemapConfig(degree=2))
        f = F1(src.nodes)
        res = repeated_transfer(ab, ba, f, 1, exact_field=F1, record_integral=False)
        direct = ba.apply(ab.apply(f).values).values
        assert np.array_equal(res.final, direct)
        assert len(res.records) == 1

    def test_constant_thousand_round_trips(self):
        src, tgt = gen_icosphere(2), gen_cubed_sphere(5)
        ab = build_plan(src, tgt, RemapConfig(degree=2))
        ba = build_plan(tgt, src, RemapConfig(degree=2))
        f = np.full(src.n_nodes, 2.5)
        res = repeated_transfer(ab, ba, f, 1000, record_integral=False)
        assert np.abs(res.final - 2.5).max() < 1e-8

    def test_mismatched_plans_rejected(self, sphere_pair):
        src, tgt = sphere_pair
        ab = build_plan(src, tgt, RemapConfig(degree=2))
        with pytest.raises(ConfigError):
            repeated_transfer(ab, ab, F1(src.nodes), 2)

    def test_snapshots(self, sphere_pair):
        src, tgt = sphere_pair
        ab = build_plan(src, tgt, RemapConfig(degree=2))
        ba = build_plan(tgt, src, RemapConfig(degree=2))
        f = F1(src.nodes)
        res = repeated_transfer(
            ab, ba, f, 3, record_integral=False, snapshot_at=(2,), snapshot_fn=None
        )
        assert list(res.snapshots) == [2]
        assert res.snapshots[2].shape == f.shape


class TestIntegration:
    def test_constant_is_sphere_area(self):
        mesh = gen_icosphere(3)
        got = integrate_sphere(mesh, np.ones(mesh.n_nodes), degree=2)
        assert got == pytest.approx(4 * math.pi, rel=1e-10)

    def test_quadrature_weights_sum(self):
        mesh = gen_cubed_sphere(8)
        got = integrate_sphere(mesh, Constant(1.0), degree=2)
        assert got == pytest.approx(4 * math.pi, rel=1e-12)

    def test_odd_function_vanishes(self):
        mesh = gen_icosphere(3)
        got = integrate_sphere(mesh, lambda pts: pts[:, 2], degree=2)
        assert abs(got) < 1e-6

    def test_open_mesh_rejected(self):
        with pytest.raises(OpenMeshError):
            integrate_sphere(gen_planar_grid(2, 2, "tri"), lambda pts: pts[:, 0])

    def test_conservation_exact_samples(self):
        mesh = gen_icosphere(3)
        err = conservation_error(mesh, F1(mesh.nodes), F1, degree=4)
        # reconstruction error only: well below the field scale
        assert err < 1e-6

    def test_conservation_constant_remap(self, sphere_pair, small_plan):
        src, tgt = sphere_pair
        c = 3.0
        vals = small_plan.apply(np.full(src.n_nodes, c)).values
        err = conservation_error(tgt, vals, Constant(c), degree=4)
        assert err < 1e-8 * 4 * math.pi * c


class TestPlanSerialization:
    def test_round_trip_apply_identical(self, tmp_path, sphere_pair, small_plan):
        src, _ = sphere_pair
        path = tmp_path / "plan.npz"
        save_plan(small_plan, path)
        back = load_plan(path)
        assert back.config == small_plan.config
        for field in (F1, F3):
            f = field(src.nodes)
            a = small_plan.apply(f)
            b = back.apply(f)
            assert np.array_equal(a.values, b.values)
            assert np.array_equal(a.target_markers, b.target_markers)

    def test_meshes_restored_exactly(self, tmp_path, sphere_pair, small_plan):
        path = tmp_path / "plan.npz"
        save_plan(small_plan, path)
        back = load_plan(path)
        assert np.array_equal(back.source.nodes, small_plan.source.nodes)
        assert back.target.surface == "sphere"
