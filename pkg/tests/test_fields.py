import math

import numpy as np
import pytest

from surfremap.errors import DimensionMismatchError, NonPositiveError, NotOnSphereError
from surfremap.fields import (
    F1,
    F2,
    F3,
    F4,
    Constant,
    convergence_rate,
    error_norms,
    f3_breakpoints,
    f4_breakpoints,
    to_spherical,
)


def sph_point(theta, phi):
    return np.array(
        [math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)]
    )


class TestToSpherical:
    def test_north_pole(self):
        theta, phi = to_spherical(np.array([0.0, 0.0, 1.0]))
        assert theta == pytest.approx(0.0)
        assert phi == 0.0

    def test_x_axis(self):
        theta, phi = to_spherical(np.array([1.0, 0.0, 0.0]))
        assert theta == pytest.approx(math.pi / 2)
        assert phi == pytest.approx(0.0)

    def test_minus_y(self):
        theta, phi = to_spherical(np.array([0.0, -1.0, 0.0]))
        assert theta == pytest.approx(math.pi / 2)
        assert phi == pytest.approx(3 * math.pi / 2)

    def test_off_sphere_rejected(self):
        with pytest.raises(NotOnSphereError):
            to_spherical(np.array([0.0, 0.0, 1.1]))


class TestFieldValues:
    def test_f1_north_pole(self):
        assert F1(np.array([0.0, 0.0, 1.0])) == pytest.approx(1.0)

    def test_f2_vanishes_at_poles(self):
        assert F2(np.array([0.0, 0.0, 1.0])) == pytest.approx(0.0)
        assert F2(np.array([0.0, 0.0, -1.0])) == pytest.approx(0.0)

    def test_f2_harmonic_form(self):
        # (11 z^2 - 1) sin^4(t) cos(4 phi) at sample angles
        rng = np.random.default_rng(5)
        for _ in range(50):
            theta, phi = rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi)
            p = sph_point(theta, phi)
            expected = (11 * math.cos(theta) ** 2 - 1) * math.sin(theta) ** 4 * math.cos(4 * phi)
            assert F2(p) == pytest.approx(expected, abs=1e-12)

    def test_f3_branch_values(self):
        assert F3(np.array([0.0, 0.0, 1.0])) == pytest.approx(1.0)
        assert F3(np.array([0.0, 0.0, -1.0])) == pytest.approx(0.12)
        assert F3(sph_point(2.5, 1.0)) == pytest.approx(0.24)
        assert F3(sph_point(1.0, 0.3)) == pytest.approx(1.0 - 0.8 * (1.0 - 0.87))

    def test_f3_axisymmetric(self):
        rng = np.random.default_rng(6)
        for theta in rng.uniform(0, math.pi, 20):
            vals = [F3(sph_point(theta, phi)) for phi in rng.uniform(0, 2 * math.pi, 5)]
            assert max(vals) - min(vals) == 0.0

    def test_f3_range(self):
        rng = np.random.default_rng(16)
        pts = rng.standard_normal((2000, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        vals = F3(pts)
        assert vals.min() >= 0.12 and vals.max() <= 1.0

    def test_f4_first_branch_flat(self):
        # theta < pi/4 multiplies the azimuthal jump by zero
        for phi in (0.1, 2.0, 4.0):
            assert F4(sph_point(0.1, phi)) == pytest.approx(-1000.0)

    def test_f4_range(self):
        rng = np.random.default_rng(17)
        pts = rng.standard_normal((5000, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        vals = F4(pts)
        assert vals.min() >= -3000.0 - 1e-9 and vals.max() <= 1000.0 + 1e-9

    def test_f4_azimuthal_jump_sides(self):
        theta = 0.9  # inside the second branch
        factor = -4 * (theta / math.pi - 0.5)
        assert F4(sph_point(theta, 0.5)) == pytest.approx(-1000.0 - 2000.0 * factor)
        assert F4(sph_point(theta, math.pi + 0.5)) == pytest.approx(-1000.0 + 2000.0 * factor)

    def test_f4_c2_break_is_c1_continuous(self):
        # value and slope agree where the parabolic branch takes over
        tb = 7 * math.pi / 8
        shape4 = 1.0
        shape5 = -64 * tb**2 / math.pi**2 + 112 * tb / math.pi - 48
        assert shape5 == pytest.approx(shape4, abs=1e-12)
        slope5 = -128 * tb / math.pi**2 + 112 / math.pi
        assert slope5 == pytest.approx(0.0, abs=1e-12)
        # second derivative jumps: -128/pi^2 against 0
        assert abs(-128 / math.pi**2) > 1.0

    def test_f4_c1_breaks_continuous(self):
        for tb in f4_breakpoints()[1]:
            below = F4(sph_point(tb - 1e-9, 2.0))
            above = F4(sph_point(tb + 1e-9, 2.0))
            assert below == pytest.approx(above, abs=1e-5)

    def test_f3_c0_jump_at_half_pi(self):
        # the sloped branch ends at 1 - 0.8 (pi/2 - 0.87), a small step below 0.44
        below = F3(sph_point(math.pi / 2 - 1e-12, 0.0))
        assert 0.44 - below == pytest.approx(0.44 - (1 - 0.8 * (math.pi / 2 - 0.87)), abs=1e-9)
        assert 0.44 - below > 5e-4

    def test_breakpoint_lists(self):
        assert f3_breakpoints() == (0.87, math.pi / 2, 2.27, 2.83)
        c0, c1, c2 = f4_breakpoints()
        assert c0 == (math.pi / 4,)
        assert c1 == (math.pi / 2, 3 * math.pi / 4)
        assert c2 == (7 * math.pi / 8,)

    def test_constant(self):
        assert Constant(3.5)(np.array([0.0, 0.0, 1.0])) == 3.5


class TestErrorNorms:
    def test_three_four(self):
        l2, linf = error_norms(np.array([3.0, 4.0]), np.zeros(2))
        assert l2 == pytest.approx(math.sqrt(25 / 2))
        assert linf == pytest.approx(4.0)

    def test_zero(self):
        assert error_norms(np.ones(5), np.ones(5)) == (0.0, 0.0)

    def test_single_component(self):
        l2, linf = error_norms(np.array([-5.0, 0.0, 0.0]), np.zeros(3))
        assert linf == pytest.approx(5.0)
        assert l2 == pytest.approx(5.0 / math.sqrt(3))

    def test_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            error_norms(np.ones(3), np.ones(4))


class TestConvergenceRate:
    def test_rate_five(self):
        assert convergence_rate(32.0, 100, 1.0, 400) == pytest.approx(5.0)

    def test_equal_errors(self):
        assert convergence_rate(1.0, 100, 1.0, 400) == pytest.approx(0.0)

    def test_rate_two(self):
        assert convergence_rate(4.0, 100, 1.0, 400) == pytest.approx(2.0)

    def test_nonpositive(self):
        with pytest.raises(NonPositiveError):
            convergence_rate(0.0, 100, 1.0, 400)
        with pytest.raises(NonPositiveError):
            convergence_rate(1.0, 400, 1.0, 100)
