"""Analytic test fields on the unit sphere and error measurement helpers.

The four standard fields cover smooth (``f1``, ``f2``) and piecewise smooth
(``f3``, ``f4``) behavior. ``f3`` is axisymmetric with value jumps and slope
breaks along latitudes; ``f4`` adds a crossing longitudinal jump and a pure
curvature (second-derivative) break that a sound detector must leave alone.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatchError, NonPositiveError, NotOnSphereError

__all__ = [
    "AnalyticField",
    "to_spherical",
    "field_by_name",
    "F1",
    "F2",
    "F3",
    "F4",
    "Constant",
    "PolynomialUV",
    "error_norms",
    "convergence_rate",
    "sample_to_csv",
]

TWO_PI = 2.0 * math.pi


def to_spherical(points: np.ndarray):
    """Polar angle theta in [0, pi] and azimuth phi in [0, 2*pi) of unit points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    nrm = np.linalg.norm(pts, axis=1)
    if np.any(np.abs(nrm - 1.0) > 1e-10):
        raise NotOnSphereError("points must lie on the unit sphere within 1e-10")
    theta = np.arccos(np.clip(pts[:, 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), TWO_PI)
    # poles: azimuth is conventionally 0 there
    at_pole = np.abs(np.abs(pts[:, 2]) - 1.0) < 1e-15
    phi[at_pole] = 0.0
    if np.ndim(points) == 1:
        return float(theta[0]), float(phi[0])
    return theta, phi


@dataclass(frozen=True)
class AnalyticField:
    """A named scalar field evaluated at 3-d points."""

    name: str
    func: Callable[[np.ndarray], np.ndarray]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals = self.func(pts)
        if np.ndim(points) == 1:
            return float(vals[0])
        return vals


def _f1(pts):
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    return (np.sin(np.pi * x) + np.cos(np.pi * y)) * z


def _f2(pts):
    # real part of the (unnormalized) degree-6, order-4 spherical harmonic:
    # (11 z^2 - 1) Re((x + i y)^4) = (11 cos^2 t - 1) sin^4 t cos(4 phi)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    return (11.0 * z * z - 1.0) * (x**4 - 6.0 * x * x * y * y + y**4)


_F3_BREAKS = (0.87, math.pi / 2.0, 2.27, 2.83)


def _f3(pts):
    theta, _ = to_spherical(pts)
    out = np.empty_like(theta)
    out[theta < 0.87] = 1.0
    m = (theta >= 0.87) & (theta < math.pi / 2.0)
    out[m] = 1.0 - 0.8 * (theta[m] - 0.87)
    out[(theta >= math.pi / 2.0) & (theta < 2.27)] = 0.44
    out[(theta >= 2.27) & (theta < 2.83)] = 0.24
    out[theta >= 2.83] = 0.12
    return out


_F4_BREAKS_C0 = (math.pi / 4.0,)
_F4_BREAKS_C1 = (math.pi / 2.0, 3.0 * math.pi / 4.0)
_F4_BREAK_C2 = 7.0 * math.pi / 8.0


def _f4(pts):
    theta, phi = to_spherical(pts)
    g = np.where(phi < math.pi, -2000.0, 2000.0)
    t = theta / math.pi
    shape = np.zeros_like(theta)
    m = (theta >= math.pi / 4.0) & (theta < math.pi / 2.0)
    shape[m] = -4.0 * (t[m] - 0.5)
    m = (theta >= math.pi / 2.0) & (theta < 3.0 * math.pi / 4.0)
    shape[m] = 4.0 * (t[m] - 0.5)
    m = (theta >= 3.0 * math.pi / 4.0) & (theta < _F4_BREAK_C2)
    shape[m] = 1.0
    m = theta >= _F4_BREAK_C2
    shape[m] = -64.0 * t[m] ** 2 + 112.0 * t[m] - 48.0
    return -1000.0 + g * shape


F1 = AnalyticField("f1", _f1)
F2 = AnalyticField("f2", _f2)
F3 = AnalyticField("f3", _f3)
F4 = AnalyticField("f4", _f4)


def Constant(c: float = 1.0) -> AnalyticField:
    return AnalyticField(f"const({c})", lambda pts: np.full(pts.shape[0], float(c)))


def PolynomialUV(coeffs: dict[tuple[int, int], float]) -> AnalyticField:
    """Bivariate polynomial in the (x, y) coordinates of planar points."""

    def _eval(pts):
        u, v = pts[:, 0], pts[:, 1]
        out = np.zeros(pts.shape[0])
        for (j, k), c in coeffs.items():
            out += c * u**j * v**k
        return out

    return AnalyticField("poly_uv", _eval)


_REGISTRY = {"f1": F1, "f2": F2, "f3": F3, "f4": F4}


def field_by_name(name: str) -> AnalyticField:
    key = name.lower()
    if key == "const":
        return Constant(1.0)
    try:
        return _REGISTRY[key]
    except KeyError:
        raise KeyError(f"unknown field {name!r}; choose from f1, f2, f3, f4, const") from None


def f3_breakpoints() -> tuple[float, ...]:
    """Latitudes (theta) of all value/slope breaks of f3."""
    return _F3_BREAKS


def f4_breakpoints():
    """f4 break latitudes by kind: (C0 jumps, C1 slope breaks, C2 curvature break)."""
    return _F4_BREAKS_C0, _F4_BREAKS_C1, (_F4_BREAK_C2,)


def error_norms(values: np.ndarray, exact: np.ndarray):
    """Node-count-normalized l2 error and max error: (||e||_2/sqrt(N), max|e|)."""
    values = np.asarray(values, dtype=float)
    exact = np.asarray(exact, dtype=float)
    if values.shape != exact.shape or values.ndim != 1 or values.size == 0:
        raise DimensionMismatchError(
            f"expected equal-length nonempty vectors, got {values.shape} and {exact.shape}"
        )
    err = values - exact
    return float(np.linalg.norm(err) / math.sqrt(err.size)), float(np.max(np.abs(err)))


def convergence_rate(err_coarse: float, n_coarse: int, err_fine: float, n_fine: int) -> float:
    """Observed order from two node counts: 2 log(e1/e2) / log(N2/N1)."""
    if err_coarse <= 0.0 or err_fine <= 0.0:
        raise NonPositiveError("errors must be strictly positive")
    if n_fine <= n_coarse:
        raise NonPositiveError("n_fine must exceed n_coarse")
    return 2.0 * math.log(err_coarse / err_fine) / math.log(n_fine / n_coarse)


def sample_to_csv(mesh, values: np.ndarray, path) -> None:
    """Write (node index, theta, phi, value) rows for a nodal field."""
    values = np.asarray(values, dtype=float)
    theta, phi = to_spherical(mesh.nodes)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "theta", "phi", "value"])
        for i in range(mesh.n_nodes):
            w.writerow([i, f"{theta[i]:.17g}", f"{phi[i]:.17g}", f"{values[i]:.17g}"])
