"""Weighted least-squares fitting in local tangent frames.

Each target point gets a local uv frame, a stencil of source nodes gathered
from k-ring neighborhoods of its containing source element, and a weighted
generalized Vandermonde system solved by pivoted QR. The solve is expressed
as a sparse row over source nodal values, so transfers reduce to sparse
matrix-vector products.

Ill conditioning is handled the way the rest of the pipeline expects:
estimate the 1-norm condition number of R, enlarge the stencil in 0.5-ring
increments up to a cap, then drop trailing pivoted columns one at a time
(never the constant column, which preserves exact constant reproduction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
import scipy.linalg as la

from .errors import (
    ConfigError,
    DegenerateNormalError,
    InsufficientStencilError,
    MissingFieldContextError,
    SingularMatrixError,
)
from .mesh import ElementLocation, SurfaceMesh, locate_element
from .numerics import cond_estimate_1norm, qrcp

__all__ = [
    "LocalFrame",
    "Stencil",
    "WeightScheme",
    "FieldContext",
    "FitDiagnostics",
    "build_frame",
    "build_stencil",
    "build_node_stencil",
    "smooth_ring",
    "eno_ring",
    "min_stencil_points",
    "monomial_exponents",
    "vandermonde",
    "equilibrate",
    "buhmann_c3",
    "wu_c4",
    "wendland_c4",
    "default_sigma",
    "stencil_weights",
    "eval_weight",
    "build_fit_rows",
    "controlled_fit_rows",
    "build_transfer_row",
]

DETECTOR_RING = 1.5


@dataclass(frozen=True)
class LocalFrame:
    """Orthonormal tangent frame (t1, t2, normal) centered at ``origin``."""

    origin: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    normal: np.ndarray

    def project(self, points: np.ndarray) -> np.ndarray:
        """uv coordinates of 3-d points in this frame."""
        d = np.atleast_2d(points) - self.origin
        return np.column_stack([d @ self.t1, d @ self.t2])


def build_frame(point, normal) -> LocalFrame:
    """Frame from a point and (non-unit) normal via Gram-Schmidt.

    The in-plane seed is the global axis least aligned with the normal,
    which makes the frame deterministic.
    """
    point = np.asarray(point, dtype=float)
    normal = np.asarray(normal, dtype=float)
    nrm = math.sqrt(normal @ normal)
    if nrm < 1e-14:
        raise DegenerateNormalError("normal vector is numerically zero")
    m0 = normal / nrm
    axis = int(np.argmin(np.abs(m0)))
    t1 = -m0[axis] * m0
    t1[axis] += 1.0
    t1 /= math.sqrt(t1 @ t1)
    t2 = np.cross(m0, t1)
    return LocalFrame(origin=point, t1=t1, t2=t2, normal=m0)


# ---------------------------------------------------------------------------
# Stencils
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Stencil:
    """Ordered source-node set serving one evaluation point.

    ``uv`` are frame coordinates of the nodes, ``r`` their in-plane
    distances, ``gamma_plus`` the normal-alignment safeguards
    max(0, m_j . m_0). ``R`` is the k-th smallest distance with
    k = ceil(0.75 (p+1)(p+2)); ``h_bar`` and ``h_ell`` are local average
    edge lengths in the uv metric (fitting and detector variants).
    """

    node_ids: np.ndarray
    uv: np.ndarray
    r: np.ndarray
    gamma_plus: np.ndarray
    h_bar: float
    h_ell: float
    R: float
    frame: LocalFrame
    ring: float
    min_points: int


def smooth_ring(degree: int) -> float:
    """Base ring size floor(1.5 p) / 2 for smooth fits."""
    return math.floor(1.5 * degree) / 2.0


def eno_ring(eno_degree: int) -> float:
    # quadratic fits near discontinuities use the wide 3-ring footprint of
    # the quartic smooth fits; other degrees use (q + 0.5)-rings
    return 3.0 if eno_degree == 2 else eno_degree + 0.5


def min_stencil_points(degree: int) -> int:
    return math.ceil(0.75 * (degree + 1) * (degree + 2))


def _uv_edge_mean(mesh, elems, ids_sorted, uv) -> float:
    elems = np.asarray(elems, dtype=np.int64)
    arity = mesh.arities[elems]
    pairs = []
    for a, conn_all in mesh._conn_by_arity.items():
        sel = elems[arity == a]
        if sel.size == 0:
            continue
        conn = conn_all[mesh._arity_pos[sel]]
        for i in range(a):
            pairs.append(np.stack([conn[:, i], conn[:, (i + 1) % a]], axis=1))
    edges = np.unique(np.sort(np.concatenate(pairs), axis=1), axis=0)
    ia = np.searchsorted(ids_sorted, edges[:, 0])
    ib = np.searchsorted(ids_sorted, edges[:, 1])
    d = uv[ia] - uv[ib]
    return float(np.sqrt(np.einsum("ij,ij->i", d, d)).mean())


def _finish_stencil(mesh, frame, ids, ring, degree, h_elems) -> Stencil:
    ids = np.sort(np.asarray(ids, dtype=np.int64))
    uv = frame.project(mesh.nodes[ids])
    r = np.sqrt(np.einsum("ij,ij->i", uv, uv))
    gamma = np.maximum(0.0, mesh.node_normals[ids] @ frame.normal)
    kmin = min_stencil_points(degree)
    rs = np.sort(r)
    big_r = float(rs[min(kmin, rs.size) - 1])
    h_bar = _uv_edge_mean(mesh, h_elems, ids, uv)
    return Stencil(
        node_ids=ids,
        uv=uv,
        r=r,
        gamma_plus=gamma,
        h_bar=h_bar,
        h_ell=h_bar,
        R=big_r,
        frame=frame,
        ring=ring,
        min_points=kmin,
    )


def build_stencil(
    mesh: SurfaceMesh,
    point,
    degree: int,
    purpose: str = "smooth",
    ring: float | None = None,
    location: ElementLocation | None = None,
    eno_degree: int = 2,
) -> tuple[Stencil, ElementLocation]:
    """Stencil for an arbitrary target point on the source mesh.

    The stencil is the union of k-rings of the containing element's nodes,
    grown in 0.5-ring increments until it holds ceil(0.75 (p+1)(p+2))
    nodes. Raises InsufficientStencilError if the whole mesh is too small.
    """
    point = np.asarray(point, dtype=float)
    if location is None:
        location = locate_element(mesh, point)
    anchors = mesh.element(location.element_id)
    if ring is None:
        ring = smooth_ring(degree) if purpose == "smooth" else eno_ring(eno_degree)
    kmin = min_stencil_points(degree)
    k = ring
    while True:
        ids = np.unique(np.concatenate([mesh.ring_set(int(v), k) for v in anchors]))
        if ids.size >= kmin:
            break
        if ids.size == mesh.n_nodes:
            raise InsufficientStencilError(
                f"mesh has only {ids.size} nodes, need {kmin} for degree {degree}"
            )
        k += 0.5
    frame = build_frame(point, mesh.normal_at(point, location))
    from .mesh import _incident_of

    h_elems = _incident_of(mesh, np.asarray(anchors, dtype=np.int64))
    return _finish_stencil(mesh, frame, ids, k, degree, h_elems), location


def build_node_stencil(
    mesh: SurfaceMesh, node_id: int, degree: int = 2, ring: float = DETECTOR_RING
) -> Stencil:
    """Stencil of a source node's own k-ring (detector fittings).

    ``h_ell`` (= ``h_bar``) is the mean uv edge length over the node's
    incident elements.
    """
    kmin = min_stencil_points(degree)
    k = ring
    while True:
        ids = mesh.ring_set(node_id, k)
        if ids.size >= kmin:
            break
        if ids.size == mesh.n_nodes:
            raise InsufficientStencilError(
                f"mesh has only {ids.size} nodes, need {kmin} for degree {degree}"
            )
        k += 0.5
    point = mesh.nodes[node_id]
    frame = build_frame(point, mesh.node_normals[node_id])
    h_elems = mesh.incident_elements(node_id).tolist()
    return _finish_stencil(mesh, frame, ids, k, degree, h_elems)


# ---------------------------------------------------------------------------
# Vandermonde systems
# ---------------------------------------------------------------------------


def monomial_exponents(degree: int) -> list[tuple[int, int]]:
    """Graded lexicographic (u, v) exponents: 1, u, v, u^2, uv, v^2, ..."""
    return [(j, q - j) for q in range(degree + 1) for j in range(q, -1, -1)]


def vandermonde(uv: np.ndarray, degree: int) -> np.ndarray:
    """m x n monomial matrix, n = (p+1)(p+2)/2, graded lex column order."""
    if degree < 1:
        raise ConfigError("polynomial degree must be >= 1")
    uv = np.atleast_2d(uv)
    u, v = uv[:, 0], uv[:, 1]
    upow = [np.ones_like(u)]
    vpow = [np.ones_like(v)]
    for _ in range(degree):
        upow.append(upow[-1] * u)
        vpow.append(vpow[-1] * v)
    return np.column_stack([upow[j] * vpow[k] for j, k in monomial_exponents(degree)])


def equilibrate(A: np.ndarray) -> np.ndarray:
    """Column scaling vector t with ||(A diag(t))_col||_2 = 1 (1 for zero columns)."""
    norms = np.sqrt(np.einsum("ij,ij->j", A, A))
    return np.where(norms > 0.0, 1.0 / np.where(norms > 0.0, norms, 1.0), 1.0)


# ---------------------------------------------------------------------------
# Weight schemes
# ---------------------------------------------------------------------------

_DEFAULT_SIGMA = {2: 2.0, 3: 1.2, 4: 1.6, 6: 1.4}

EPS_ID_FACTOR = 0.01
ENO_C0 = 1.0
ENO_C1 = 0.05
EPS_ENO = 1e-3


def default_sigma(degree: int) -> float:
    try:
        return _DEFAULT_SIGMA[degree]
    except KeyError:
        raise ConfigError(f"no default radius ratio for degree {degree}") from None


def buhmann_c3(r):
    """Buhmann's C^3 compactly supported radial function, cut off at r = 1."""
    r = np.asarray(r, dtype=float)
    inside = r <= 1.0
    rc = np.where(inside, r, 0.0)
    val = (
        112.0 / 45.0 * rc**4.5
        + 16.0 / 3.0 * rc**3.5
        - 7.0 * rc**4
        - 14.0 / 15.0 * rc**2
        + 1.0 / 9.0
    )
    return np.where(inside, np.maximum(val, 0.0), 0.0)


def wu_c4(r):
    """Wu's C^4 radial function (1-r)_+^5 (r^4 + 5r^3 + 9r^2 + 5r + 1)."""
    r = np.asarray(r, dtype=float)
    base = np.maximum(1.0 - r, 0.0)
    return base**5 * (r**4 + 5.0 * r**3 + 9.0 * r**2 + 5.0 * r + 1.0)


def wendland_c4(r):
    """Wendland's C^4 radial function (1-r)_+^6 (35r^2 + 18r + 3)."""
    r = np.asarray(r, dtype=float)
    base = np.maximum(1.0 - r, 0.0)
    return base**6 * (35.0 * r**2 + 18.0 * r + 3.0)


SMOOTH_SCHEME_KINDS = ("inverse-distance", "scaled-buhmann", "wu-c4", "wendland-c4")


@dataclass(frozen=True)
class WeightScheme:
    """Row-weighting rule for the generalized Vandermonde system."""

    kind: str = "scaled-buhmann"
    sigma: float | None = None

    def resolved_sigma(self, degree: int) -> float:
        return self.sigma if self.sigma is not None else default_sigma(degree)


@dataclass(frozen=True)
class FieldContext:
    """Per-stencil field data for the discontinuity-aware weights.

    ``values`` are source nodal values on the stencil, ``g0`` the linear
    interpolation at the target, ``max_abs_alpha`` the per-stencil-node
    maximum |alpha| over incident elements, and ``delta_f_global`` the
    global field range.
    """

    values: np.ndarray
    g0: float
    delta_f_global: float
    max_abs_alpha: np.ndarray


def stencil_weights(
    scheme: WeightScheme,
    stencil: Stencil,
    degree: int,
    field_context: FieldContext | None = None,
) -> np.ndarray:
    """Weight vector over the stencil for the requested scheme."""
    r = stencil.r
    gamma = stencil.gamma_plus
    if scheme.kind == "unit":
        # normal-alignment safeguard only; maximally oscillation-prone fits
        return gamma.copy()
    if scheme.kind == "inverse-distance":
        eps = EPS_ID_FACTOR * stencil.h_bar**2
        return gamma * (r * r + eps) ** (-degree / 4.0)
    if scheme.kind in ("scaled-buhmann", "wu-c4", "wendland-c4"):
        rho = scheme.resolved_sigma(degree) * stencil.R
        kernel = {
            "scaled-buhmann": buhmann_c3,
            "wu-c4": wu_c4,
            "wendland-c4": wendland_c4,
        }[scheme.kind]
        return gamma * kernel(r / rho)
    if scheme.kind == "wls-eno":
        if field_context is None:
            raise MissingFieldContextError("wls-eno weights need field context")
        ctx = field_context
        eps = EPS_ID_FACTOR * stencil.h_bar**2
        num = gamma * (r * r + eps) ** (-0.25)
        den = (
            ENO_C0 * np.abs(ctx.values - ctx.g0) ** 2
            + ENO_C1 * ctx.delta_f_global * ctx.max_abs_alpha
            + EPS_ENO * ctx.delta_f_global**2 * stencil.h_bar**2
        )
        w = num / np.maximum(den, np.finfo(float).tiny)
        # the fit is invariant under uniform weight scaling; normalize so a
        # degenerate (near-zero) denominator cannot overflow downstream
        top = w.max()
        return w / top if top > 0.0 else w
    raise ConfigError(f"unknown weight scheme {scheme.kind!r}")


def eval_weight(
    scheme: WeightScheme,
    stencil: Stencil,
    j: int,
    degree: int,
    field_context: FieldContext | None = None,
) -> float:
    """Weight of the j-th stencil node."""
    return float(stencil_weights(scheme, stencil, degree, field_context)[j])


# ---------------------------------------------------------------------------
# Row construction with condition control
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitDiagnostics:
    cond_estimate: float
    dropped_columns: int
    final_degree: int
    ring: float
    stencil_size: int


def _assemble_rows(eval_v_t, perm, retained, R, Q, w):
    z = la.solve_triangular(R[:retained, :retained], Q[:, :retained].T, check_finite=False)
    m0 = np.zeros((eval_v_t.shape[1], w.size))
    m0[perm[:retained]] = z
    return (eval_v_t @ m0) * w[None, :]


def _solve_rows_pinned(WAT, t, eval_V, w, exps, cond_threshold):
    """Column dropping with the constant column pinned first.

    Used only when plain pivoted dropping would discard the constant
    column (degenerate stencils); pins column 0 by one Gram-Schmidt step
    and pivots the rest.
    """
    m, n = WAT.shape
    c0 = WAT[:, 0]
    nrm0 = np.linalg.norm(c0)
    if nrm0 == 0.0:
        raise SingularMatrixError("constant column vanished under the weights")
    q0 = c0 / nrm0
    rest = WAT[:, 1:]
    b = rest - np.outer(q0, q0 @ rest)
    f = qrcp(b)
    perm = np.concatenate(([0], f.perm + 1))
    top = q0 @ rest[:, f.perm]
    r_full = np.zeros((n, n))
    r_full[0, 0] = nrm0
    r_full[0, 1:] = top
    r_full[1:, 1:] = f.R
    q_full = np.column_stack([q0, f.Q])
    retained = n
    cond = cond_estimate_1norm(r_full)
    while cond > cond_threshold and retained > 1:
        retained -= 1
        cond = cond_estimate_1norm(r_full[:retained, :retained])
    rows = _assemble_rows(eval_V * t[None, :], perm, retained, r_full, q_full, w)
    final_degree = max(sum(exps[perm[j]]) for j in range(retained))
    return rows, FitDiagnostics(cond, n - retained, final_degree, 0.0, m)


def build_fit_rows(
    stencil: Stencil,
    degree: int,
    scheme: WeightScheme,
    eval_uv: np.ndarray,
    field_context: FieldContext | None = None,
    cond_threshold: float = 1e8,
    allow_drop: bool = True,
    A: np.ndarray | None = None,
):
    """Rows mapping stencil nodal values to fit evaluations at ``eval_uv``.

    Returns (rows, diagnostics); rows is None when the condition estimate
    exceeds the threshold and ``allow_drop`` is False (caller should
    enlarge the stencil and retry). ``A`` may pass a precomputed Vandermonde
    matrix of the stencil.
    """
    if A is None:
        A = vandermonde(stencil.uv, degree)
    w = stencil_weights(scheme, stencil, degree, field_context)
    WA = A * w[:, None]
    t = equilibrate(WA)
    WAT = WA * t[None, :]
    f = qrcp(WAT)
    n = A.shape[1]
    cond = cond_estimate_1norm(f.R)
    exps = monomial_exponents(degree)
    eval_V = vandermonde(np.atleast_2d(eval_uv), degree)
    if cond <= cond_threshold:
        rows = _assemble_rows(eval_V * t[None, :], f.perm, n, f.R, f.Q, w)
        return rows, FitDiagnostics(cond, 0, degree, stencil.ring, stencil.node_ids.size)
    if not allow_drop:
        return None, FitDiagnostics(cond, 0, degree, stencil.ring, stencil.node_ids.size)
    retained = n
    while cond > cond_threshold and retained > 1:
        retained -= 1
        cond = cond_estimate_1norm(f.R[:retained, :retained])
    const_pos = int(np.flatnonzero(f.perm == 0)[0])
    if const_pos >= retained:
        rows, diag = _solve_rows_pinned(WAT, t, eval_V, w, exps, cond_threshold)
        return rows, replace(diag, ring=stencil.ring, stencil_size=stencil.node_ids.size)
    rows = _assemble_rows(eval_V * t[None, :], f.perm, retained, f.R, f.Q, w)
    final_degree = max(sum(exps[f.perm[j]]) for j in range(retained))
    diag = FitDiagnostics(
        cond, n - retained, final_degree, stencil.ring, stencil.node_ids.size
    )
    return rows, diag


def controlled_fit_rows(
    mesh: SurfaceMesh,
    point,
    degree: int,
    scheme: WeightScheme,
    eval_points=None,
    field_context_fn: Callable[[Stencil], FieldContext] | None = None,
    cond_threshold: float = 1e8,
    max_ring_growth: int = 3,
    purpose: str = "smooth",
    eno_degree: int = 2,
    location: ElementLocation | None = None,
    stencil: Stencil | None = None,
):
    """Fit at ``point`` with full condition control, evaluated at ``eval_points``.

    Enlarges the stencil in 0.5-ring steps (up to ``max_ring_growth``) while
    the condition estimate exceeds the threshold, then falls back to column
    dropping. ``eval_points`` are 3-d points (default: the fit origin).
    Returns (stencil, rows, diagnostics) with one row per evaluation point.
    """
    if stencil is None:
        stencil, location = build_stencil(
            mesh, point, degree, purpose=purpose, location=location, eno_degree=eno_degree
        )
    if eval_points is None:
        eval_uv = np.zeros((1, 2))
    else:
        eval_uv = stencil.frame.project(np.atleast_2d(eval_points))
    base_ring = stencil.ring
    for extra in range(max_ring_growth + 1):
        if extra > 0:
            grown, location = build_stencil(
                mesh,
                point,
                degree,
                purpose=purpose,
                ring=base_ring + 0.5 * extra,
                location=location,
                eno_degree=eno_degree,
            )
            if grown.node_ids.size == stencil.node_ids.size:
                break  # mesh exhausted, enlargement is a no-op
            stencil = grown
        ctx = field_context_fn(stencil) if field_context_fn is not None else None
        rows, diag = build_fit_rows(
            stencil,
            degree,
            scheme,
            eval_uv,
            field_context=ctx,
            cond_threshold=cond_threshold,
            allow_drop=False,
        )
        if rows is not None:
            return stencil, rows, diag
    ctx = field_context_fn(stencil) if field_context_fn is not None else None
    rows, diag = build_fit_rows(
        stencil,
        degree,
        scheme,
        eval_uv,
        field_context=ctx,
        cond_threshold=cond_threshold,
        allow_drop=True,
    )
    return stencil, rows, diag


def build_transfer_row(
    mesh: SurfaceMesh,
    point,
    degree: int,
    scheme: WeightScheme,
    field_context_fn: Callable[[Stencil], FieldContext] | None = None,
    cond_threshold: float = 1e8,
    max_ring_growth: int = 3,
    purpose: str = "smooth",
    eno_degree: int = 2,
    location: ElementLocation | None = None,
    stencil: Stencil | None = None,
):
    """One sparse transfer row: fit at ``point``, evaluated at ``point``.

    Applied to source nodal values the row yields the weighted fit value at
    the target (the constant coefficient of the local expansion). Returns
    (stencil, row, diagnostics).
    """
    stencil, rows, diag = controlled_fit_rows(
        mesh,
        point,
        degree,
        scheme,
        eval_points=None,
        field_context_fn=field_context_fn,
        cond_threshold=cond_threshold,
        max_ring_growth=max_ring_growth,
        purpose=purpose,
        eno_degree=eno_degree,
        location=location,
        stencil=stencil,
    )
    return stencil, rows[0], diag
