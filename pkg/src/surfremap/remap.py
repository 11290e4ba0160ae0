"""Transfer plans between non-matching surface meshes.

A plan precomputes one sparse fit row per target node (reused across
applications) together with the detector's element-indicator operator on
the source mesh. Applying a plan to a field runs the detector, rebuilds
data-dependent rows for targets near detected discontinuities, and clamps
those values to the nodal range of their containing source element.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import detector as det
from .errors import (
    ConfigError,
    DimensionMismatchError,
    NonFiniteError,
    OpenMeshError,
    SurfremapError,
)
from .fields import error_norms
from .mesh import (
    ElementLocation,
    SurfaceMesh,
    element_interp_row,
    locate_element,
)
from .numerics import SparseOperator
from .wls import (
    FieldContext,
    SMOOTH_SCHEME_KINDS,
    WeightScheme,
    build_fit_rows,
    build_stencil,
    controlled_fit_rows,
    eno_ring,
    vandermonde,
)

__all__ = [
    "RemapConfig",
    "RemapPlan",
    "LinearPlan",
    "RemapResult",
    "RoundRecord",
    "RepeatedTransferResult",
    "build_plan",
    "linear_interp_remap",
    "repeated_transfer",
    "integrate_sphere",
    "integration_vector",
    "conservation_error",
    "save_plan",
    "load_plan",
]

SUPPORTED_DEGREES = (2, 3, 4, 6)
SUPPORTED_ENO_DEGREES = (1, 2, 3)


@dataclass(frozen=True)
class RemapConfig:
    """Transfer configuration: fit degrees, weight scheme, and thresholds."""

    degree: int = 4
    eno_degree: int = 2
    scheme: str = "scaled-buhmann"
    sigma: float | None = None
    cond_threshold: float = 1e8
    max_ring_growth: int = 3
    eno: bool = True
    kappa: float = det.KAPPA
    c_local: float = det.C_LOCAL
    c_global: float = det.C_GLOBAL

    def validate(self) -> None:
        if self.degree not in SUPPORTED_DEGREES:
            raise ConfigError(f"degree must be one of {SUPPORTED_DEGREES}, got {self.degree}")
        if self.eno_degree not in SUPPORTED_ENO_DEGREES:
            raise ConfigError(
                f"eno_degree must be one of {SUPPORTED_ENO_DEGREES}, got {self.eno_degree}"
            )
        if self.scheme not in SMOOTH_SCHEME_KINDS:
            raise ConfigError(f"scheme must be one of {SMOOTH_SCHEME_KINDS}, got {self.scheme!r}")
        if self.sigma is not None and self.sigma <= 1.0:
            raise ConfigError("radius ratio sigma must exceed 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RemapConfig":
        return cls(**json.loads(text))


@dataclass
class RemapResult:
    """Transferred values plus per-target detector and limiter state."""

    values: np.ndarray
    target_markers: np.ndarray
    limiter_active: np.ndarray
    diagnostics: dict


class RemapPlan:
    """Precomputed transfer from a source mesh to a target mesh.

    The smooth rows form a sparse operator reused by every apply; rows for
    marked targets are data dependent and rebuilt per application from
    cached stencils. Plans are immutable during apply (the lazy caches are
    only grown), so one plan may serve several fields.
    """

    def __init__(
        self,
        source: SurfaceMesh,
        target: SurfaceMesh,
        config: RemapConfig,
        smooth_op: SparseOperator,
        g0_op: SparseOperator,
        stencil_offsets: np.ndarray,
        stencil_ids: np.ndarray,
        elem_of_target: np.ndarray,
        natural: np.ndarray,
        natural_len: np.ndarray,
        dropped_columns: np.ndarray,
        cond_estimates: np.ndarray,
    ):
        self.source = source
        self.target = target
        self.config = config
        self.smooth_op = smooth_op
        self.g0_op = g0_op
        self.stencil_offsets = stencil_offsets
        self.stencil_ids = stencil_ids
        self.elem_of_target = elem_of_target
        self.natural = natural
        self.natural_len = natural_len
        self.dropped_columns = dropped_columns
        self.cond_estimates = cond_estimates
        # containing-element nodes per target, padded for vectorized min/max
        pad = np.empty((target.n_nodes, 4), dtype=np.int64)
        for t in range(target.n_nodes):
            ids = source.element(int(elem_of_target[t]))
            pad[t, : ids.size] = ids
            pad[t, ids.size :] = ids[-1]
        self._elem_nodes_padded = pad
        self._eno_cache: dict[int, tuple] = {}

    @property
    def n_targets(self) -> int:
        return self.target.n_nodes

    def location(self, t: int) -> ElementLocation:
        return ElementLocation(
            element_id=int(self.elem_of_target[t]),
            natural=self.natural[t, : self.natural_len[t]].copy(),
        )

    def stencil_nodes(self, t: int) -> np.ndarray:
        return self.stencil_ids[self.stencil_offsets[t] : self.stencil_offsets[t + 1]]

    def detector(self) -> det.DetectorCache:
        return det.detector_cache(self.source, cond_threshold=self.config.cond_threshold)

    # -- application ---------------------------------------------------

    def apply(self, f: np.ndarray) -> RemapResult:
        """Transfer source nodal values to the target mesh."""
        f = np.asarray(f, dtype=float)
        if f.shape != (self.source.n_nodes,):
            raise DimensionMismatchError(
                f"field length {f.shape} does not match source nodes {self.source.n_nodes}"
            )
        if not np.all(np.isfinite(f)):
            raise NonFiniteError("input field contains non-finite values")
        values = self.smooth_op.matvec(f)
        n_t = self.n_targets
        markers_t = np.zeros(n_t, dtype=bool)
        limiter = np.zeros(n_t, dtype=bool)
        diag = {"marked_targets": 0, "eno_rows_rebuilt": 0, "eno_dropped_columns": 0}
        stats = det.compute_field_stats(self.source, f) if self.config.eno else None
        # a field with zero range has no discontinuities; the thresholds all
        # vanish and only roundoff would be compared against them
        if self.config.eno and stats.delta_f_global > 0.0:
            cache = self.detector()
            alpha = cache.alpha_op.matvec(f)
            beta = det.compute_beta(self.source, alpha, stats)
            src_markers, _ = det.dual_threshold(
                self.source,
                alpha,
                beta,
                f,
                stats,
                kappa=self.config.kappa,
                c_local=self.config.c_local,
                c_global=self.config.c_global,
            )
            if src_markers.any():
                markers_t = det.transfer_markers(
                    src_markers, (self.stencil_offsets, self.stencil_ids)
                )
            if markers_t.any():
                g0_all = self.g0_op.matvec(f)
                off = self.source.node_elem_offsets
                abs_inc = np.abs(alpha)[self.source.node_elem_ids]
                node_max_abs = np.maximum.reduceat(abs_inc, off[:-1])
                marked = np.flatnonzero(markers_t)
                diag["marked_targets"] = int(marked.size)
                for t in marked:
                    values[t], dropped = self._eno_value(
                        int(t), f, float(g0_all[t]), stats.delta_f_global, node_max_abs
                    )
                    diag["eno_rows_rebuilt"] += 1
                    diag["eno_dropped_columns"] += dropped
                # limiter: containing-element bounds on the source mesh
                fe = f[self._elem_nodes_padded[marked]]
                lo = fe.min(axis=1)
                hi = fe.max(axis=1)
                clamped = np.clip(values[marked], lo, hi)
                limiter[marked] = clamped != values[marked]
                values[marked] = clamped
        return RemapResult(
            values=values, target_markers=markers_t, limiter_active=limiter, diagnostics=diag
        )

    def _eno_value(self, t, f, g0, dfg, node_max_abs):
        cfg = self.config
        entry = self._eno_cache.get(t)
        if entry is None:
            loc = self.location(t)
            stencil, loc = build_stencil(
                self.source,
                self.target.nodes[t],
                cfg.eno_degree,
                purpose="eno",
                ring=eno_ring(cfg.eno_degree),
                location=loc,
                eno_degree=cfg.eno_degree,
            )
            entry = (stencil, loc, vandermonde(stencil.uv, cfg.eno_degree))
            self._eno_cache[t] = entry
        stencil, loc, A = entry

        def ctx_for(st):
            return FieldContext(
                values=f[st.node_ids],
                g0=g0,
                delta_f_global=dfg,
                max_abs_alpha=node_max_abs[st.node_ids],
            )

        eno_scheme = WeightScheme(kind="wls-eno")
        rows, diag = build_fit_rows(
            stencil,
            cfg.eno_degree,
            eno_scheme,
            np.zeros((1, 2)),
            field_context=ctx_for(stencil),
            cond_threshold=cfg.cond_threshold,
            allow_drop=False,
            A=A,
        )
        if rows is not None:
            return float(rows[0] @ f[stencil.node_ids]), 0
        stencil2, rows, diag = controlled_fit_rows(
            self.source,
            self.target.nodes[t],
            cfg.eno_degree,
            eno_scheme,
            field_context_fn=ctx_for,
            cond_threshold=cfg.cond_threshold,
            max_ring_growth=cfg.max_ring_growth,
            purpose="eno",
            eno_degree=cfg.eno_degree,
            location=loc,
            stencil=stencil,
        )
        return float(rows[0] @ f[stencil2.node_ids]), diag.dropped_columns


class LinearPlan:
    """Piecewise linear/bilinear interpolation within containing elements."""

    def __init__(self, source: SurfaceMesh, target: SurfaceMesh):
        self.source = source
        self.target = target
        self.config = RemapConfig(degree=2, eno=False, scheme="inverse-distance")
        rows = []
        for t in range(target.n_nodes):
            loc = locate_element(source, target.nodes[t])
            rows.append(element_interp_row(source, loc))
        self.op = SparseOperator.from_rows((target.n_nodes, source.n_nodes), rows)

    def apply(self, f: np.ndarray) -> RemapResult:
        f = np.asarray(f, dtype=float)
        if not np.all(np.isfinite(f)):
            raise NonFiniteError("input field contains non-finite values")
        n_t = self.target.n_nodes
        return RemapResult(
            values=self.op.matvec(f),
            target_markers=np.zeros(n_t, dtype=bool),
            limiter_active=np.zeros(n_t, dtype=bool),
            diagnostics={},
        )


def build_plan(
    source: SurfaceMesh, target: SurfaceMesh, config: RemapConfig | None = None
) -> RemapPlan:
    """Precompute smooth fit rows for every target node."""
    cfg = config or RemapConfig()
    cfg.validate()
    scheme = WeightScheme(kind=cfg.scheme, sigma=cfg.sigma)
    n_t = target.n_nodes
    elem_of_target = np.empty(n_t, dtype=np.int64)
    natural = np.zeros((n_t, 3))
    natural_len = np.empty(n_t, dtype=np.int64)
    dropped = np.zeros(n_t, dtype=np.int64)
    conds = np.zeros(n_t)
    smooth_rows = []
    g0_rows = []
    sten_ids: list[np.ndarray] = []
    for t in range(n_t):
        point = target.nodes[t]
        try:
            loc = locate_element(source, point)
            stencil, row, diag = controlled_fit_rows(
                source,
                point,
                cfg.degree,
                scheme,
                cond_threshold=cfg.cond_threshold,
                max_ring_growth=cfg.max_ring_growth,
                location=loc,
            )
        except SurfremapError as exc:
            raise type(exc)(f"target node {t}: {exc}") from exc
        elem_of_target[t] = loc.element_id
        nat = np.asarray(loc.natural, dtype=float)
        natural[t, : nat.size] = nat
        natural_len[t] = nat.size
        dropped[t] = diag.dropped_columns
        conds[t] = diag.cond_estimate
        smooth_rows.append((stencil.node_ids, rows_squeeze(row)))
        g0_rows.append(element_interp_row(source, loc))
        sten_ids.append(stencil.node_ids)
    counts = np.array([ids.size for ids in sten_ids], dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(counts)))
    return RemapPlan(
        source=source,
        target=target,
        config=cfg,
        smooth_op=SparseOperator.from_rows((n_t, source.n_nodes), smooth_rows),
        g0_op=SparseOperator.from_rows((n_t, source.n_nodes), g0_rows),
        stencil_offsets=offsets,
        stencil_ids=np.concatenate(sten_ids) if sten_ids else np.zeros(0, dtype=np.int64),
        elem_of_target=elem_of_target,
        natural=natural,
        natural_len=natural_len,
        dropped_columns=dropped,
        cond_estimates=conds,
    )


def rows_squeeze(row):
    return np.asarray(row, dtype=float).ravel()


def linear_interp_remap(source: SurfaceMesh, target: SurfaceMesh, f: np.ndarray) -> np.ndarray:
    """Barycentric/bilinear interpolation of source values at target nodes."""
    return LinearPlan(source, target).apply(f).values


# ---------------------------------------------------------------------------
# Repeated transfer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RoundRecord:
    step: int
    l2: float
    linf: float
    vmin: float
    vmax: float
    integral: float


@dataclass
class RepeatedTransferResult:
    final: np.ndarray
    records: list
    snapshots: dict


def repeated_transfer(
    plan_ab,
    plan_ba,
    f0_on_a: np.ndarray,
    n_steps: int,
    exact_field=None,
    record_integral: bool = True,
    snapshot_at=(),
    snapshot_fn=None,
) -> RepeatedTransferResult:
    """Alternate A->B->A transfers, recording per-round-trip diagnostics.

    Each record holds the node-normalized l2 and max error against the
    analytic field at A's nodes (NaN when no exact field is given), the
    field extrema, and the surface integral on A.
    """
    if plan_ab.source is not plan_ba.target or plan_ab.target is not plan_ba.source:
        raise ConfigError("plans must connect the same two meshes in opposite directions")
    if n_steps < 1:
        raise ConfigError("step count must be >= 1")
    mesh_a = plan_ab.source
    fa = np.asarray(f0_on_a, dtype=float).copy()
    exact_a = exact_field(mesh_a.nodes) if exact_field is not None else None
    ivec = None
    if record_integral:
        p = plan_ab.config.degree
        ivec = integration_vector(mesh_a, p if p in (4, 6) else 2)
    records = []
    snapshots = {}
    snapshot_at = set(snapshot_at)
    for step in range(1, n_steps + 1):
        try:
            fb = plan_ab.apply(fa).values
            fa = plan_ba.apply(fb).values
        except SurfremapError as exc:
            raise type(exc)(f"round trip {step}: {exc}") from exc
        if exact_a is not None:
            l2, linf = error_norms(fa, exact_a)
        else:
            l2 = linf = math.nan
        integral = float(ivec @ fa) if ivec is not None else math.nan
        records.append(
            RoundRecord(
                step=step,
                l2=l2,
                linf=linf,
                vmin=float(fa.min()),
                vmax=float(fa.max()),
                integral=integral,
            )
        )
        if step in snapshot_at:
            snapshots[step] = snapshot_fn(step, fa) if snapshot_fn else fa.copy()
    return RepeatedTransferResult(final=fa, records=records, snapshots=snapshots)


# ---------------------------------------------------------------------------
# Surface quadrature and conservation
# ---------------------------------------------------------------------------

# symmetric degree-4 rule on the reference triangle (6 points, weights sum 1)
_TRI_A1 = 0.445948490915965
_TRI_A2 = 0.091576213509771
_TRI_W1 = 0.223381589678011
_TRI_W2 = 0.109951743655322
_TRI_BARY = np.array(
    [
        (_TRI_A1, _TRI_A1, 1.0 - 2.0 * _TRI_A1),
        (_TRI_A1, 1.0 - 2.0 * _TRI_A1, _TRI_A1),
        (1.0 - 2.0 * _TRI_A1, _TRI_A1, _TRI_A1),
        (_TRI_A2, _TRI_A2, 1.0 - 2.0 * _TRI_A2),
        (_TRI_A2, 1.0 - 2.0 * _TRI_A2, _TRI_A2),
        (1.0 - 2.0 * _TRI_A2, _TRI_A2, _TRI_A2),
    ]
)
_TRI_W = np.array([_TRI_W1, _TRI_W1, _TRI_W1, _TRI_W2, _TRI_W2, _TRI_W2])


def _spherical_triangle_areas(a, b, c):
    """L'Huilier's formula for unit-sphere triangles with vertices a, b, c."""

    def ang(u, v):
        return np.arccos(np.clip(np.einsum("ij,ij->i", u, v), -1.0, 1.0))

    la, lb, lc = ang(b, c), ang(a, c), ang(a, b)
    s = 0.5 * (la + lb + lc)
    t = (
        np.tan(0.5 * s)
        * np.tan(0.5 * (s - la))
        * np.tan(0.5 * (s - lb))
        * np.tan(0.5 * (s - lc))
    )
    return 4.0 * np.arctan(np.sqrt(np.maximum(t, 0.0)))


def _sphere_quadrature(mesh: SurfaceMesh):
    """Projected quadrature points, weights, and owning element per point.

    Each element is split into flat triangles; the degree-4 rule is applied
    on each with weights rescaled by the spherical patch area (geodesic
    edges partition the sphere exactly, so constants integrate to 4*pi).
    """
    cached = mesh._cache.get("quadrature")
    if cached is not None:
        return cached
    if not mesh.is_closed:
        raise OpenMeshError("surface quadrature requires a closed mesh")
    tris = []
    owner = []
    for e in range(mesh.n_elements):
        ids = mesh.element(e)
        for i in range(1, len(ids) - 1):
            tris.append((ids[0], ids[i], ids[i + 1]))
            owner.append(e)
    tris = np.asarray(tris, dtype=np.int64)
    owner = np.asarray(owner, dtype=np.int64)
    va, vb, vc = mesh.nodes[tris[:, 0]], mesh.nodes[tris[:, 1]], mesh.nodes[tris[:, 2]]
    areas = _spherical_triangle_areas(va, vb, vc)
    pts = (
        _TRI_BARY[None, :, 0, None] * va[:, None, :]
        + _TRI_BARY[None, :, 1, None] * vb[:, None, :]
        + _TRI_BARY[None, :, 2, None] * vc[:, None, :]
    ).reshape(-1, 3)
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    weights = (areas[:, None] * _TRI_W[None, :]).reshape(-1)
    owner_q = np.repeat(owner, _TRI_W.size)
    cached = (pts, weights, owner_q)
    mesh._cache["quadrature"] = cached
    return cached


def integration_vector(
    mesh: SurfaceMesh, degree: int = 2, scheme: WeightScheme | None = None
) -> np.ndarray:
    """Nodal weights w with w . f ~ the surface integral of the field.

    Quadrature-point values come from one degree-``degree`` fit per element,
    centered at the element center and evaluated at that element's points.
    The vector is field independent and cached per (degree, scheme).
    """
    scheme = scheme or WeightScheme(kind="scaled-buhmann")
    key = ("intvec", degree, scheme.kind, scheme.sigma)
    cached = mesh._cache.get(key)
    if cached is not None:
        return cached
    pts, weights, owner_q = _sphere_quadrature(mesh)
    vec = np.zeros(mesh.n_nodes)
    order = np.argsort(owner_q, kind="stable")
    bounds = np.searchsorted(owner_q[order], np.arange(mesh.n_elements + 1))
    for e in range(mesh.n_elements):
        sel = order[bounds[e] : bounds[e + 1]]
        center = mesh.element_center(e)
        loc = ElementLocation(element_id=e, natural=np.zeros(3))
        stencil, rows, _ = controlled_fit_rows(
            mesh,
            center,
            degree,
            scheme,
            eval_points=pts[sel],
            location=loc,
        )
        vec[stencil.node_ids] += weights[sel] @ rows
    mesh._cache[key] = vec
    return vec


def integrate_sphere(mesh: SurfaceMesh, values_or_field, degree: int = 2, scheme=None) -> float:
    """Surface integral of an analytic field or a nodal-value field."""
    if callable(values_or_field):
        pts, weights, _ = _sphere_quadrature(mesh)
        return float(weights @ values_or_field(pts))
    values = np.asarray(values_or_field, dtype=float)
    if values.shape != (mesh.n_nodes,):
        raise DimensionMismatchError("nodal values length does not match node count")
    return float(integration_vector(mesh, degree, scheme) @ values)


def conservation_error(
    mesh: SurfaceMesh, f_final: np.ndarray, exact_field, degree: int = 2, scheme=None
) -> float:
    """|integral(exact) - integral(final)| with both integrals by quadrature."""
    return abs(
        integrate_sphere(mesh, exact_field, degree, scheme)
        - integrate_sphere(mesh, f_final, degree, scheme)
    )


# ---------------------------------------------------------------------------
# Plan serialization
# ---------------------------------------------------------------------------

_PLAN_VERSION = 1


def save_plan(plan: RemapPlan, path) -> None:
    """Serialize a plan (meshes, operators, caches) to a .npz file."""
    d = plan.detector() if plan.config.eno else None
    arrays = {
        "version": np.array([_PLAN_VERSION]),
        "config": np.frombuffer(plan.config.to_json().encode(), dtype=np.uint8),
        "src_nodes": plan.source.nodes,
        "src_elem_nodes": plan.source.elem_nodes,
        "src_elem_offsets": plan.source.elem_offsets,
        "src_surface": np.frombuffer(plan.source.surface.encode(), dtype=np.uint8),
        "tgt_nodes": plan.target.nodes,
        "tgt_elem_nodes": plan.target.elem_nodes,
        "tgt_elem_offsets": plan.target.elem_offsets,
        "tgt_surface": np.frombuffer(plan.target.surface.encode(), dtype=np.uint8),
        "smooth_indptr": plan.smooth_op.indptr,
        "smooth_indices": plan.smooth_op.indices,
        "smooth_data": plan.smooth_op.data,
        "g0_indptr": plan.g0_op.indptr,
        "g0_indices": plan.g0_op.indices,
        "g0_data": plan.g0_op.data,
        "stencil_offsets": plan.stencil_offsets,
        "stencil_ids": plan.stencil_ids,
        "elem_of_target": plan.elem_of_target,
        "natural": plan.natural,
        "natural_len": plan.natural_len,
        "dropped_columns": plan.dropped_columns,
        "cond_estimates": plan.cond_estimates,
    }
    if d is not None:
        arrays.update(
            det_alpha_indptr=d.alpha_op.indptr,
            det_alpha_indices=d.alpha_op.indices,
            det_alpha_data=d.alpha_op.data,
            det_h_ell=d.h_ell,
            det_ring_offsets=d.ring_offsets,
            det_ring_ids=d.ring_ids,
            det_h_g=np.array([d.h_g]),
        )
    np.savez_compressed(path, **arrays)


def load_plan(path) -> RemapPlan:
    """Rebuild a plan saved by :func:`save_plan`."""
    with np.load(path) as z:
        if int(z["version"][0]) != _PLAN_VERSION:
            raise ConfigError(f"unsupported plan version {z['version'][0]}")
        config = RemapConfig.from_json(bytes(z["config"]).decode())
        source = SurfaceMesh(
            z["src_nodes"],
            (z["src_elem_nodes"], z["src_elem_offsets"]),
            surface=bytes(z["src_surface"]).decode(),
        )
        target = SurfaceMesh(
            z["tgt_nodes"],
            (z["tgt_elem_nodes"], z["tgt_elem_offsets"]),
            surface=bytes(z["tgt_surface"]).decode(),
        )
        n_t, n_s = target.n_nodes, source.n_nodes
        plan = RemapPlan(
            source=source,
            target=target,
            config=config,
            smooth_op=SparseOperator(
                (n_t, n_s), z["smooth_indptr"], z["smooth_indices"], z["smooth_data"]
            ),
            g0_op=SparseOperator((n_t, n_s), z["g0_indptr"], z["g0_indices"], z["g0_data"]),
            stencil_offsets=z["stencil_offsets"],
            stencil_ids=z["stencil_ids"],
            elem_of_target=z["elem_of_target"],
            natural=z["natural"],
            natural_len=z["natural_len"],
            dropped_columns=z["dropped_columns"],
            cond_estimates=z["cond_estimates"],
        )
        if "det_alpha_indptr" in z:
            source._cache["detector"] = det.DetectorCache(
                mesh=source,
                alpha_op=SparseOperator(
                    (source.n_elements, n_s),
                    z["det_alpha_indptr"],
                    z["det_alpha_indices"],
                    z["det_alpha_data"],
                ),
                h_ell=z["det_h_ell"],
                ring_offsets=z["det_ring_offsets"],
                ring_ids=z["det_ring_ids"],
                h_g=float(z["det_h_g"][0]),
            )
    return plan
