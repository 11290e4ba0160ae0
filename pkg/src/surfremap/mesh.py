"""Discrete surface meshes: generation, connectivity, and point location.

A :class:`SurfaceMesh` stores mixed triangle/quad connectivity in flat
arrays plus an array-based half-edge structure, giving constant-time access
to element cycles, opposite half-edges, and node neighborhoods. Meshes are
immutable once built; all queries are read-only.

Neighborhoods are measured in k-rings with half-ring increments: the 1-ring
of a node is every node sharing an element with it, the (j+0.5)-ring adds
all nodes of elements owning a full edge inside the j-ring, and the
(j+1)-ring is the union of 1-rings of the j-ring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ElementNotFoundError, OpenMeshError

__all__ = [
    "SurfaceMesh",
    "ElementLocation",
    "MeshMetrics",
    "gen_icosphere",
    "gen_cubed_sphere",
    "gen_planar_grid",
    "k_ring",
    "locate_element",
    "element_interp_row",
    "mesh_metrics",
    "save_mesh",
    "load_mesh",
    "icosphere_for_level",
    "cubed_sphere_for_level",
]

_SPHERE_NORM_TOL = 1e-12


@dataclass(frozen=True)
class ElementLocation:
    """Containing element and natural coordinates of a located point.

    ``natural`` holds barycentric coordinates (3,) for triangles or bilinear
    reference coordinates (2,) in [0, 1]^2 for quadrilaterals.
    """

    element_id: int
    natural: np.ndarray


@dataclass(frozen=True)
class MeshMetrics:
    h_g: float
    n_nodes: int
    n_elements: int
    n_edges: int
    euler_characteristic: int


class SurfaceMesh:
    """Nodes plus mixed triangle/quad elements on a smooth surface.

    Parameters
    ----------
    nodes : (N, 3) array of vertex coordinates.
    elements : sequence of node-index tuples of length 3 or 4.
    surface : "sphere", "plane", or "general"; selects the analytic normal
        and the point-location projection rule.
    node_normals : optional (N, 3) unit normals; derived from ``surface``
        when omitted.
    """

    def __init__(self, nodes, elements, surface="general", node_normals=None):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 3:
            raise ValueError(f"nodes must be (N, 3), got {self.nodes.shape}")
        flat, offsets = _flatten_elements(elements)
        self.elem_nodes = flat
        self.elem_offsets = offsets
        self.surface = surface
        n = self.nodes.shape[0]
        if flat.size and (flat.min() < 0 or flat.max() >= n):
            raise ValueError("element refers to a node index out of range")
        if surface == "sphere":
            nrm = np.linalg.norm(self.nodes, axis=1)
            if np.any(np.abs(nrm - 1.0) > _SPHERE_NORM_TOL):
                raise ValueError("sphere mesh nodes must have unit norm within 1e-12")
        self._build_half_edges()
        self._build_adjacency()
        self.node_normals = (
            np.ascontiguousarray(node_normals, dtype=float)
            if node_normals is not None
            else self._default_normals()
        )
        self._cache: dict = {}

    # -- basic shape ---------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elem_offsets.size - 1

    def element(self, e: int) -> np.ndarray:
        return self.elem_nodes[self.elem_offsets[e] : self.elem_offsets[e + 1]]

    def arity(self, e: int) -> int:
        return int(self.elem_offsets[e + 1] - self.elem_offsets[e])

    @property
    def arities(self) -> np.ndarray:
        return np.diff(self.elem_offsets)

    @property
    def is_closed(self) -> bool:
        return bool(np.all(self.he_opposite >= 0))

    def element_center(self, e: int) -> np.ndarray:
        """Arithmetic node mean, projected back onto the surface."""
        c = self.nodes[self.element(e)].mean(axis=0)
        if self.surface == "sphere":
            c = c / np.linalg.norm(c)
        elif self.surface == "plane":
            c = np.array([c[0], c[1], 0.0])
        return c

    def normal_at(self, point, location: ElementLocation | None = None) -> np.ndarray:
        """Surface normal used for frames at an arbitrary point."""
        point = np.asarray(point, dtype=float)
        if self.surface == "sphere":
            return point / np.linalg.norm(point)
        if self.surface == "plane":
            return np.array([0.0, 0.0, 1.0])
        if location is None:
            location = locate_element(self, point)
        ids, w = element_interp_row(self, location)
        nrm = w @ self.node_normals[ids]
        return nrm / np.linalg.norm(nrm)

    # -- construction details -------------------------------------------

    def _build_half_edges(self):
        offsets = self.elem_offsets
        arity = np.diff(offsets)
        n_he = self.elem_nodes.size
        he_elem = np.repeat(np.arange(self.n_elements, dtype=np.int64), arity)
        local = np.arange(n_he, dtype=np.int64) - offsets[he_elem]
        nxt = np.where(local + 1 < arity[he_elem], np.arange(n_he) + 1, offsets[he_elem])
        origin = self.elem_nodes
        dest = origin[nxt]
        n = self.n_nodes
        key_fwd = origin.astype(np.int64) * n + dest
        if np.unique(key_fwd).size != n_he:
            raise ValueError("inconsistent element orientation: a directed edge repeats")
        key_rev = dest.astype(np.int64) * n + origin
        order = np.argsort(key_fwd)
        pos = np.searchsorted(key_fwd[order], key_rev)
        pos = np.clip(pos, 0, n_he - 1)
        cand = order[pos]
        opp = np.where(key_fwd[cand] == key_rev, cand, -1)
        self.he_origin = origin
        self.he_dest = dest
        self.he_next = nxt.astype(np.int64)
        self.he_opposite = opp.astype(np.int64)
        self.he_element = he_elem

    def _build_adjacency(self):
        n = self.n_nodes
        # node -> incident elements
        order = np.argsort(self.elem_nodes, kind="stable")
        self.node_elem_ids = self.he_element[order]
        counts = np.bincount(self.elem_nodes, minlength=n)
        self.node_elem_offsets = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        # node -> nodes sharing an element (includes quad diagonals)
        pairs = []
        for a in (3, 4):
            sel = np.flatnonzero(self.arities == a)
            if sel.size == 0:
                continue
            conn = self.elem_nodes[self.elem_offsets[sel][:, None] + np.arange(a)]
            for i in range(a):
                for j in range(a):
                    if i != j:
                        pairs.append(np.stack([conn[:, i], conn[:, j]], axis=1))
        if pairs:
            allp = np.unique(np.concatenate(pairs), axis=0)
        else:
            allp = np.zeros((0, 2), dtype=np.int64)
        self.node_nbr_ids = allp[:, 1].astype(np.int64)
        counts = np.bincount(allp[:, 0], minlength=n)
        self.node_nbr_offsets = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        # per-arity connectivity blocks for batched geometric tests
        self._arity_pos = np.zeros(self.n_elements, dtype=np.int64)
        self._conn_by_arity = {}
        for a in (3, 4):
            sel = np.flatnonzero(self.arities == a)
            self._arity_pos[sel] = np.arange(sel.size)
            if sel.size:
                self._conn_by_arity[a] = self.elem_nodes[
                    self.elem_offsets[sel][:, None] + np.arange(a)
                ]

    def _default_normals(self) -> np.ndarray:
        if self.surface == "sphere":
            return self.nodes.copy()
        if self.surface == "plane":
            out = np.zeros_like(self.nodes)
            out[:, 2] = 1.0
            return out
        acc = np.zeros_like(self.nodes)
        for e in range(self.n_elements):
            ids = self.element(e)
            x = self.nodes[ids]
            nrm = np.zeros(3)
            for i in range(1, len(ids) - 1):
                nrm += 0.5 * np.cross(x[i] - x[0], x[i + 1] - x[0])
            acc[ids] += nrm
        lens = np.linalg.norm(acc, axis=1)
        lens[lens == 0.0] = 1.0
        return acc / lens[:, None]

    # -- neighborhood queries ---------------------------------------------

    def incident_elements(self, v: int) -> np.ndarray:
        return self.node_elem_ids[self.node_elem_offsets[v] : self.node_elem_offsets[v + 1]]

    def neighbors(self, v: int) -> np.ndarray:
        return self.node_nbr_ids[self.node_nbr_offsets[v] : self.node_nbr_offsets[v + 1]]

    def ring_set(self, v: int, k: float) -> np.ndarray:
        """Unordered k-ring node set of ``v`` (center included); memoized."""
        key = ("ring", v, int(round(2 * k)))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        out = _ring_set(self, v, k)
        self._cache[key] = out
        return out

    def unique_edges(self) -> np.ndarray:
        """(E, 2) array of undirected edges, each once, low index first."""
        pairs = np.sort(np.stack([self.he_origin, self.he_dest], axis=1), axis=1)
        return np.unique(pairs, axis=0)

    def validate(self):
        """Check structural invariants; raises AssertionError on violation."""
        interior = np.flatnonzero(self.he_opposite >= 0)
        opp = self.he_opposite
        assert np.all(opp[opp[interior]] == interior), "opposite is not an involution"
        assert np.all(self.he_dest[opp[interior]] == self.he_origin[interior])
        # next-cycle of each face closes with length equal to its arity
        h = self.elem_offsets[:-1].copy()
        start = h.copy()
        for _ in range(3):
            h = self.he_next[h]
        tri = self.arities == 3
        assert np.all(h[tri] == start[tri]), "triangle half-edge cycle broken"
        if np.any(~tri):
            h4 = self.he_next[h[~tri]]
            assert np.all(h4 == start[~tri]), "quad half-edge cycle broken"
        if self.is_closed:
            v, e, f = self.n_nodes, len(self.unique_edges()), self.n_elements
            assert v - e + f == 2, f"Euler characteristic {v - e + f} != 2"


def _flatten_elements(elements):
    if isinstance(elements, tuple) and len(elements) == 2:
        flat, offsets = elements
        return (
            np.ascontiguousarray(flat, dtype=np.int64),
            np.ascontiguousarray(offsets, dtype=np.int64),
        )
    elements = list(elements)
    arity = np.array([len(e) for e in elements], dtype=np.int64)
    if elements and (arity.min() < 3 or arity.max() > 4):
        raise ValueError("elements must be triangles or quadrilaterals")
    offsets = np.concatenate(([0], np.cumsum(arity)))
    flat = np.fromiter(
        (v for e in elements for v in e), dtype=np.int64, count=int(offsets[-1])
    )
    return flat, offsets


# ---------------------------------------------------------------------------
# k-ring neighborhoods
# ---------------------------------------------------------------------------


def _take_csr(offsets, data, rows):
    """Concatenation of data[offsets[r]:offsets[r+1]] over rows."""
    starts = offsets[rows]
    counts = offsets[rows + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=data.dtype)
    shift = np.repeat(starts - np.concatenate(([0], np.cumsum(counts)[:-1])), counts)
    return data[np.arange(total) + shift]


def _incident_of(mesh: SurfaceMesh, nodes: np.ndarray) -> np.ndarray:
    return np.unique(_take_csr(mesh.node_elem_offsets, mesh.node_elem_ids, nodes))


def _expand_full(mesh: SurfaceMesh, nodes: np.ndarray) -> np.ndarray:
    elems = _incident_of(mesh, nodes)
    return np.unique(_take_csr(mesh.elem_offsets, mesh.elem_nodes, elems))


def _expand_half(mesh: SurfaceMesh, nodes: np.ndarray) -> np.ndarray:
    elems = _incident_of(mesh, nodes)
    grown = [nodes]
    arity = mesh.arities[elems]
    for a, conn_all in mesh._conn_by_arity.items():
        sel = elems[arity == a]
        if sel.size == 0:
            continue
        conn = conn_all[mesh._arity_pos[sel]]
        hit = np.isin(conn, nodes)
        own_edge = np.zeros(sel.size, dtype=bool)
        for i in range(a):
            own_edge |= hit[:, i] & hit[:, (i + 1) % a]
        grown.append(conn[own_edge].ravel())
    return np.unique(np.concatenate(grown))


def _ring_set(mesh: SurfaceMesh, v: int, k: float) -> np.ndarray:
    two_k = int(round(2 * k))
    if two_k < 2 or abs(2 * k - two_k) > 1e-12:
        raise ConfigError(f"ring size must be a half-integer >= 1, got {k}")
    if not 0 <= v < mesh.n_nodes:
        raise ValueError(f"node id {v} out of range")
    s = np.array([v], dtype=np.int64)
    for _ in range(two_k // 2):
        s = _expand_full(mesh, s)
    if two_k % 2 == 1:
        s = _expand_half(mesh, s)
    return s


def _hop_distances(mesh: SurfaceMesh, v: int, targets: np.ndarray) -> dict:
    remaining = set(targets.tolist())
    remaining.discard(int(v))
    dist = {int(v): 0}
    frontier = [int(v)]
    d = 0
    while frontier and remaining:
        d += 1
        nxt = []
        for u in frontier:
            for w in mesh.neighbors(u).tolist():
                if w not in dist:
                    dist[w] = d
                    nxt.append(w)
                    remaining.discard(w)
        frontier = nxt
    return dist


def k_ring(mesh: SurfaceMesh, node_id: int, k: float, include_self: bool = False) -> np.ndarray:
    """k-ring neighborhood of a node, k a half-integer >= 1.

    Returned node ids are ordered by increasing graph distance in the
    element-sharing graph, ties broken by node index; the center node is
    excluded unless ``include_self``.
    """
    members = mesh.ring_set(node_id, k)
    dist = _hop_distances(mesh, node_id, members)
    order = sorted(members.tolist(), key=lambda w: (dist.get(w, np.inf), w))
    if not include_self:
        order = [w for w in order if w != node_id]
    return np.array(order, dtype=np.int64)


# ---------------------------------------------------------------------------
# Point location
# ---------------------------------------------------------------------------


class _SphereIndex:
    """Longitude-latitude buckets over element footprints (with margins)."""

    def __init__(self, mesh: SurfaceMesh):
        nodes = mesh.nodes
        theta_n = np.arccos(np.clip(nodes[:, 2], -1.0, 1.0))
        phi_n = np.mod(np.arctan2(nodes[:, 1], nodes[:, 0]), 2 * math.pi)
        # element angular diameter estimate: twice max node-to-centroid angle
        diam = np.empty(mesh.n_elements)
        for e in range(mesh.n_elements):
            ids = mesh.element(e)
            c = nodes[ids].mean(axis=0)
            c /= np.linalg.norm(c)
            cosang = np.clip(nodes[ids] @ c, -1.0, 1.0)
            diam[e] = 2.0 * float(np.max(np.arccos(cosang)))
        bin_size = max(3.0 * float(np.max(diam)), 1e-3)
        self.ntheta = max(1, min(256, int(math.pi / bin_size)))
        self.nphi = max(1, min(512, int(2 * math.pi / bin_size)))
        buckets: list[list[int]] = [[] for _ in range(self.ntheta * self.nphi)]
        dth = math.pi / self.ntheta
        dph = 2 * math.pi / self.nphi
        for e in range(mesh.n_elements):
            ids = mesh.element(e)
            m = diam[e]
            t0 = float(theta_n[ids].min()) - m
            t1 = float(theta_n[ids].max()) + m
            it0 = max(0, int(t0 / dth))
            it1 = min(self.ntheta - 1, int(t1 / dth))
            if t0 <= 0.0 or t1 >= math.pi:
                full_phi = True
            else:
                ph = phi_n[ids]
                if ph.max() - ph.min() > math.pi:  # wraps the phi = 0 seam
                    ph = np.where(ph < math.pi, ph + 2 * math.pi, ph)
                full_phi = ph.max() - ph.min() > math.pi
                sin_edge = min(math.sin(t0), math.sin(t1))
                mp = m / max(sin_edge, 1e-9)
                full_phi = full_phi or mp >= math.pi
            if full_phi:
                jps = range(self.nphi)
            else:
                p0, p1 = float(ph.min()) - mp, float(ph.max()) + mp
                jp0, jp1 = int(math.floor(p0 / dph)), int(math.floor(p1 / dph))
                jps = [j % self.nphi for j in range(jp0, jp1 + 1)]
            for it in range(it0, it1 + 1):
                for jp in set(jps):
                    buckets[it * self.nphi + jp].append(e)
        counts = np.array([len(b) for b in buckets], dtype=np.int64)
        self.offsets = np.concatenate(([0], np.cumsum(counts)))
        self.ids = np.array(
            [e for b in buckets for e in sorted(b)], dtype=np.int64
        )
        self._dth, self._dph = dth, dph

    def candidates(self, point: np.ndarray) -> np.ndarray:
        theta = math.acos(max(-1.0, min(1.0, point[2])))
        phi = math.atan2(point[1], point[0]) % (2 * math.pi)
        it = min(self.ntheta - 1, int(theta / self._dth))
        jp = min(self.nphi - 1, int(phi / self._dph))
        b = it * self.nphi + jp
        return self.ids[self.offsets[b] : self.offsets[b + 1]]


class _PlaneIndex:
    """Uniform xy-grid buckets for planar meshes."""

    def __init__(self, mesh: SurfaceMesh):
        xy = mesh.nodes[:, :2]
        self.lo = xy.min(axis=0)
        hi = xy.max(axis=0)
        span = np.maximum(hi - self.lo, 1e-12)
        nb = max(1, int(math.sqrt(mesh.n_elements)))
        self.nx = self.ny = min(nb, 256)
        self.dx = span[0] / self.nx
        self.dy = span[1] / self.ny
        buckets: list[list[int]] = [[] for _ in range(self.nx * self.ny)]
        for e in range(mesh.n_elements):
            p = xy[mesh.element(e)]
            i0 = max(0, int((p[:, 0].min() - self.lo[0]) / self.dx) - 1)
            i1 = min(self.nx - 1, int((p[:, 0].max() - self.lo[0]) / self.dx) + 1)
            j0 = max(0, int((p[:, 1].min() - self.lo[1]) / self.dy) - 1)
            j1 = min(self.ny - 1, int((p[:, 1].max() - self.lo[1]) / self.dy) + 1)
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    buckets[i * self.ny + j].append(e)
        counts = np.array([len(b) for b in buckets], dtype=np.int64)
        self.offsets = np.concatenate(([0], np.cumsum(counts)))
        self.ids = np.array([e for b in buckets for e in sorted(b)], dtype=np.int64)

    def candidates(self, point: np.ndarray) -> np.ndarray:
        i = min(self.nx - 1, max(0, int((point[0] - self.lo[0]) / self.dx)))
        j = min(self.ny - 1, max(0, int((point[1] - self.lo[1]) / self.dy)))
        b = i * self.ny + j
        return self.ids[self.offsets[b] : self.offsets[b + 1]]


def _index_for(mesh: SurfaceMesh):
    idx = mesh._cache.get("spatial_index")
    if idx is None:
        idx = _PlaneIndex(mesh) if mesh.surface == "plane" else _SphereIndex(mesh)
        mesh._cache["spatial_index"] = idx
    return idx


def _frame_axes(direction: np.ndarray):
    seed = np.zeros(3)
    seed[int(np.argmin(np.abs(direction)))] = 1.0
    t1 = seed - (seed @ direction) * direction
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(direction, t1)


def _test_tris_sphere(mesh, elems, p_hat, tol):
    conn = mesh._conn_by_arity[3][mesh._arity_pos[elems]]
    A = mesh.nodes[conn].transpose(0, 2, 1)
    dets = np.linalg.det(A)
    good = np.abs(dets) > 1e-300
    lam = np.full((len(elems), 3), -1.0)
    if np.any(good):
        rhs = np.broadcast_to(p_hat[:, None], (int(good.sum()), 3, 1))
        lam[good] = np.linalg.solve(A[good], rhs)[..., 0]
    s = lam.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        bary = lam / s[:, None]
    ok = (s > 1e-12) & np.all(bary >= -tol, axis=1) & np.all(np.isfinite(bary), axis=1)
    return ok, bary


def _test_quads_newton(X, project_rows, rhs2, tol):
    """Batched bilinear inverse: find (xi, eta) with project_rows @ Q(xi, eta) = rhs2."""
    c = X.shape[0]
    xi = np.full(c, 0.5)
    eta = np.full(c, 0.5)
    t1, t2 = project_rows
    for _ in range(20):
        n0 = (1 - xi) * (1 - eta)
        n1 = xi * (1 - eta)
        n2 = xi * eta
        n3 = (1 - xi) * eta
        qp = (
            n0[:, None] * X[:, 0]
            + n1[:, None] * X[:, 1]
            + n2[:, None] * X[:, 2]
            + n3[:, None] * X[:, 3]
        )
        f1 = qp @ t1 - rhs2[0]
        f2 = qp @ t2 - rhs2[1]
        dxi_q = (1 - eta)[:, None] * (X[:, 1] - X[:, 0]) + eta[:, None] * (X[:, 2] - X[:, 3])
        det_q = (1 - xi)[:, None] * (X[:, 3] - X[:, 0]) + xi[:, None] * (X[:, 2] - X[:, 1])
        j11 = dxi_q @ t1
        j12 = det_q @ t1
        j21 = dxi_q @ t2
        j22 = det_q @ t2
        det = j11 * j22 - j12 * j21
        det = np.where(np.abs(det) < 1e-300, np.nan, det)
        step_xi = (f1 * j22 - f2 * j12) / det
        step_eta = (j11 * f2 - j21 * f1) / det
        xi = np.clip(xi - step_xi, -3.0, 4.0)
        eta = np.clip(eta - step_eta, -3.0, 4.0)
        with np.errstate(invalid="ignore"):
            if np.all(~np.isfinite(step_xi) | (np.maximum(np.abs(step_xi), np.abs(step_eta)) < 1e-13)):
                break
    n0 = (1 - xi) * (1 - eta)
    n1 = xi * (1 - eta)
    n2 = xi * eta
    n3 = (1 - xi) * eta
    qp = (
        n0[:, None] * X[:, 0]
        + n1[:, None] * X[:, 1]
        + n2[:, None] * X[:, 2]
        + n3[:, None] * X[:, 3]
    )
    ok = (
        np.isfinite(xi)
        & np.isfinite(eta)
        & (xi >= -tol)
        & (xi <= 1 + tol)
        & (eta >= -tol)
        & (eta <= 1 + tol)
    )
    return ok, xi, eta, qp


def _try_candidates(mesh, elems, point, tol):
    if len(elems) == 0:
        return None
    arity = mesh.arities[elems]
    best = None
    tri_ids = elems[arity == 3]
    if tri_ids.size:
        if mesh.surface == "plane":
            ok, bary = _test_tris_plane(mesh, tri_ids, point, tol)
        else:
            p_hat = point / np.linalg.norm(point)
            ok, bary = _test_tris_sphere(mesh, tri_ids, p_hat, tol)
        hits = np.flatnonzero(ok)
        if hits.size:
            i = hits[np.argmin(tri_ids[hits])]
            best = (int(tri_ids[i]), bary[i])
    quad_ids = elems[arity == 4]
    if quad_ids.size:
        conn = mesh._conn_by_arity[4][mesh._arity_pos[quad_ids]]
        X = mesh.nodes[conn]
        if mesh.surface == "plane":
            rows = (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
            rhs = (point[0], point[1])
            ok, xi, eta, qp = _test_quads_newton(X, rows, rhs, tol)
        else:
            p_hat = point / np.linalg.norm(point)
            t1, t2 = _frame_axes(p_hat)
            ok, xi, eta, qp = _test_quads_newton(X, (t1, t2), (0.0, 0.0), tol)
            ok &= qp @ p_hat > 0.0
        hits = np.flatnonzero(ok)
        if hits.size:
            i = hits[np.argmin(quad_ids[hits])]
            cand = (int(quad_ids[i]), np.array([xi[i], eta[i]]))
            if best is None or cand[0] < best[0]:
                best = cand
    if best is None:
        return None
    return ElementLocation(element_id=best[0], natural=best[1])


def _test_tris_plane(mesh, elems, point, tol):
    conn = mesh._conn_by_arity[3][mesh._arity_pos[elems]]
    X = mesh.nodes[conn][:, :, :2]
    A = np.stack([X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]], axis=2)
    dets = np.linalg.det(A)
    good = np.abs(dets) > 1e-300
    lam12 = np.full((len(elems), 2), -1.0)
    if np.any(good):
        rhs = point[:2] - X[good][:, 0]
        lam12[good] = np.linalg.solve(A[good], rhs[:, :, None])[..., 0]
    bary = np.column_stack([1.0 - lam12.sum(axis=1), lam12])
    ok = np.all(bary >= -tol, axis=1) & np.all(np.isfinite(bary), axis=1)
    return ok, bary


def locate_element(mesh: SurfaceMesh, point) -> ElementLocation:
    """Containing element under radial (sphere) or orthogonal (plane) projection.

    For points on shared edges the lowest-index containing element wins.
    Raises ElementNotFoundError when no element contains the point (possible
    only for open planar meshes).
    """
    point = np.asarray(point, dtype=float)
    index = _index_for(mesh)
    cands = index.candidates(point)
    for tol in (1e-12, 1e-9):
        loc = _try_candidates(mesh, cands, point, tol)
        if loc is not None:
            return loc
    # bucket miss: exhaustive fallback with a widening tolerance
    all_elems = np.arange(mesh.n_elements, dtype=np.int64)
    for tol in (1e-9, 1e-6):
        loc = _try_candidates(mesh, all_elems, point, tol)
        if loc is not None:
            return loc
    raise ElementNotFoundError(f"no element contains point {point}")


def element_interp_row(mesh: SurfaceMesh, loc: ElementLocation):
    """Linear/bilinear interpolation weights: (node_ids, weights)."""
    ids = mesh.element(loc.element_id)
    if len(ids) == 3:
        return ids, np.asarray(loc.natural, dtype=float)
    xi, eta = loc.natural
    w = np.array(
        [(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta]
    )
    return ids, w


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

_ICO_T = (1.0 + math.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array(
    [
        (-1, _ICO_T, 0), (1, _ICO_T, 0), (-1, -_ICO_T, 0), (1, -_ICO_T, 0),
        (0, -1, _ICO_T), (0, 1, _ICO_T), (0, -1, -_ICO_T), (0, 1, -_ICO_T),
        (_ICO_T, 0, -1), (_ICO_T, 0, 1), (-_ICO_T, 0, -1), (-_ICO_T, 0, 1),
    ],
    dtype=float,
)
_ICO_FACES = np.array(
    [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ],
    dtype=np.int64,
)


def gen_icosphere(level: int) -> SurfaceMesh:
    """Icosahedron subdivided ``level`` times with radial projection.

    Yields 10*4^level + 2 nodes and 20*4^level triangles on the unit sphere.
    """
    if level < 0:
        raise ConfigError("subdivision level must be >= 0")
    verts = _ICO_VERTS / np.linalg.norm(_ICO_VERTS, axis=1, keepdims=True)
    faces = _ICO_FACES.copy()
    for _ in range(level):
        nf = faces.shape[0]
        edges = np.sort(
            np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1
        )
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        mids = verts[uniq[:, 0]] + verts[uniq[:, 1]]
        mids /= np.linalg.norm(mids, axis=1, keepdims=True)
        base = verts.shape[0]
        m01 = base + inv[:nf]
        m12 = base + inv[nf : 2 * nf]
        m20 = base + inv[2 * nf :]
        verts = np.concatenate([verts, mids])
        faces = np.concatenate(
            [
                np.stack([faces[:, 0], m01, m20], axis=1),
                np.stack([faces[:, 1], m12, m01], axis=1),
                np.stack([faces[:, 2], m20, m12], axis=1),
                np.stack([m01, m12, m20], axis=1),
            ]
        )
    flat = faces.reshape(-1)
    offsets = np.arange(0, flat.size + 1, 3, dtype=np.int64)
    return SurfaceMesh(verts, (flat, offsets), surface="sphere")


_CUBE_FACES = (
    # (outward axis, u axis, v axis) with u x v = outward
    (np.array([1.0, 0, 0]), np.array([0.0, 1, 0]), np.array([0.0, 0, 1])),
    (np.array([-1.0, 0, 0]), np.array([0.0, 0, 1]), np.array([0.0, 1, 0])),
    (np.array([0.0, 1, 0]), np.array([0.0, 0, 1]), np.array([1.0, 0, 0])),
    (np.array([0.0, -1, 0]), np.array([1.0, 0, 0]), np.array([0.0, 0, 1])),
    (np.array([0.0, 0, 1]), np.array([1.0, 0, 0]), np.array([0.0, 1, 0])),
    (np.array([0.0, 0, -1]), np.array([0.0, 1, 0]), np.array([1.0, 0, 0])),
)


def gen_cubed_sphere(n: int) -> SurfaceMesh:
    """Cubed-sphere quad mesh with n cells per cube-face edge.

    Face grids are equidistant in the gnomonic (central projection) angle,
    so grid lines are great circles. Yields 6n^2 + 2 nodes and 6n^2 quads.
    """
    if n < 1:
        raise ConfigError("cells per face edge must be >= 1")
    angles = -math.pi / 4 + np.arange(n + 1) * (math.pi / 2) / n
    tans = np.tan(angles)
    key_to_id: dict = {}
    points: list[np.ndarray] = []
    quads: list[tuple[int, int, int, int]] = []

    def node_id(p: np.ndarray) -> int:
        key = (round(p[0], 9), round(p[1], 9), round(p[2], 9))
        hit = key_to_id.get(key)
        if hit is None:
            hit = len(points)
            key_to_id[key] = hit
            points.append(p)
        return hit

    for d, a, b in _CUBE_FACES:
        grid = np.empty((n + 1, n + 1), dtype=np.int64)
        for i in range(n + 1):
            for j in range(n + 1):
                p = d + tans[i] * a + tans[j] * b
                grid[i, j] = node_id(p / np.linalg.norm(p))
        for i in range(n):
            for j in range(n):
                quads.append(
                    (grid[i, j], grid[i + 1, j], grid[i + 1, j + 1], grid[i, j + 1])
                )
    nodes = np.array(points)
    nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
    return SurfaceMesh(nodes, quads, surface="sphere")


def gen_planar_grid(nx: int, ny: int, element_kind: str = "quad") -> SurfaceMesh:
    """Regular grid on [0, 1]^2 in the z = 0 plane, quads or triangles."""
    if nx < 1 or ny < 1:
        raise ConfigError("grid must have at least one cell per direction")
    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])

    def nid(i, j):
        return i * (ny + 1) + j

    elems = []
    for i in range(nx):
        for j in range(ny):
            q = (nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1))
            if element_kind == "quad":
                elems.append(q)
            elif element_kind == "tri":
                elems.append((q[0], q[1], q[2]))
                elems.append((q[0], q[2], q[3]))
            else:
                raise ConfigError(f"element_kind must be 'quad' or 'tri', got {element_kind!r}")
    return SurfaceMesh(nodes, elems, surface="plane")


# ---------------------------------------------------------------------------
# Metrics and experiment mesh ladder
# ---------------------------------------------------------------------------


def mesh_metrics(mesh: SurfaceMesh) -> MeshMetrics:
    """Global average edge chord length and size counts."""
    edges = mesh.unique_edges()
    if edges.shape[0] == 0:
        raise OpenMeshError("mesh has no edges")
    lengths = np.linalg.norm(mesh.nodes[edges[:, 0]] - mesh.nodes[edges[:, 1]], axis=1)
    return MeshMetrics(
        h_g=float(lengths.mean()),
        n_nodes=mesh.n_nodes,
        n_elements=mesh.n_elements,
        n_edges=edges.shape[0],
        euler_characteristic=mesh.n_nodes - edges.shape[0] + mesh.n_elements,
    )


def global_edge_length(mesh: SurfaceMesh) -> float:
    h = mesh._cache.get("h_g")
    if h is None:
        h = mesh_metrics(mesh).h_g
        mesh._cache["h_g"] = h
    return h


# Experiment refinement ladder: element counts quadruple per level. Level 1
# is the 1016-node cubed sphere (n = 13) and the 2562-node icosphere.
_ICO_BASE_DEPTH = 3
_CUBED_BASE_N = 13


def icosphere_for_level(level: int) -> SurfaceMesh:
    if level < 1:
        raise ConfigError("experiment level must be >= 1")
    return gen_icosphere(_ICO_BASE_DEPTH + level)


def cubed_sphere_for_level(level: int) -> SurfaceMesh:
    if level < 1:
        raise ConfigError("experiment level must be >= 1")
    return gen_cubed_sphere(_CUBED_BASE_N * 2 ** (level - 1))


# ---------------------------------------------------------------------------
# Mesh file I/O (versioned text format, exact double round-trip)
# ---------------------------------------------------------------------------

_FORMAT_TAG = "surfmesh"
_FORMAT_VERSION = 1


def save_mesh(mesh: SurfaceMesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{_FORMAT_TAG} {_FORMAT_VERSION}\n")
        fh.write(f"surface {mesh.surface}\n")
        fh.write(f"counts {mesh.n_nodes} {mesh.n_elements}\n")
        for p in mesh.nodes:
            fh.write(f"n {p[0].hex()} {p[1].hex()} {p[2].hex()}\n")
        for e in range(mesh.n_elements):
            ids = mesh.element(e)
            fh.write("e " + " ".join(str(int(i)) for i in ids) + "\n")


def load_mesh(path) -> SurfaceMesh:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != _FORMAT_TAG:
            raise ValueError(f"not a {_FORMAT_TAG} file: {path}")
        if int(header[1]) != _FORMAT_VERSION:
            raise ValueError(f"unsupported {_FORMAT_TAG} version {header[1]}")
        surface = fh.readline().split()[1]
        _, n_nodes, n_elems = fh.readline().split()
        nodes = np.empty((int(n_nodes), 3))
        for i in range(int(n_nodes)):
            parts = fh.readline().split()
            nodes[i] = [float.fromhex(parts[1]), float.fromhex(parts[2]), float.fromhex(parts[3])]
        elems = []
        for _ in range(int(n_elems)):
            parts = fh.readline().split()
            elems.append(tuple(int(v) for v in parts[1:]))
    return SurfaceMesh(nodes, elems, surface=surface)
