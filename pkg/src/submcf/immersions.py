"""Discrete immersed curves and surfaces and their extrinsic geometry.

Second fundamental forms are estimated pointwise by a local cubic least-squares
fit of the ambient coordinates over tangent-plane coordinates, followed by the
ambient connection:

    A(x_i, x_j) = normal part of ( x_ij + Gamma(x_i, x_j) ).

The estimate is coordinate-free, so any smooth local chart works; tangent-plane
coordinates are used because they need no geodesic solves.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import DegenerateNeighborhood, NotInvariant, UnsupportedSpace
from .spaces import AmbientSpace, Kind, complex_structure
from .submersions import SubmersionKind, SubmersionModel


class ImmersionKind(str, Enum):
    CURVE = "CURVE"
    SURFACE = "SURFACE"


class Topology:
    """Connectivity of a mesh plus cached neighbor stencils.

    ``wraps[f, c]`` counts how many times the period vector is added to the
    position of corner ``c`` of triangle ``f`` (periodic strips only).
    """

    def __init__(self, n_vertices, triangles=None, wraps=None):
        self.n = int(n_vertices)
        if triangles is None:
            self.triangles = None
            self.wraps = None
        else:
            self.triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
            self.wraps = (
                np.zeros_like(self.triangles) if wraps is None else np.asarray(wraps, dtype=np.int64).reshape(-1, 3)
            )
        self._stencil = None
        self._edges = None

    @property
    def is_curve(self):
        return self.triangles is None

    def edges(self):
        """Unique undirected edges ``(a, b, offset)`` with ``offset`` = wraps of ``b`` minus ``a``."""
        if self._edges is None:
            if self.is_curve:
                a = np.arange(self.n)
                self._edges = (a, (a + 1) % self.n, np.zeros(self.n, dtype=np.int64))
            else:
                T, W = self.triangles, self.wraps
                a = np.concatenate([T[:, 0], T[:, 1], T[:, 2]])
                b = np.concatenate([T[:, 1], T[:, 2], T[:, 0]])
                o = np.concatenate([W[:, 1] - W[:, 0], W[:, 2] - W[:, 1], W[:, 0] - W[:, 2]])
                swap = (a > b) | ((a == b) & (o < 0))
                a2 = np.where(swap, b, a)
                b2 = np.where(swap, a, b)
                o2 = np.where(swap, -o, o)
                key = np.unique(np.stack([a2, b2, o2], axis=1), axis=0)
                self._edges = (key[:, 0], key[:, 1], key[:, 2])
        return self._edges

    def directed_edge_counts(self):
        """Map undirected edge -> number of incident triangles (manifold check)."""
        T, W = self.triangles, self.wraps
        a = np.concatenate([T[:, 0], T[:, 1], T[:, 2]])
        b = np.concatenate([T[:, 1], T[:, 2], T[:, 0]])
        o = np.concatenate([W[:, 1] - W[:, 0], W[:, 2] - W[:, 1], W[:, 0] - W[:, 2]])
        swap = (a > b) | ((a == b) & (o < 0))
        key = np.stack([np.where(swap, b, a), np.where(swap, a, b), np.where(swap, -o, o)], axis=1)
        _, counts = np.unique(key, axis=0, return_counts=True)
        return counts

    def stencil(self):
        """Padded neighbor table ``(idx, off, mask)`` used by the forms estimator.

        Curves use the four nearest loop neighbors; surfaces use the 2-ring.
        """
        if self._stencil is not None:
            return self._stencil
        if self.is_curve:
            i = np.arange(self.n)
            idx = np.stack([(i - 2) % self.n, (i - 1) % self.n, (i + 1) % self.n, (i + 2) % self.n], axis=1)
            off = np.zeros_like(idx)
            mask = np.ones(idx.shape, dtype=bool)
            one = np.stack([(i - 1) % self.n, (i + 1) % self.n], axis=1)
            self._stencil = (idx, off, mask, one)
            return self._stencil
        a, b, o = self.edges()
        ring1 = [dict() for _ in range(self.n)]
        for ai, bi, oi in zip(a.tolist(), b.tolist(), o.tolist()):
            ring1[ai][(bi, oi)] = None
            ring1[bi][(ai, -oi)] = None
        ring1 = [list(r) for r in ring1]
        rings = []
        for v in range(self.n):
            seen = dict.fromkeys(ring1[v])
            for n1, o1 in ring1[v]:
                for n2, o2 in ring1[n1]:
                    key = (n2, o1 + o2)
                    if key != (v, 0) and key not in seen:
                        seen[key] = None
            rings.append(list(seen))
        K = max(len(r) for r in rings)
        K1 = max(len(r) for r in ring1)
        idx = np.zeros((self.n, K), dtype=np.int64)
        off = np.zeros((self.n, K), dtype=np.int64)
        mask = np.zeros((self.n, K), dtype=bool)
        one = np.zeros((self.n, K1), dtype=bool)
        for v, r in enumerate(rings):
            k = len(r)
            idx[v, :k] = [e[0] for e in r]
            off[v, :k] = [e[1] for e in r]
            mask[v, :k] = True
            one[v, : len(ring1[v])] = True
        # first len(ring1) entries of every row are the 1-ring
        self._stencil = (idx, off, mask, one)
        return self._stencil


@dataclass
class DiscreteImmersion:
    space: AmbientSpace
    kind: ImmersionKind
    vertices: np.ndarray
    topology: Topology
    period: np.ndarray | None = None
    fiber_groups: np.ndarray | None = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.kind = ImmersionKind(self.kind)
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.period is not None:
            self.period = np.asarray(self.period, dtype=float)
        if self.validate:
            self.check()

    # -- construction -------------------------------------------------------

    @classmethod
    def curve(cls, space, vertices, **kw):
        v = np.asarray(vertices, dtype=float)
        return cls(space, ImmersionKind.CURVE, v, Topology(len(v)), **kw)

    @classmethod
    def surface(cls, space, vertices, triangles, wraps=None, period=None, **kw):
        v = np.asarray(vertices, dtype=float)
        return cls(space, ImmersionKind.SURFACE, v, Topology(len(v), triangles, wraps), period=period, **kw)

    def with_vertices(self, vertices):
        """Same connectivity, new positions (no validation; used inside the flow)."""
        return DiscreteImmersion(
            self.space, self.kind, vertices, self.topology, self.period, self.fiber_groups, validate=False
        )

    def check(self, tol=1e-10):
        self.space.check_point(self.vertices, tol=tol)
        if self.kind is ImmersionKind.CURVE:
            if not self.topology.is_curve:
                raise ValueError("CURVE immersion must not carry triangles")
            if len(self.vertices) < 5:
                raise ValueError("closed curves need at least 5 vertices")
            d = np.linalg.norm(np.diff(self.vertices, axis=0, append=self.vertices[:1]), axis=1)
            if np.any(d == 0):
                raise ValueError("curve has repeated consecutive vertices")
        else:
            if self.topology.is_curve:
                raise ValueError("SURFACE immersion needs triangles")
            if np.any(self.topology.wraps != 0) and self.period is None:
                raise ValueError("wrapped triangles need a period vector")
            counts = self.topology.directed_edge_counts()
            if np.any(counts != 2):
                raise ValueError("surface mesh is not a closed 2-manifold (edge not shared by 2 triangles)")
            used = np.zeros(len(self.vertices), dtype=bool)
            used[self.topology.triangles.ravel()] = True
            if not used.all():
                raise ValueError("surface mesh has isolated vertices")
        return self

    # -- basic measurements ---------------------------------------------------

    @property
    def dim(self):
        return 1 if self.kind is ImmersionKind.CURVE else 2

    @property
    def n_vertices(self):
        return len(self.vertices)

    def edge_vectors(self):
        a, b, o = self.topology.edges()
        d = self.vertices[b] - self.vertices[a]
        if self.period is not None:
            d = d + o[:, None] * self.period
        return a, b, d

    def edge_lengths(self):
        """Edge lengths in the ambient metric at the edge midpoint (cached; vertices are not mutated)."""
        cached = self.__dict__.get("_edge_lengths")
        if cached is not None and cached[0] is self.vertices:
            return cached[1]
        a, _, d = self.edge_vectors()
        mid = self.vertices[a] + 0.5 * d
        L = self.space.norm(mid, d)
        self.__dict__["_edge_lengths"] = (self.vertices, L)
        return L

    @property
    def h(self):
        return float(self.edge_lengths().max())

    @property
    def h_min(self):
        return float(self.edge_lengths().min())

    def triangle_corners(self):
        """Unwrapped corner positions, shape ``(F, 3, N)``."""
        T = self.topology.triangles
        P = self.vertices[T]
        if self.period is not None:
            P = P + self.topology.wraps[..., None] * self.period
        return P

    def dense_sample(self, factor=10):
        """Points along edges/triangles at roughly ``factor`` times the vertex count."""
        if self.kind is ImmersionKind.CURVE:
            v = self.vertices
            w = np.roll(v, -1, axis=0)
            s = (np.arange(factor) / factor)[None, :, None]
            return (v[:, None, :] * (1 - s) + w[:, None, :] * s).reshape(-1, v.shape[1])
        P = self.triangle_corners()
        k = max(2, int(math.ceil(math.sqrt(2 * factor * self.n_vertices / max(len(P), 1)))))
        bary = [(i / k, j / k) for i in range(k + 1) for j in range(k + 1 - i)]
        B = np.array([(1 - a - b, a, b) for a, b in bary])
        return np.einsum("sc,fcn->fsn", B, P).reshape(-1, P.shape[2])


# ---------------------------------------------------------------------------
# fundamental forms


@dataclass
class FundamentalFormsSample:
    tangent_frames: np.ndarray  # (n, N, m), G-orthonormal columns
    normal_frames: np.ndarray  # (n, N, k)
    h: np.ndarray  # (n, k, m, m) shape components in the frames above
    H: np.ndarray  # (n, N) mean curvature vector
    A2: np.ndarray  # (n,)
    H2: np.ndarray  # (n,)

    @property
    def m(self):
        return self.tangent_frames.shape[2]

    @property
    def codim(self):
        return self.normal_frames.shape[2]

    def reconstruct_H(self):
        tr = np.trace(self.h, axis1=2, axis2=3)
        return np.einsum("nia,na->ni", self.normal_frames, tr)


def _monomials(u):
    if u.shape[-1] == 1:
        t = u[..., 0]
        return np.stack([t, t * t, t**3], axis=-1)
    a, b = u[..., 0], u[..., 1]
    return np.stack([a, b, a * a, a * b, b * b, a**3, a * a * b, a * b * b, b**3], axis=-1)


def _neighbor_offsets(imm):
    idx, off, mask, one = imm.topology.stencil()
    X = imm.vertices
    D = X[idx] - X[:, None, :]
    if imm.period is not None:
        D = D + off[..., None] * imm.period
    D = np.where(mask[..., None], D, 0.0)
    return D, mask, one


def _tangent_coordinates(imm, D, mask, one, P, L):
    """Local coordinates ``u = E^T G d`` with ``E`` a ``G``-orthonormal tangent basis guess."""
    LtD = D @ L  # rows L^T d: Euclidean image of the G-geometry
    Y = (D @ np.swapaxes(P, 1, 2)) @ L
    if imm.kind is ImmersionKind.CURVE:
        e = Y[:, 2] - Y[:, 1]
        nrm = np.linalg.norm(e, axis=1)
        if np.any(nrm == 0):
            raise DegenerateNeighborhood("curve stencil with coincident neighbors")
        V = (e / nrm[:, None])[:, :, None]
    else:
        K1 = one.shape[1]
        Y1 = np.where(one[..., None], Y[:, :K1], 0.0)
        w, vecs = np.linalg.eigh(np.swapaxes(Y1, 1, 2) @ Y1)
        if np.any(w[:, -2] <= 1e-24 * np.maximum(w[:, -1], 1e-300)):
            raise DegenerateNeighborhood("collinear 1-ring: tangent plane undetermined")
        V = vecs[:, :, :-3:-1]
    return np.where(mask[..., None], LtD @ V, 0.0)


def fundamental_forms(imm: DiscreteImmersion, frames: bool = True) -> FundamentalFormsSample:
    """Per-vertex frames, shape components, mean curvature vector and norms.

    With ``frames=False`` the normal frames and shape components are skipped
    (``normal_frames`` and ``h`` are ``None``); the flow only needs ``H``.
    """
    space = imm.space
    X = imm.vertices
    n, N = X.shape
    m = imm.dim
    D, mask, one = _neighbor_offsets(imm)
    G = space.metric(X)
    if G.ndim == 2:
        G = np.broadcast_to(G, (n, N, N))
    L = np.broadcast_to(np.eye(N), (n, N, N)) if space.kind is Kind.EUCLIDEAN else np.linalg.cholesky(G)
    P = space.tangent_projector(X)
    U = _tangent_coordinates(imm, D, mask, one, P, L)

    # rescale coordinates to unit size before fitting
    s = np.sqrt((U**2).sum(axis=(1, 2)) / mask.sum(axis=1))
    Phi = _monomials(U / s[:, None, None]) * mask[..., None]
    PhiT = np.swapaxes(Phi, 1, 2)
    M = PhiT @ Phi
    try:
        R = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise DegenerateNeighborhood("rank-deficient fitting stencil") from exc
    d = np.diagonal(R, axis1=1, axis2=2)
    if np.any(d.min(axis=1) <= 1e-6 * d.max(axis=1)):
        raise DegenerateNeighborhood("rank-deficient fitting stencil")
    C = np.linalg.solve(M, PhiT @ D)

    if m == 1:
        xi = (C[:, 0] / s[:, None])[:, :, None]  # (n, N, 1)
        xij = (2 * C[:, 1] / s[:, None] ** 2)[:, :, None, None]
    else:
        xi = np.stack([C[:, 0], C[:, 1]], axis=2) / s[:, None, None]
        s2 = (s**2)[:, None]
        x11, x12, x22 = 2 * C[:, 2] / s2, C[:, 3] / s2, 2 * C[:, 4] / s2
        xij = np.stack([np.stack([x11, x12], -1), np.stack([x12, x22], -1)], -1)  # (n, N, 2, 2)

    xi = P @ xi
    Gam = space.christoffel(X)
    acc = xij.reshape(n, N, m * m)
    if Gam is not None:
        # Gamma(x_a, x_b) for all pairs
        GX = (Gam.reshape(n, N * N, N) @ xi).reshape(n, N, N, m)
        acc = acc + (np.swapaxes(GX, 2, 3).reshape(n, N * m, N) @ xi).reshape(n, N, m, m).reshape(n, N, m * m)
    acc = P @ acc

    # orthonormal tangent frame from the first fundamental form
    GX = G @ xi
    g = np.swapaxes(xi, 1, 2) @ GX
    Lgi = np.linalg.inv(np.linalg.cholesky(g))
    LgiT = np.swapaxes(Lgi, 1, 2)
    E = xi @ LgiT
    GE = GX @ LgiT
    # Hessian in the orthonormal frame, then strip its tangential part
    accE = (Lgi[:, None] @ acc.reshape(n, N, m, m)) @ LgiT[:, None]
    flat = accE.reshape(n, N, m * m)
    Anorm = (flat - E @ (np.swapaxes(GE, 1, 2) @ flat)).reshape(n, N, m, m)
    Anorm = 0.5 * (Anorm + np.swapaxes(Anorm, 2, 3))

    Hvec = np.trace(Anorm, axis1=2, axis2=3)
    flat = Anorm.reshape(n, N, m * m)
    A2 = np.einsum("nik,nik->n", flat, G @ flat)
    H2 = np.einsum("ni,ni->n", Hvec, (G @ Hvec[:, :, None])[:, :, 0])

    if not frames:
        return FundamentalFormsSample(E, None, None, Hvec, A2, H2)
    Nf = _normal_frames(P, G, E, space.dim - m)
    h = (np.swapaxes(G @ Nf, 1, 2) @ flat).reshape(n, -1, m, m)
    return FundamentalFormsSample(E, Nf, h, Hvec, A2, H2)


def _normal_frames(P, G, E, k):
    """Deterministic Gram-Schmidt of projected coordinate axes against the tangent frame."""
    n, N, _ = P.shape
    out = np.zeros((n, N, k))
    count = np.zeros(n, dtype=np.int64)
    basis = [E[:, :, a] for a in range(E.shape[2])]
    accepted = []
    for j in range(N):
        v = P[:, :, j].copy()
        for b in basis:
            v = v - np.einsum("ni,nij,nj->n", b, G, v)[:, None] * b
        for b, ok in accepted:
            v = v - (ok * np.einsum("ni,nij,nj->n", b, G, v))[:, None] * b
        nv = np.sqrt(np.maximum(np.einsum("ni,nij,nj->n", v, G, v), 0.0))
        ok = (nv > 1e-6) & (count < k)
        vv = np.where(ok[:, None], v / np.where(nv > 0, nv, 1.0)[:, None], 0.0)
        rows = np.nonzero(ok)[0]
        out[rows, :, count[rows]] = vv[rows]
        count += ok
        accepted.append((vv, ok.astype(float)))
    if np.any(count < k):
        raise DegenerateNeighborhood("could not complete a normal frame")
    return out


# ---------------------------------------------------------------------------
# lifting and projection


def _curve_tangents(space, b):
    """Unit tangents (ambient metric) of a closed base polyline by central differences."""
    d = np.roll(b, -1, axis=0) - np.roll(b, 1, axis=0)
    d = space.project_tangent(b, d)
    return d / space.norm(b, d)[:, None]


def lift_immersion(sub: SubmersionModel, base_imm: DiscreteImmersion, fiber_res: int) -> DiscreteImmersion:
    """Fiber-invariant surface swept by the fibers over a closed base curve.

    Vertex ``i * fiber_res + j`` is the ``j``-th fiber sample over base vertex
    ``i``.  Each row of quads uses one diagonal for all ``j`` so the mesh is
    exactly symmetric under the discrete fiber rotation.
    """
    if base_imm.kind is not ImmersionKind.CURVE:
        raise ValueError("lift_immersion supports closed base curves")
    if fiber_res < 3:
        raise ValueError("fiber_res must be >= 3")
    if base_imm.space != sub.base:
        raise ValueError("base immersion does not live in the submersion's base space")
    b = base_imm.vertices
    nb, fr = len(b), int(fiber_res)
    tangent = None
    if sub.kind is SubmersionKind.SASAKI_PROJ:
        tangent = _curve_tangents(sub.base, b)
    x0 = sub.section(b, tangent=tangent)
    theta = np.arange(fr) * sub.fiber_parameter_period() / fr
    V = sub.act(x0[:, None, :], theta[None, :]).reshape(nb * fr, -1)

    period = None
    if not sub.fiber_closed:
        period = np.zeros(sub.total.embed_dim)
        period[-1] = sub.fiber_parameter_period()

    tris, wraps = grid_triangles(V, nb, fr, period is not None)
    groups = np.arange(nb * fr).reshape(nb, fr)
    return DiscreteImmersion.surface(
        sub.total, V, np.array(tris), np.array(wraps), period=period, fiber_groups=groups
    )


def grid_triangles(V, nb, fr, periodic):
    """Triangles and wraps of an ``nb x fr`` grid closed in both directions.

    One diagonal per row keeps the mesh symmetric under shifts in ``j``.
    """
    Vg = V.reshape(nb, fr, -1)
    tris, wraps = [], []
    for i in range(nb):
        i1 = (i + 1) % nb
        d1 = np.linalg.norm(Vg[i1, 1 % fr] - Vg[i, 0])
        d2 = np.linalg.norm(Vg[i1, 0] - Vg[i, 1 % fr])
        for j in range(fr):
            j1 = (j + 1) % fr
            w = 1 if (periodic and j1 == 0) else 0
            a, b, c, d = i * fr + j, i1 * fr + j, i1 * fr + j1, i * fr + j1
            if d1 <= d2:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
            wraps += [(0, 0, w), (0, w, w)]
    return np.array(tris), np.array(wraps)


def project_immersion(sub: SubmersionModel, total_imm: DiscreteImmersion, radius=None) -> DiscreteImmersion:
    """Collapse fiber-duplicates of a fiber-invariant surface to a base curve.

    Projected vertices closer than ``radius`` (default ``h/2``) are merged;
    every cluster must have the same size and the cluster graph must be a
    single loop, otherwise :class:`NotInvariant` is raised.
    """
    if total_imm.space != sub.total:
        raise ValueError("immersion does not live in the submersion's total space")
    if total_imm.kind is not ImmersionKind.SURFACE:
        raise NotInvariant("only fiber-swept surfaces can be projected to base curves")
    h = total_imm.h
    radius = 0.5 * h if radius is None else float(radius)
    B = sub.project_points(total_imm.vertices)
    pairs = cKDTree(B).query_pairs(radius, output_type="ndarray")
    n = len(B)
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    nc, labels = connected_components(adj, directed=False)
    sizes = np.bincount(labels, minlength=nc)
    if nc < 5 or np.any(sizes != sizes[0]):
        raise NotInvariant(f"inconsistent fiber clusters (sizes {sizes.min()}..{sizes.max()}, {nc} clusters)")
    centers = np.zeros((nc, B.shape[1]))
    np.add.at(centers, labels, B)
    centers /= sizes[:, None]
    spread = np.linalg.norm(B - centers[labels], axis=1).max()
    if spread > radius:
        raise NotInvariant(f"fiber cluster spread {spread:.3e} exceeds radius {radius:.3e}")
    # order clusters along the loop using mesh edges
    a, b, _ = total_imm.topology.edges()
    la, lb = labels[a], labels[b]
    cross = la != lb
    nbrs = [set() for _ in range(nc)]
    for p, q in zip(la[cross].tolist(), lb[cross].tolist()):
        nbrs[p].add(q)
        nbrs[q].add(p)
    if any(len(s) != 2 for s in nbrs):
        raise NotInvariant("projected clusters do not form a simple loop")
    first = labels[0]
    order = [first]
    prev, cur = first, min(nbrs[first], key=lambda c: np.nonzero(labels == c)[0].min())
    while cur != first:
        order.append(cur)
        nxt = [c for c in nbrs[cur] if c != prev]
        prev, cur = cur, nxt[0]
        if len(order) > nc:
            raise NotInvariant("projected clusters do not form a simple loop")
    if len(order) != nc:
        raise NotInvariant("projected clusters form several loops")
    pts = sub.base.retract(centers[order])
    return DiscreteImmersion.curve(sub.base, pts, validate=False).check(tol=1e-8)


def invariance_defect(sub: SubmersionModel, imm: DiscreteImmersion) -> float:
    """Max distance between each fiber row and the fiber orbit of its first vertex."""
    if imm.fiber_groups is None:
        return float("nan")
    groups = imm.fiber_groups
    fr = groups.shape[1]
    theta = np.arange(fr) * sub.fiber_parameter_period() / fr
    ref = imm.vertices[groups[:, 0]]
    expect = sub.act(ref[:, None, :], theta[None, :])
    return float(np.linalg.norm(imm.vertices[groups] - expect, axis=2).max())


# ---------------------------------------------------------------------------
# complex-structure tangency


def base_complex_structure(sub: SubmersionModel, b):
    """Matrices of ``J`` acting on base tangent vectors at points ``b``."""
    b = np.asarray(b, dtype=float)
    if sub.kind is SubmersionKind.HOPF:
        nhat = b / np.linalg.norm(b, axis=-1, keepdims=True)
        x, y, z = np.moveaxis(nhat, -1, 0)
        zero = np.zeros_like(x)
        return np.stack(
            [np.stack([zero, -z, y], -1), np.stack([z, zero, -x], -1), np.stack([-y, x, zero], -1)], axis=-2
        )
    if sub.kind is SubmersionKind.HEISENBERG_PROJ:
        n = int(sub.total.params["n"])
        return np.broadcast_to(complex_structure(n), b.shape[:-1] + (2 * n, 2 * n))
    raise UnsupportedSpace(f"{sub.kind.value} base carries no complex structure")


def tangency_defect_frames(J, G, tangent, normal):
    """``sum_a |(J xi_a)^T|^2`` given frames (columns ``G``-orthonormal)."""
    Jxi = np.einsum("...ij,...ja->...ia", J, normal)
    comp = np.einsum("...ib,...ij,...ja->...ab", tangent, G, Jxi)
    return (comp**2).sum(axis=(-1, -2))


def tangency_defect(imm: DiscreteImmersion, sub: SubmersionModel, forms: FundamentalFormsSample | None = None):
    """Per-vertex ``sum_a |(J xi_a)^T|^2`` of a base immersion (values in ``[0, codim]``)."""
    J = base_complex_structure(sub, imm.vertices)
    if imm.space != sub.base:
        raise UnsupportedSpace("immersion is not in the submersion's base space")
    forms = fundamental_forms(imm) if forms is None else forms
    G = imm.space.metric(imm.vertices)
    if G.ndim == 2:
        G = np.broadcast_to(G, (imm.n_vertices,) + G.shape)
    return tangency_defect_frames(J, G, forms.tangent_frames, forms.normal_frames)


# ---------------------------------------------------------------------------
# pinching


@dataclass(frozen=True)
class PinchingCondition:
    """``|A|^2 < a |H|^2 + b`` (or ``<=`` when ``strict`` is false)."""

    name: str
    a: float
    b: float
    strict: bool = True
    params: tuple = ()

    def to_dict(self):
        return {"name": self.name, "a": self.a, "b": self.b, "strict": self.strict, "params": dict(self.params)}

    # factories, named after the geometric situation they constrain

    @classmethod
    def hopf_hypersurface(cls, n, c=1.0):
        """S^1-invariant hypersurfaces of S^{2n+1}(c)."""
        _need(n >= 2, "n >= 2")
        return cls("hopf_hypersurface", 1.0 / (2 * n - 2), 4.0 * c, True, (("n", n), ("c", c)))

    @classmethod
    def hopf_hypersurface_variation(cls, n, lam=1.0):
        """Same, in the canonical-variation metric g_lambda."""
        _need(n >= 2 and lam > 0, "n >= 2, lam > 0")
        return cls("hopf_hypersurface_variation", 1.0 / (2 * n - 2), 2.0 + 2.0 * lam**-0.5, True, (("n", n), ("lam", lam)))

    @classmethod
    def s3_invariant_hypersurface(cls, n, c=1.0):
        """S^3-invariant hypersurfaces of S^{4n+3}(c)."""
        _need(n >= 1, "n >= 1")
        return cls("s3_invariant_hypersurface", 1.0 / (4 * n - 2), 8.0 * c, True, (("n", n), ("c", c)))

    @classmethod
    def s3_invariant_variation(cls, n, lam=1.0):
        _need(n >= 1 and lam > 0, "n >= 1, lam > 0")
        return cls("s3_invariant_variation", 1.0 / (4 * n - 2), 2.0 + 6.0 * lam**-0.5, True, (("n", n), ("lam", lam)))

    @classmethod
    def s3_invariant_nonexistence(cls, n, c=1.0):
        """The inequality no closed S^3-invariant hypersurface can satisfy."""
        _need(n >= 1, "n >= 1")
        return cls("s3_invariant_nonexistence", 1.0 / (4 * n), 4.0 * c, True, (("n", n), ("c", c)))

    @classmethod
    def high_codimension(cls, m, k, variant="total"):
        """Codimension-k S^1-invariant submanifolds of dimension m.

        ``variant="total"`` reads ``m`` as the dimension upstairs,
        ``variant="base"`` as the dimension of the projected submanifold
        (``m - 1``).
        """
        if variant not in ("total", "base"):
            raise ValueError("variant must be 'total' or 'base'")
        mm = m if variant == "total" else m - 1
        _need(mm > 2, "effective m > 2")
        return cls(
            f"high_codimension_{variant}",
            1.0 / (mm - 2),
            (mm - 4.0 - 4.0 * k) / (mm - 1),
            True,
            (("m", m), ("k", k), ("variant", variant)),
        )

    @classmethod
    def cp_hypersurface(cls, n):
        """CP^1-invariant hypersurfaces of CP^{2n+1}."""
        _need(n >= 1, "n >= 1")
        return cls("cp_hypersurface", 1.0 / (4 * n - 2), 6.0, True, (("n", n),))

    @classmethod
    def heisenberg_cylinder(cls, m):
        """Vertical cylinders of dimension m in the Heisenberg group (non-strict)."""
        _need(m >= 3, "m >= 3")
        a = 4.0 / (3.0 * (m - 1)) if m <= 5 else 1.0 / (m - 2)
        return cls("heisenberg_cylinder", a, 0.0, False, (("m", m),))

    @classmethod
    def sasaki_bundle(cls, n, k, c=1.0):
        """O(n+k)-invariant submanifolds of the tangent sphere bundle."""
        _need(n >= 2 and k >= 1, "n >= 2, k >= 1")
        return cls("sasaki_bundle", 1.0 / (n - 1), 2.0 * c + 0.5 * c * c * min(k, n), True, (("n", n), ("k", k), ("c", c)))


def _need(ok, what):
    if not ok:
        raise ValueError(f"pinching parameters out of range: need {what}")


def pinching_margin(forms, cond: PinchingCondition):
    """Per-vertex ``a|H|^2 + b - |A|^2`` and its minimum.

    ``forms`` is a :class:`FundamentalFormsSample` or a pair ``(A2, H2)``.
    """
    if isinstance(forms, FundamentalFormsSample):
        A2, H2 = forms.A2, forms.H2
    else:
        A2, H2 = (np.asarray(v, dtype=float) for v in forms)
    margin = cond.a * np.asarray(H2, dtype=float) + cond.b - np.asarray(A2, dtype=float)
    margin = np.atleast_1d(margin)
    return margin, float(margin.min())


def satisfies(margin_min, cond: PinchingCondition):
    return margin_min > 0 if cond.strict else margin_min >= 0


# ---------------------------------------------------------------------------
# I/O


def write_curve_csv(imm: DiscreteImmersion, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(imm.vertices.shape[1])])
        for row in imm.vertices:
            w.writerow([f"{v:.17g}" for v in row])


def read_curve_csv(path, space: AmbientSpace) -> DiscreteImmersion:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return DiscreteImmersion.curve(space, data)


def write_off(imm: DiscreteImmersion, path):
    """OFF text; periodic meshes add a ``# period`` line and per-face wrap counts."""
    T = imm.topology.triangles
    with open(path, "w") as fh:
        fh.write("OFF\n")
        if imm.period is not None:
            fh.write("# period " + " ".join(f"{v:.17g}" for v in imm.period) + "\n")
        fh.write(f"{imm.n_vertices} {len(T)} 0\n")
        for row in imm.vertices:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        for f, w in zip(T, imm.topology.wraps):
            extra = (" " + " ".join(str(int(x)) for x in w)) if imm.period is not None else ""
            fh.write(f"3 {f[0]} {f[1]} {f[2]}{extra}\n")


def read_off(path, space: AmbientSpace) -> DiscreteImmersion:
    period = None
    lines = []
    with open(path) as fh:
        for raw in fh:
            s = raw.strip()
            if s.startswith("# period"):
                period = np.array([float(v) for v in s.split()[2:]])
            elif s and not s.startswith("#"):
                lines.append(s)
    if lines[0] != "OFF":
        raise ValueError("not an OFF file")
    nv, nf = (int(v) for v in lines[1].split()[:2])
    V = np.array([[float(v) for v in ln.split()] for ln in lines[2 : 2 + nv]])
    F, W = [], []
    for ln in lines[2 + nv : 2 + nv + nf]:
        parts = [int(v) for v in ln.split()]
        if parts[0] != 3:
            raise ValueError("only triangle faces are supported")
        F.append(parts[1:4])
        W.append(parts[4:7] if len(parts) >= 7 else [0, 0, 0])
    return DiscreteImmersion.surface(space, V, np.array(F), np.array(W), period=period)


def write_forms_csv(forms: FundamentalFormsSample, path, conditions=()):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex", "A2", "H2"] + [f"margin_{c.name}" for c in conditions])
        margins = [pinching_margin(forms, c)[0] for c in conditions]
        for i in range(len(forms.A2)):
            w.writerow([i, f"{forms.A2[i]:.17g}", f"{forms.H2[i]:.17g}"] + [f"{m[i]:.17g}" for m in margins])
