"""Catalog of ambient model geometries.

Every space is realized as a constraint submanifold ``M = {x : phi(x) = 0}`` of
Cartesian space ``R^N`` carrying a (generally non-Euclidean) metric tensor
``G(x)`` defined on a neighbourhood of ``M``.  The Levi-Civita connection of
``M`` is the ``G``-orthogonal tangential projection of the ambient connection
``D_X Y + Gamma(X, Y)``, which lets a single code path serve every catalog
entry: round and Berger spheres, the Hopf quotient sphere, the Heisenberg
group in global coordinates and the Sasaki tangent sphere bundle of ``S^2``.

Curvature sign convention: ``R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z
- nabla_[X,Y] Z`` and ``riemann_at(X, Y, Z, W) = g(R(X, Y)W, Z)``, so that
``riemann_at(X, Y, X, Y)`` is the (positive) sectional curvature of round
spheres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

import numpy as np

from .errors import ConstraintViolation, IntegrationError, StencilError, UnsupportedSpace

CONSTRAINT_TOL = 1e-10
FD_STEP = 1e-4


class Kind(str, Enum):
    EUCLIDEAN = "EUCLIDEAN"
    ROUND_SPHERE = "ROUND_SPHERE"
    BERGER_SPHERE = "BERGER_SPHERE"
    FS_SPHERE = "FS_SPHERE"
    HEISENBERG = "HEISENBERG"
    SASAKI_BUNDLE = "SASAKI_BUNDLE"


@dataclass(frozen=True)
class TangentVector:
    """A tangent vector in the Cartesian model: base point and components."""

    base: np.ndarray
    comp: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float))
        object.__setattr__(self, "comp", np.asarray(self.comp, dtype=float))


def _comp(v):
    return v.comp if isinstance(v, TangentVector) else np.asarray(v, dtype=float)


# ---------------------------------------------------------------------------
# models


class _Model:
    """Flat, unconstrained ``R^N``.  Subclasses override what they need."""

    flat = True

    def __init__(self, n):
        self.N = n
        self.hess = np.zeros((0, n, n))

    def constraint(self, x):
        return np.zeros(x.shape[:-1] + (0,))

    def constraint_grad(self, x):
        return np.zeros(x.shape[:-1] + (0, self.N))

    def retract(self, x):
        return np.array(x, dtype=float)

    def metric(self, x):
        return np.broadcast_to(np.eye(self.N), x.shape[:-1] + (self.N, self.N))

    def metric_deriv(self, x):
        """``dG[..., l, i, j] = d G_ij / d x_l``."""
        return np.zeros(x.shape[:-1] + (self.N,) * 3)


class _SphereModel(_Model):
    def __init__(self, n, radius):
        super().__init__(n)
        self.radius = radius
        self.hess = 2.0 * np.eye(n)[None]

    def constraint(self, x):
        return (np.einsum("...i,...i->...", x, x) - self.radius**2)[..., None]

    def constraint_grad(self, x):
        return 2.0 * np.asarray(x)[..., None, :]

    def retract(self, x):
        x = np.asarray(x, dtype=float)
        return self.radius * x / np.linalg.norm(x, axis=-1, keepdims=True)


def complex_structure(n):
    """Multiplication by ``i`` on ``C^n = R^{2n}`` with (Re z1, Im z1, ...) ordering."""
    J = np.zeros((2 * n, 2 * n))
    for k in range(n):
        J[2 * k + 1, 2 * k] = 1.0
        J[2 * k, 2 * k + 1] = -1.0
    return J


class _BergerModel(_SphereModel):
    """S^3(c) with the Hopf vertical direction rescaled by ``lam``.

    ``G(x) = I + (lam - 1) c (Jx)(Jx)^T`` agrees with the canonical variation
    on the sphere (where ``sqrt(c) Jx`` is the unit vertical) and keeps the
    position vector ``G``-orthogonal to the sphere.
    """

    flat = False

    def __init__(self, c, lam):
        super().__init__(4, 1.0 / math.sqrt(c))
        self.c, self.lam = c, lam
        self.J = complex_structure(2)

    def metric(self, x):
        s = np.einsum("ij,...j->...i", self.J, x)
        return np.eye(4) + (self.lam - 1.0) * self.c * s[..., :, None] * s[..., None, :]

    def metric_deriv(self, x):
        s = np.einsum("ij,...j->...i", self.J, x)
        Jl = self.J.T  # Jl[l] = J e_l
        t = Jl[:, :, None] * s[..., None, None, :]
        return (self.lam - 1.0) * self.c * (t + np.swapaxes(t, -1, -2))


class _HeisenbergModel(_Model):
    """Global coordinates (x_1..x_n, y_1..y_n, z) with orthonormal X_j, Y_j, V.

    The dual coframe gives ``G = sum dx^2 + sum dy^2 + theta^2`` with
    ``theta = dz + 1/2 sum (y_j dx_j - x_j dy_j)``.
    """

    flat = False

    def __init__(self, n):
        super().__init__(2 * n + 1)
        self.n = n
        D = np.eye(self.N)
        D[-1, -1] = 0.0
        self.D = D
        dw = np.zeros((self.N, self.N))  # dw[l] = d theta / d x_l
        for j in range(n):
            dw[j, n + j] = -0.5  # d/dx_j of the dy_j coefficient
            dw[n + j, j] = 0.5  # d/dy_j of the dx_j coefficient
        self.dw = dw

    def coframe(self, x):
        n = self.n
        w = np.zeros(x.shape[:-1] + (self.N,))
        w[..., :n] = 0.5 * x[..., n : 2 * n]
        w[..., n : 2 * n] = -0.5 * x[..., :n]
        w[..., -1] = 1.0
        return w

    def metric(self, x):
        w = self.coframe(x)
        return self.D + w[..., :, None] * w[..., None, :]

    def metric_deriv(self, x):
        w = self.coframe(x)
        t = self.dw[:, :, None] * w[..., None, None, :]
        return t + np.swapaxes(t, -1, -2)


class _SasakiModel(_Model):
    """Tangent sphere bundle ``T^r S^2(c)`` inside ``R^6 = {(p, u)}``.

    The metric is ``|dp|^2 + |K(dp, du)|^2`` with connection map
    ``K = du + c <dp, u> p``; on the bundle this is exactly the Sasaki metric
    (horizontal lifts ``(X, -c<X,u>p)`` and tangent lifts
    ``(0, X - <X,u>u/r^2)``).
    """

    flat = False

    def __init__(self, r, c):
        super().__init__(6)
        self.r, self.c = r, c
        h = np.zeros((3, 6, 6))
        h[0, :3, :3] = 2 * np.eye(3)
        h[1, :3, 3:] = np.eye(3)
        h[1, 3:, :3] = np.eye(3)
        h[2, 3:, 3:] = 2 * np.eye(3)
        self.hess = h

    def constraint(self, x):
        p, u = x[..., :3], x[..., 3:]
        return np.stack(
            [
                np.einsum("...i,...i->...", p, p) - 1.0 / self.c,
                np.einsum("...i,...i->...", p, u),
                np.einsum("...i,...i->...", u, u) - self.r**2,
            ],
            axis=-1,
        )

    def constraint_grad(self, x):
        p, u = x[..., :3], x[..., 3:]
        g = np.zeros(x.shape[:-1] + (3, 6))
        g[..., 0, :3] = 2 * p
        g[..., 1, :3] = u
        g[..., 1, 3:] = p
        g[..., 2, 3:] = 2 * u
        return g

    def retract(self, x):
        x = np.array(x, dtype=float)
        p = x[..., :3] / (np.linalg.norm(x[..., :3], axis=-1, keepdims=True) * math.sqrt(self.c))
        u = x[..., 3:]
        u = u - self.c * np.einsum("...i,...i->...", u, p)[..., None] * p
        u = self.r * u / np.linalg.norm(u, axis=-1, keepdims=True)
        return np.concatenate([p, u], axis=-1)

    def _kmap(self, x):
        p, u = x[..., :3], x[..., 3:]
        M = np.zeros(x.shape[:-1] + (3, 6))
        M[..., :, :3] = self.c * p[..., :, None] * u[..., None, :]
        M[..., :, 3:] = np.eye(3)
        return M

    def metric(self, x):
        M = self._kmap(x)
        G = np.einsum("...ai,...aj->...ij", M, M)
        G[..., :3, :3] += np.eye(3)
        return G

    def metric_deriv(self, x):
        p, u = x[..., :3], x[..., 3:]
        M = self._kmap(x)
        dM = np.zeros(x.shape[:-1] + (6, 3, 6))
        eye = np.eye(3)
        # d/dp_a of c p u^T = c e_a u^T ; d/du_b of c p u^T = c p e_b^T
        dM[..., :3, :, :3] = self.c * eye[:, :, None] * u[..., None, None, :]
        dM[..., 3:, :, :3] = self.c * p[..., None, :, None] * eye[:, None, :]
        t = np.einsum("...lai,...aj->...lij", dM, M)
        return t + np.swapaxes(t, -1, -2)


# ---------------------------------------------------------------------------
# descriptors


_REQUIRED = {
    Kind.EUCLIDEAN: (),
    Kind.ROUND_SPHERE: ("c",),
    Kind.BERGER_SPHERE: ("c", "lam"),
    Kind.FS_SPHERE: ("c",),
    Kind.HEISENBERG: ("n",),
    Kind.SASAKI_BUNDLE: ("r", "c"),
}


@dataclass(frozen=True)
class AmbientSpace:
    """One catalog geometry: kind, intrinsic dimension and named parameters."""

    kind: Kind
    dim: int
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        params = {k: float(v) for k, v in dict(self.params).items()}
        object.__setattr__(self, "params", params)
        for name in _REQUIRED[kind]:
            if name not in params:
                raise ValueError(f"{kind.value} requires parameter {name!r}")
        for name in ("c", "lam", "r"):
            if name in params and not params[name] > 0:
                raise ValueError(f"parameter {name} must be positive, got {params[name]}")
        dim = int(self.dim)
        expected = {
            Kind.BERGER_SPHERE: 3,
            Kind.FS_SPHERE: 2,
            Kind.SASAKI_BUNDLE: 3,
        }.get(kind)
        if kind is Kind.HEISENBERG:
            params["n"] = float(int(params["n"]))
            expected = 2 * int(params["n"]) + 1
        if expected is not None and dim != expected:
            raise ValueError(f"{kind.value} has dimension {expected}, got {dim}")
        if dim < 1:
            raise ValueError("dimension must be positive")
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "_model", self._build_model())

    # -- constructors -------------------------------------------------------

    @classmethod
    def euclidean(cls, n):
        return cls(Kind.EUCLIDEAN, n)

    @classmethod
    def round_sphere(cls, n, c=1.0):
        return cls(Kind.ROUND_SPHERE, n, {"c": c})

    @classmethod
    def berger_sphere(cls, c=1.0, lam=1.0):
        return cls(Kind.BERGER_SPHERE, 3, {"c": c, "lam": lam})

    @classmethod
    def fs_sphere(cls, c=1.0):
        return cls(Kind.FS_SPHERE, 2, {"c": c})

    @classmethod
    def heisenberg(cls, n=1):
        return cls(Kind.HEISENBERG, 2 * n + 1, {"n": n})

    @classmethod
    def sasaki_bundle(cls, r=1.0, c=1.0):
        return cls(Kind.SASAKI_BUNDLE, 3, {"r": r, "c": c})

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        params = dict(self.params)
        if self.kind is Kind.HEISENBERG:
            params["n"] = int(params["n"])
        return {"kind": self.kind.value, "dim": self.dim, "params": params}

    @classmethod
    def from_dict(cls, d):
        return cls(Kind(d["kind"]), int(d["dim"]), dict(d.get("params", {})))

    # -- model --------------------------------------------------------------

    def _build_model(self):
        p = self.params
        if self.kind is Kind.EUCLIDEAN:
            return _Model(self.dim)
        if self.kind is Kind.ROUND_SPHERE:
            return _SphereModel(self.dim + 1, 1.0 / math.sqrt(p["c"]))
        if self.kind is Kind.FS_SPHERE:
            return _SphereModel(3, 0.5 / math.sqrt(p["c"]))
        if self.kind is Kind.BERGER_SPHERE:
            return _BergerModel(p["c"], p["lam"])
        if self.kind is Kind.HEISENBERG:
            return _HeisenbergModel(int(p["n"]))
        return _SasakiModel(p["r"], p["c"])

    @property
    def model(self):
        return self._model

    @property
    def embed_dim(self):
        return self._model.N

    @property
    def flat_metric(self):
        return self._model.flat

    # -- pointwise geometry (vectorized over leading axes) --------------------

    def constraint(self, x):
        return self._model.constraint(np.asarray(x, dtype=float))

    def retract(self, x):
        return self._model.retract(x)

    def check_point(self, x, tol=CONSTRAINT_TOL):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.embed_dim:
            raise ConstraintViolation(
                f"{self.kind.value} points have {self.embed_dim} coordinates, got {x.shape[-1]}"
            )
        res = np.abs(self.constraint(x))
        if res.size and res.max() > tol:
            raise ConstraintViolation(
                f"point off {self.kind.value} constraint manifold (residual {res.max():.3e})"
            )
        return x

    def metric(self, x):
        return self._model.metric(np.asarray(x, dtype=float))

    def inner(self, x, v, w):
        G = self.metric(x)
        return np.einsum("...i,...ij,...j->...", v, G, w)

    def norm(self, x, v):
        return np.sqrt(np.maximum(self.inner(x, v, v), 0.0))

    def christoffel(self, x):
        """``Gamma[..., k, i, j]`` of the ambient metric ``G``; ``None`` when flat."""
        if self._model.flat:
            return None
        x = np.asarray(x, dtype=float)
        G = self._model.metric(x)
        dG = self._model.metric_deriv(x)
        # T[..., i, j, l] = d_i G_jl + d_j G_il - d_l G_ij
        T = dG + np.swapaxes(dG, -3, -2) - np.moveaxis(dG, -3, -1)
        return 0.5 * np.einsum("...kl,...ijl->...kij", np.linalg.inv(G), T)

    def gamma_apply(self, x, X, Y, Gam=None):
        """``Gamma(X, Y)`` as a vector; zero for flat metrics."""
        if Gam is None:
            Gam = self.christoffel(x)
        if Gam is None:
            return np.zeros(np.broadcast_shapes(np.shape(X), np.shape(Y)))
        return np.einsum("...kij,...i,...j->...k", Gam, X, Y)

    def tangent_projector(self, x):
        """``G``-orthogonal projector onto the tangent space of the constraint manifold."""
        x = np.asarray(x, dtype=float)
        N = self.embed_dim
        grad = self._model.constraint_grad(x)
        eye = np.broadcast_to(np.eye(N), x.shape[:-1] + (N, N))
        if grad.shape[-2] == 0:
            return eye.copy()
        Nm = np.swapaxes(grad, -1, -2)
        if self._model.flat:
            GiN = Nm
        else:
            GiN = np.linalg.solve(self.metric(x), Nm)
        S = np.einsum("...ia,...ib->...ab", Nm, GiN)
        return eye - np.einsum("...ia,...ab,...jb->...ij", GiN, np.linalg.inv(S), Nm)

    def project_tangent(self, x, v):
        return np.einsum("...ij,...j->...i", self.tangent_projector(x), v)

    def normal_form(self, x, X, Y):
        """Second fundamental form of the constraint manifold inside ``(R^N, G)``."""
        x = np.asarray(x, dtype=float)
        grad = self._model.constraint_grad(x)
        if grad.shape[-2] == 0:
            return np.zeros_like(np.asarray(X, dtype=float))
        Nm = np.swapaxes(grad, -1, -2)
        GiN = Nm if self._model.flat else np.linalg.solve(self.metric(x), Nm)
        S = np.einsum("...ia,...ib->...ab", Nm, GiN)
        rhs = -np.einsum("aij,...i,...j->...a", self._model.hess, X, Y)
        gam = self.gamma_apply(x, X, Y)
        rhs = rhs + np.einsum("...ia,...i->...a", Nm, gam)
        beta = np.linalg.solve(S, rhs[..., None])[..., 0]
        return np.einsum("...ia,...a->...i", GiN, beta)

    def tangent_basis(self, x):
        """A ``G``-orthonormal basis of the tangent space at a single point (columns)."""
        x = np.asarray(x, dtype=float)
        P = self.tangent_projector(x)
        G = self.metric(x)
        basis = []
        for e in P.T:
            v = e.copy()
            for b in basis:
                v = v - (b @ G @ v) * b
            nv = math.sqrt(max(v @ G @ v, 0.0))
            if nv > 1e-8:
                basis.append(v / nv)
            if len(basis) == self.dim:
                break
        return np.array(basis).T


# ---------------------------------------------------------------------------
# operations


def metric_at(space: AmbientSpace, p, v, w) -> float:
    """``g_p(v, w)``.  Raises :class:`ConstraintViolation` if ``p`` is off the model."""
    p = space.check_point(p)
    return float(space.inner(p, _comp(v), _comp(w)))


def covariant_derivative(space: AmbientSpace, field, direction: TangentVector, step=FD_STEP):
    """Levi-Civita derivative ``nabla_direction field`` at ``direction.base``.

    ``field`` is either a callable ``R^N -> R^N`` (any smooth extension of a
    tangent field to a neighbourhood) or a tuple ``(points, values)`` of an
    odd number of samples along a path, equispaced in the path parameter,
    whose middle sample sits at the base point and whose path velocity at
    that sample is ``direction``.
    """
    p = np.asarray(direction.base, dtype=float)
    X = np.asarray(direction.comp, dtype=float)
    if callable(field):
        speed = float(np.linalg.norm(X))
        if speed == 0.0:
            return TangentVector(p, np.zeros_like(p))
        Xh = X / speed
        dY = (np.asarray(field(p + step * Xh)) - np.asarray(field(p - step * Xh))) / (2 * step) * speed
        Y = np.asarray(field(p), dtype=float)
    else:
        points, values = (np.asarray(a, dtype=float) for a in field)
        m = len(values)
        if m < 3 or m % 2 == 0:
            raise StencilError("path stencil needs an odd number (>= 3) of samples")
        mid = m // 2
        if not np.allclose(points[mid], p, atol=1e-12):
            raise StencilError("middle stencil sample must sit at the base point")
        # parameter spacing recovered from the supplied velocity
        chord = points[mid + 1] - points[mid - 1]
        ds = float(np.linalg.norm(chord) / (2 * max(np.linalg.norm(X), 1e-300)))
        if ds == 0.0:
            raise StencilError("degenerate path stencil")
        if m >= 5:
            dY = (values[mid - 2] - 8 * values[mid - 1] + 8 * values[mid + 1] - values[mid + 2]) / (12 * ds)
        else:
            dY = (values[mid + 1] - values[mid - 1]) / (2 * ds)
        Y = values[mid]
    out = dY + space.gamma_apply(p, X, Y)
    return TangentVector(p, space.project_tangent(p, out))


def _ambient_riemann(space, x, step=FD_STEP):
    """``R^l_{ijk}`` of ``(R^N, G)`` at a single point: ``R(d_i, d_j) d_k = R^l_{ijk} d_l``."""
    N = space.embed_dim
    Gam = space.christoffel(x)
    dGam = np.empty((N, N, N, N))  # dGam[m, k, i, j] = d_m Gamma^k_ij
    for m in range(N):
        e = np.zeros(N)
        e[m] = step
        dGam[m] = (space.christoffel(x + e) - space.christoffel(x - e)) / (2 * step)
    R = (
        np.einsum("iljk->lijk", dGam)  # d_i Gamma^l_jk
        - np.einsum("jlik->lijk", dGam)
        + np.einsum("lim,mjk->lijk", Gam, Gam)
        - np.einsum("ljm,mik->lijk", Gam, Gam)
    )
    return R


def curvature_operator(space: AmbientSpace, p, X, Y, Z):
    """``R(X, Y)Z`` at ``p`` (convention in the module docstring)."""
    p = space.check_point(p)
    X, Y, Z = (_comp(a) for a in (X, Y, Z))
    kind = space.kind
    if kind is Kind.EUCLIDEAN:
        return np.zeros_like(p)
    if kind in (Kind.ROUND_SPHERE, Kind.FS_SPHERE):
        k = space.params["c"] * (4.0 if kind is Kind.FS_SPHERE else 1.0)
        return k * (np.dot(Y, Z) * X - np.dot(X, Z) * Y)
    # ambient curvature of (R^N, G) plus the Gauss equation for the constraints
    E = space.tangent_basis(p)
    G = space.metric(p)
    if space.flat_metric:
        amb = np.zeros_like(p)
    else:
        R = _ambient_riemann(space, p)
        amb = np.einsum("lijk,i,j,k->l", R, X, Y, Z)
    out = np.zeros_like(p)
    for a in range(E.shape[1]):
        W = E[:, a]
        val = amb @ G @ W
        val += space.inner(p, space.normal_form(p, Y, Z), space.normal_form(p, X, W))
        val -= space.inner(p, space.normal_form(p, X, Z), space.normal_form(p, Y, W))
        out += val * W
    return out


def riemann_at(space: AmbientSpace, p, X, Y, Z, W) -> float:
    """``R(X, Y, Z, W) = g(R(X, Y)W, Z)``; ``R(X, Y, X, Y) > 0`` on round spheres."""
    p = space.check_point(p)
    return float(space.inner(p, curvature_operator(space, p, X, Y, W), _comp(Z)))


def sectional_curvature(space: AmbientSpace, p, X, Y) -> float:
    X, Y = _comp(X), _comp(Y)
    area = space.inner(p, X, X) * space.inner(p, Y, Y) - space.inner(p, X, Y) ** 2
    return riemann_at(space, p, X, Y, X, Y) / area


def geodesic_acceleration(space: AmbientSpace, x, v):
    """``x'' `` of the geodesic through ``x`` with velocity ``v``."""
    return space.normal_form(x, v, v) - space.gamma_apply(x, v, v)


def geodesic_shoot(space: AmbientSpace, p, v, t: float, ds: float = 2e-3, max_steps: int = 2_000_000):
    """``exp_p(t v)`` by classical RK4 with projection back onto the model."""
    p = space.check_point(p, tol=1e-8)
    v = _comp(v)
    speed = float(space.norm(p, v))
    if not speed > 0:
        raise IntegrationError("geodesic_shoot needs a nonzero initial velocity")
    if space.kind is Kind.EUCLIDEAN:
        return p + t * v
    n = max(1, int(math.ceil(abs(t) * speed / ds)))
    if n > max_steps:
        raise IntegrationError(f"step size underflow: {n} steps requested")
    h = t / n
    x, w = p.copy(), v.copy()

    def f(x, w):
        return w, geodesic_acceleration(space, x, w)

    for _ in range(n):
        k1x, k1v = f(x, w)
        k2x, k2v = f(x + 0.5 * h * k1x, w + 0.5 * h * k1v)
        k3x, k3v = f(x + 0.5 * h * k2x, w + 0.5 * h * k2v)
        k4x, k4v = f(x + h * k3x, w + h * k3v)
        x = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        w = w + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        x = space.retract(x)
        w = space.project_tangent(x, w)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
            raise IntegrationError("non-finite state during geodesic integration")
    return x


# ---------------------------------------------------------------------------
# frame fields and connection-table audits


def heisenberg_frame(space: AmbientSpace) -> dict[str, Callable]:
    """Left-invariant frame ``X_j, Y_j, V`` as vector fields on ``R^{2n+1}``."""
    if space.kind is not Kind.HEISENBERG:
        raise UnsupportedSpace("Heisenberg frame requested on " + space.kind.value)
    n = int(space.params["n"])
    N = 2 * n + 1
    fields = {}

    def make_x(j):
        def X(q):
            q = np.asarray(q, dtype=float)
            out = np.zeros(q.shape)
            out[..., j] = 1.0
            out[..., -1] = -0.5 * q[..., n + j]
            return out

        return X

    def make_y(j):
        def Y(q):
            q = np.asarray(q, dtype=float)
            out = np.zeros(q.shape)
            out[..., n + j] = 1.0
            out[..., -1] = 0.5 * q[..., j]
            return out

        return Y

    def V(q):
        q = np.asarray(q, dtype=float)
        out = np.zeros(q.shape)
        out[..., N - 1] = 1.0
        return out

    for j in range(n):
        fields[f"X{j + 1}"] = make_x(j)
        fields[f"Y{j + 1}"] = make_y(j)
    fields["V"] = V
    return fields


def heisenberg_table(n: int) -> dict[tuple[str, str], dict[str, float]]:
    """Expected ``nabla_A B`` for every frame pair, as frame coefficients."""
    table = {}
    names = [f"X{j}" for j in range(1, n + 1)] + [f"Y{j}" for j in range(1, n + 1)] + ["V"]
    for a in names:
        for b in names:
            table[(a, b)] = {}
    for j in range(1, n + 1):
        X, Y = f"X{j}", f"Y{j}"
        table[(X, Y)] = {"V": 0.5}
        table[(Y, X)] = {"V": -0.5}
        table[(X, "V")] = {Y: -0.5}
        table[("V", X)] = {Y: -0.5}
        table[(Y, "V")] = {X: 0.5}
        table[("V", Y)] = {X: 0.5}
    return table


def sphere_field(c: float, a) -> Callable:
    """Tangent field on S^2(c) obtained by projecting the constant vector ``a``."""
    a = np.asarray(a, dtype=float)

    def X(p):
        p = np.asarray(p, dtype=float)
        return a - c * np.einsum("...i,i->...", p, a)[..., None] * p

    return X


def sasaki_horizontal_lift(space: AmbientSpace, X: Callable) -> Callable:
    c = space.params["c"]

    def XH(q):
        q = np.asarray(q, dtype=float)
        p, u = q[..., :3], q[..., 3:]
        Xp = X(p)
        return np.concatenate([Xp, -c * np.einsum("...i,...i->...", Xp, u)[..., None] * p], axis=-1)

    return XH


def sasaki_tangent_lift(space: AmbientSpace, X: Callable) -> Callable:
    r2 = space.params["r"] ** 2

    def XT(q):
        q = np.asarray(q, dtype=float)
        p, u = q[..., :3], q[..., 3:]
        Xp = X(p)
        vert = Xp - np.einsum("...i,...i->...", Xp, u)[..., None] * u / r2
        return np.concatenate([np.zeros_like(Xp), vert], axis=-1)

    return XT


def _sphere_curvature(c, X, Y, Z):
    return c * (np.dot(Y, Z) * X - np.dot(X, Z) * Y)


@dataclass
class ConnectionReport:
    kind: str
    residuals: dict[str, float]
    n_samples: int
    tol: float = 1e-6

    @property
    def residual(self) -> float:
        return max(self.residuals.values())

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol

    def to_dict(self):
        return {
            "kind": self.kind,
            "residuals": self.residuals,
            "residual": self.residual,
            "n_samples": self.n_samples,
            "pass": self.passed,
        }


def _random_sasaki_point(space, rng):
    c, r = space.params["c"], space.params["r"]
    p = rng.normal(size=3)
    p /= np.linalg.norm(p) * math.sqrt(c)
    u = rng.normal(size=3)
    u -= c * (u @ p) * p
    u *= r / np.linalg.norm(u)
    return np.concatenate([p, u])


def validate_connection_tables(space: AmbientSpace, n_samples: int = 100, seed: int = 0) -> ConnectionReport:
    """Check the Heisenberg connection table or the Sasaki connection identities."""
    rng = np.random.default_rng(seed)
    if space.kind is Kind.HEISENBERG:
        frame = heisenberg_frame(space)
        n = int(space.params["n"])
        table = heisenberg_table(n)
        worst = {"table": 0.0, "torsion": 0.0, "J": 0.0}
        for _ in range(n_samples):
            q = rng.uniform(-3, 3, size=space.embed_dim)
            vals = {k: f(q) for k, f in frame.items()}
            for (a, b), expect in table.items():
                got = covariant_derivative(space, frame[b], TangentVector(q, vals[a])).comp
                want = sum((coef * vals[name] for name, coef in expect.items()), np.zeros_like(q))
                worst["table"] = max(worst["table"], float(space.norm(q, got - want)))
            # nabla_Z V = nabla_V Z = -1/2 J Z for constant-coefficient horizontal Z
            coef = rng.normal(size=2 * n)
            Z = lambda y, coef=coef: sum(
                coef[j] * frame[f"X{j + 1}"](y) + coef[n + j] * frame[f"Y{j + 1}"](y) for j in range(n)
            )
            JZ = sum(coef[j] * vals[f"Y{j + 1}"] - coef[n + j] * vals[f"X{j + 1}"] for j in range(n))
            zv = covariant_derivative(space, frame["V"], TangentVector(q, Z(q))).comp
            vz = covariant_derivative(space, Z, TangentVector(q, vals["V"])).comp
            worst["J"] = max(worst["J"], float(space.norm(q, zv + 0.5 * JZ)), float(space.norm(q, vz + 0.5 * JZ)))
            # torsion: nabla_X Y - nabla_Y X = [X, Y] = V
            xy = covariant_derivative(space, frame["Y1"], TangentVector(q, vals["X1"])).comp
            yx = covariant_derivative(space, frame["X1"], TangentVector(q, vals["Y1"])).comp
            worst["torsion"] = max(worst["torsion"], float(space.norm(q, xy - yx - vals["V"])))
        return ConnectionReport(space.kind.value, worst, n_samples)

    if space.kind is Kind.SASAKI_BUNDLE:
        c, r = space.params["c"], space.params["r"]
        base = AmbientSpace.round_sphere(2, c)
        worst = {"item1": 0.0, "item2": 0.0, "item3": 0.0, "item4": 0.0}
        for _ in range(n_samples):
            q = _random_sasaki_point(space, rng)
            p, u = q[:3], q[3:]
            X = sphere_field(c, rng.normal(size=3))
            Y = sphere_field(c, rng.normal(size=3))
            XH, YH = sasaki_horizontal_lift(space, X), sasaki_horizontal_lift(space, Y)
            XT, YT = sasaki_tangent_lift(space, X), sasaki_tangent_lift(space, Y)
            Xp, Yp = X(p), Y(p)
            nXY = covariant_derivative(base, Y, TangentVector(p, Xp)).comp
            nXY_f = lambda y, v=nXY: v  # value only matters at p
            lhs1 = covariant_derivative(space, YH, TangentVector(q, XH(q))).comp
            rhs1 = sasaki_horizontal_lift(space, nXY_f)(q) - 0.5 * sasaki_tangent_lift(
                space, lambda y: _sphere_curvature(c, Xp, Yp, u)
            )(q)
            lhs2 = covariant_derivative(space, YT, TangentVector(q, XH(q))).comp
            rhs2 = sasaki_tangent_lift(space, nXY_f)(q) + 0.5 * sasaki_horizontal_lift(
                space, lambda y: _sphere_curvature(c, u, Yp, Xp)
            )(q)
            lhs3 = covariant_derivative(space, YH, TangentVector(q, XT(q))).comp
            rhs3 = 0.5 * sasaki_horizontal_lift(space, lambda y: _sphere_curvature(c, u, Xp, Yp))(q)
            lhs4 = covariant_derivative(space, YT, TangentVector(q, XT(q))).comp
            rhs4 = -(u @ Yp) / r**2 * XT(q)
            for key, lhs, rhs in (("item1", lhs1, rhs1), ("item2", lhs2, rhs2), ("item3", lhs3, rhs3), ("item4", lhs4, rhs4)):
                worst[key] = max(worst[key], float(space.norm(q, lhs - rhs)))
        return ConnectionReport(space.kind.value, worst, n_samples)

    raise UnsupportedSpace(f"no connection table for {space.kind.value}")
