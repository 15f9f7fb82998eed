"""Desk-scale Riemannian submersions with minimal fibers.

Three concrete projections are modelled, all with one-dimensional fibers:

* ``HOPF``: ``S^3(c) -> S^2`` of radius ``1/(2 sqrt c)`` (curvature ``4c``),
  optionally with the Berger (canonical variation) metric upstairs;
* ``HEISENBERG_PROJ``: ``(x, y, z) -> x + i y`` from the Heisenberg group to
  ``C^n``;
* ``SASAKI_PROJ``: ``(p, u) -> p`` from the tangent sphere bundle of radius
  ``r`` to ``S^2(c)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConstraintViolation
from .spaces import AmbientSpace, Kind, TangentVector, _comp, complex_structure, covariant_derivative

#: fundamental interval length used for the non-compact Heisenberg fibers
HEISENBERG_PERIOD = 1.0


class SubmersionKind(str, Enum):
    HOPF = "HOPF"
    HEISENBERG_PROJ = "HEISENBERG_PROJ"
    SASAKI_PROJ = "SASAKI_PROJ"


@dataclass(frozen=True)
class SplitVector:
    horizontal: TangentVector
    vertical: TangentVector


@dataclass(frozen=True)
class SubmersionModel:
    kind: SubmersionKind
    total: AmbientSpace
    base: AmbientSpace
    fiber_dim: int = 1

    def __post_init__(self):
        kind = SubmersionKind(self.kind)
        object.__setattr__(self, "kind", kind)
        t, b = self.total.kind, self.base.kind
        ok = {
            SubmersionKind.HOPF: t in (Kind.ROUND_SPHERE, Kind.BERGER_SPHERE) and b is Kind.FS_SPHERE,
            SubmersionKind.HEISENBERG_PROJ: t is Kind.HEISENBERG and b is Kind.EUCLIDEAN,
            SubmersionKind.SASAKI_PROJ: t is Kind.SASAKI_BUNDLE and b is Kind.ROUND_SPHERE,
        }[kind]
        if not ok:
            raise ValueError(f"{kind.value} cannot map {t.value} onto {b.value}")
        if kind is SubmersionKind.HOPF:
            if self.total.dim != 3 or self.total.params["c"] != self.base.params["c"]:
                raise ValueError("HOPF needs S^3(c) over the FS sphere of the same c")
        if kind is SubmersionKind.HEISENBERG_PROJ and self.base.dim != 2 * int(self.total.params["n"]):
            raise ValueError("Heisenberg base must be C^n = R^{2n}")
        if kind is SubmersionKind.SASAKI_PROJ and (
            self.base.dim != 2 or self.base.params["c"] != self.total.params["c"]
        ):
            raise ValueError("Sasaki base must be S^2(c) with the bundle's c")
        if self.total.dim - self.base.dim != self.fiber_dim:
            raise ValueError("fiber dimension mismatch")

    # -- constructors -------------------------------------------------------

    @classmethod
    def hopf(cls, c=1.0, lam=1.0):
        total = AmbientSpace.round_sphere(3, c) if lam == 1.0 else AmbientSpace.berger_sphere(c, lam)
        return cls(SubmersionKind.HOPF, total, AmbientSpace.fs_sphere(c))

    @classmethod
    def heisenberg_proj(cls, n=1):
        return cls(SubmersionKind.HEISENBERG_PROJ, AmbientSpace.heisenberg(n), AmbientSpace.euclidean(2 * n))

    @classmethod
    def sasaki_proj(cls, r=1.0, c=1.0):
        return cls(SubmersionKind.SASAKI_PROJ, AmbientSpace.sasaki_bundle(r, c), AmbientSpace.round_sphere(2, c))

    def to_dict(self):
        return {"kind": self.kind.value, "total": self.total.to_dict(), "base": self.base.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(SubmersionKind(d["kind"]), AmbientSpace.from_dict(d["total"]), AmbientSpace.from_dict(d["base"]))

    # -- parameters ---------------------------------------------------------

    @property
    def c(self):
        return self.total.params.get("c", 1.0)

    @property
    def lam(self):
        return self.total.params.get("lam", 1.0)

    @property
    def fiber_closed(self):
        return self.kind is not SubmersionKind.HEISENBERG_PROJ

    @property
    def fiber_length(self):
        """Length of a fiber (of the fundamental interval for Heisenberg)."""
        if self.kind is SubmersionKind.HOPF:
            return 2 * math.pi * math.sqrt(self.lam / self.c)
        if self.kind is SubmersionKind.SASAKI_PROJ:
            return 2 * math.pi * self.total.params["r"]
        return HEISENBERG_PERIOD

    # -- vectorized primitives ----------------------------------------------

    def project_points(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind is SubmersionKind.HOPF:
            x0, x1, x2, x3 = np.moveaxis(x, -1, 0)
            s = 0.5 * math.sqrt(self.c)
            return s * np.stack(
                [2 * (x0 * x2 + x1 * x3), 2 * (x1 * x2 - x0 * x3), x0**2 + x1**2 - x2**2 - x3**2], axis=-1
            )
        if self.kind is SubmersionKind.HEISENBERG_PROJ:
            return x[..., :-1].copy()
        return x[..., :3].copy()

    def differential(self, x):
        """Jacobian of the projection, shape ``(..., base_N, total_N)``."""
        x = np.asarray(x, dtype=float)
        if self.kind is SubmersionKind.HOPF:
            x0, x1, x2, x3 = np.moveaxis(x, -1, 0)
            s = math.sqrt(self.c)
            return s * np.stack(
                [
                    np.stack([x2, x3, x0, x1], axis=-1),
                    np.stack([-x3, x2, x1, -x0], axis=-1),
                    np.stack([x0, x1, -x2, -x3], axis=-1),
                ],
                axis=-2,
            )
        nb = self.base.embed_dim
        D = np.zeros(x.shape[:-1] + (nb, self.total.embed_dim))
        D[..., np.arange(nb), np.arange(nb)] = 1.0
        return D

    def push(self, x, v):
        return np.einsum("...ij,...j->...i", self.differential(x), v)

    def unit_vertical(self, x):
        """Unit (in the total metric) vertical vector field, defined on all of ``R^N``."""
        x = np.asarray(x, dtype=float)
        if self.kind is SubmersionKind.HOPF:
            J = complex_structure(2)
            return math.sqrt(self.c / self.lam) * np.einsum("ij,...j->...i", J, x)
        if self.kind is SubmersionKind.HEISENBERG_PROJ:
            out = np.zeros(x.shape)
            out[..., -1] = 1.0
            return out
        r, c = self.total.params["r"], self.c
        p, u = x[..., :3], x[..., 3:]
        return np.concatenate([np.zeros_like(p), math.sqrt(c) * np.cross(p, u) / r], axis=-1)

    def act(self, x, theta):
        """Structure-group motion of ``x`` along its fiber by parameter ``theta``."""
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if self.kind is SubmersionKind.HOPF:
            J = complex_structure(2)
            return np.cos(theta)[..., None] * x + np.sin(theta)[..., None] * np.einsum("ij,...j->...i", J, x)
        if self.kind is SubmersionKind.HEISENBERG_PROJ:
            out = np.array(np.broadcast_to(x, np.broadcast_shapes(x.shape, theta.shape + (x.shape[-1],))))
            out[..., -1] = out[..., -1] + theta
            return out
        c = self.c
        p, u = x[..., :3], x[..., 3:]
        w = math.sqrt(c) * np.cross(p, u)
        u_new = np.cos(theta)[..., None] * u + np.sin(theta)[..., None] * w
        return np.concatenate([np.broadcast_to(p, u_new.shape), u_new], axis=-1)

    def fiber_speed(self):
        """``|d act / d theta|`` in the total metric (constant for all three kinds)."""
        if self.kind is SubmersionKind.HOPF:
            return math.sqrt(self.lam / self.c)
        if self.kind is SubmersionKind.SASAKI_PROJ:
            return self.total.params["r"]
        return 1.0

    def fiber_parameter_period(self):
        return HEISENBERG_PERIOD if self.kind is SubmersionKind.HEISENBERG_PROJ else 2 * math.pi

    def split_array(self, x, v):
        v = self.total.project_tangent(x, v)
        V = self.unit_vertical(x)
        ver = self.total.inner(x, v, V)[..., None] * V
        return v - ver, ver

    def section(self, b, chart=None, tangent=None):
        """A point of the total space over each base point ``b``.

        ``chart`` picks the Hopf trivialization ("north" is regular away from
        the south pole and vice versa); ``tangent`` seeds the Sasaki fiber
        point ``u = r * tangent``.
        """
        b = np.asarray(b, dtype=float)
        if self.kind is SubmersionKind.HOPF:
            c = self.c
            n = b / np.linalg.norm(b, axis=-1, keepdims=True)
            n1, n2, n3 = np.moveaxis(n, -1, 0)
            if chart is None:
                chart = "north" if np.all(n3 > -0.5) or np.min(n3) >= -np.max(n3) else "south"
            if chart == "north":
                a = np.sqrt((1 + n3) / (2 * c))
                d = np.sqrt(2 * c * (1 + n3))
                z1, z2 = a + 0j, (n1 - 1j * n2) / d
            else:
                a = np.sqrt((1 - n3) / (2 * c))
                d = np.sqrt(2 * c * (1 - n3))
                z2, z1 = a + 0j, (n1 + 1j * n2) / d
            x = np.stack([z1.real, z1.imag, z2.real, z2.imag], axis=-1)
            return self.total.retract(x)
        if self.kind is SubmersionKind.HEISENBERG_PROJ:
            z = np.zeros(b.shape[:-1] + (1,))
            return np.concatenate([b, z], axis=-1)
        c, r = self.c, self.total.params["r"]
        p = b / (np.linalg.norm(b, axis=-1, keepdims=True) * math.sqrt(c))
        if tangent is None:
            ref = np.zeros(b.shape)
            ref[..., 0] = 1.0
            bad = np.abs(p[..., 0]) * math.sqrt(c) > 0.9
            ref[bad] = [0.0, 1.0, 0.0]
            tangent = ref
        t = np.asarray(tangent, dtype=float)
        t = t - c * np.einsum("...i,...i->...", t, p)[..., None] * p
        u = r * t / np.linalg.norm(t, axis=-1, keepdims=True)
        return np.concatenate([p, u], axis=-1)


# ---------------------------------------------------------------------------
# public operations


def project_point(sub: SubmersionModel, p):
    p = sub.total.check_point(p, tol=1e-8)
    return sub.project_points(p)


def split(sub: SubmersionModel, v: TangentVector) -> SplitVector:
    """Horizontal/vertical decomposition of a tangent vector of the total space."""
    p = v.base
    hor, ver = sub.split_array(p, v.comp)
    return SplitVector(TangentVector(p, hor), TangentVector(p, ver))


def horizontal_basis(sub: SubmersionModel, p):
    """``G``-orthonormal basis (columns) of the horizontal space at ``p``."""
    E = sub.total.tangent_basis(p)
    V = sub.unit_vertical(p)
    G = sub.total.metric(p)
    cols = []
    for e in E.T:
        h = e - (V @ G @ e) * V
        for b in cols:
            h = h - (b @ G @ h) * b
        nh = math.sqrt(max(h @ G @ h, 0.0))
        if nh > 1e-8:
            cols.append(h / nh)
    return np.array(cols[: sub.base.dim]).T


def horizontal_lift(sub: SubmersionModel, p, w) -> TangentVector:
    """The unique horizontal vector at ``p`` projecting to the base vector ``w``."""
    p = np.asarray(p, dtype=float)
    w = _comp(w)
    if sub.kind is SubmersionKind.HEISENBERG_PROJ:
        n = int(sub.total.params["n"])
        out = np.zeros(2 * n + 1)
        out[:-1] = w
        out[-1] = 0.5 * (-(w[:n] @ p[n : 2 * n]) + w[n : 2 * n] @ p[:n])
        return TangentVector(p, out)
    if sub.kind is SubmersionKind.SASAKI_PROJ:
        c = sub.c
        q, u = p[:3], p[3:]
        return TangentVector(p, np.concatenate([w, -c * (w @ u) * q]))
    B = horizontal_basis(sub, p)
    M = sub.differential(p) @ B
    coef = np.linalg.lstsq(M, w, rcond=None)[0]
    return TangentVector(p, B @ coef)


def fiber_sample(sub: SubmersionModel, b, count: int, start=None):
    """``count`` points equispaced along the fiber over base point ``b``."""
    if count < 2:
        raise ValueError("fiber_sample needs count >= 2")
    b = sub.base.check_point(b, tol=1e-8)
    x0 = sub.section(b) if start is None else np.asarray(start, dtype=float)
    theta = np.arange(count) * sub.fiber_parameter_period() / count
    return sub.act(x0[None, :], theta)


def fiber_mean_curvature(sub: SubmersionModel, p, delta: float = 1e-3) -> TangentVector:
    """Mean curvature vector of the fiber through ``p`` (five-point differences)."""
    p = sub.total.check_point(p, tol=1e-8)
    theta = np.array([-2, -1, 0, 1, 2]) * delta
    pts = sub.act(p[None, :], theta)
    d1 = (pts[0] - 8 * pts[1] + 8 * pts[3] - pts[4]) / (12 * delta)
    d2 = (-pts[0] + 16 * pts[1] - 30 * pts[2] + 16 * pts[3] - pts[4]) / (12 * delta**2)
    space = sub.total
    acc = space.project_tangent(p, d2 + space.gamma_apply(p, d1, d1))
    speed2 = space.inner(p, d1, d1)
    acc = acc - space.inner(p, acc, d1) / speed2 * d1
    return TangentVector(p, acc / speed2)


def _extended(sub, vec, part):
    """Smooth local extension of the horizontal or vertical part of ``vec``."""
    vec = np.asarray(vec, dtype=float)

    def field(q):
        hor, ver = sub.split_array(q, vec)
        return hor if part == "h" else ver

    return field


def oneill_A(sub: SubmersionModel, p, e, f) -> TangentVector:
    """``A_e f = V nabla_{He} (Hf) + H nabla_{He} (Vf)``."""
    p = np.asarray(p, dtype=float)
    e, f = _comp(e), _comp(f)
    he, _ = sub.split_array(p, e)
    d1 = covariant_derivative(sub.total, _extended(sub, f, "h"), TangentVector(p, he)).comp
    d2 = covariant_derivative(sub.total, _extended(sub, f, "v"), TangentVector(p, he)).comp
    _, v1 = sub.split_array(p, d1)
    h2, _ = sub.split_array(p, d2)
    return TangentVector(p, v1 + h2)


def oneill_T(sub: SubmersionModel, p, e, f) -> TangentVector:
    """``T_e f = H nabla_{Ve} (Vf) + V nabla_{Ve} (Hf)``."""
    p = np.asarray(p, dtype=float)
    e, f = _comp(e), _comp(f)
    _, ve = sub.split_array(p, e)
    d1 = covariant_derivative(sub.total, _extended(sub, f, "v"), TangentVector(p, ve)).comp
    d2 = covariant_derivative(sub.total, _extended(sub, f, "h"), TangentVector(p, ve)).comp
    h1, _ = sub.split_array(p, d1)
    _, v2 = sub.split_array(p, d2)
    return TangentVector(p, h1 + v2)


def random_total_point(sub: SubmersionModel, rng):
    """A random point of the total space (Heisenberg: inside a bounded box)."""
    t = sub.total
    if t.kind is Kind.HEISENBERG:
        return rng.uniform(-2, 2, size=t.embed_dim)
    if t.kind is Kind.SASAKI_BUNDLE:
        return t.retract(rng.normal(size=6))
    return t.retract(rng.normal(size=t.embed_dim))


@dataclass
class FiberAudit:
    kind: str
    max_mean_curvature: float
    n_points: int
    tol: float

    @property
    def passed(self):
        return self.max_mean_curvature <= self.tol

    def to_dict(self):
        return {
            "test": "fiber_audit",
            "params": {"kind": self.kind, "n_points": self.n_points, "tol": self.tol},
            "residuals": {"max_mean_curvature": self.max_mean_curvature},
            "pass": self.passed,
        }


def fiber_audit(sub: SubmersionModel, n_points: int = 100, seed: int = 0, tol: float = 1e-6) -> FiberAudit:
    """Minimal-fiber certificate: ``max |H_fiber|`` over random points."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        p = random_total_point(sub, rng)
        H = fiber_mean_curvature(sub, p)
        worst = max(worst, float(sub.total.norm(p, H.comp)))
    return FiberAudit(sub.kind.value, worst, n_points, tol)


def check_base_point(sub: SubmersionModel, b):
    try:
        return sub.base.check_point(b, tol=1e-8)
    except ConstraintViolation:
        raise
