"""Numerical certificates that lifted flows project onto base flows, plus the lifted-geometry identities.

Every test returns a verdict object with ``to_dict()`` producing
``{test, params, residuals, refinement_slopes, pass}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import AuditFailed, UnsupportedSpace
from .flow import FlowPolicy, _resample_loop, run_flow
from .immersions import (
    DiscreteImmersion,
    ImmersionKind,
    fundamental_forms,
    lift_immersion,
    tangency_defect,
)
from .spaces import complex_structure
from .submersions import SubmersionKind, SubmersionModel, fiber_audit


@dataclass
class Verdict:
    test: str
    params: dict
    residuals: dict
    refinement_slopes: dict = field(default_factory=dict)
    passed: bool = False
    series: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "test": self.test,
            "params": self.params,
            "residuals": self.residuals,
            "refinement_slopes": self.refinement_slopes,
            "pass": bool(self.passed),
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


# ---------------------------------------------------------------------------
# helpers


def hausdorff_distance(a, b):
    """Symmetric Hausdorff distance between two point clouds."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    d1 = cKDTree(b).query(a)[0].max()
    d2 = cKDTree(a).query(b)[0].max()
    return float(max(d1, d2))


def _dedupe_segments(A, B, scale):
    keep = np.linalg.norm(B - A, axis=1) > 1e-6 * scale
    A, B = A[keep], B[keep]
    key = np.round(np.concatenate([A, B], axis=1) / (1e-9 * scale)).astype(np.int64)
    _, idx = np.unique(key, axis=0, return_index=True)
    idx.sort()
    return A[idx], B[idx]


def points_to_segments(P, A, B, k=32):
    """Distance from each point of ``P`` to the union of segments ``[A_i, B_i]``.

    Candidate segments come from a k-d tree over midpoints; exact point-segment
    distances are taken over the candidates.
    """
    P, A, B = (np.asarray(v, dtype=float) for v in (P, A, B))
    k = min(k, len(A))
    _, idx = cKDTree(0.5 * (A + B)).query(P, k=k)
    idx = idx.reshape(len(P), k)
    a, b = A[idx], B[idx]
    d = b - a
    w = P[:, None, :] - a
    den = np.maximum((d * d).sum(-1), 1e-300)
    s = np.clip((w * d).sum(-1) / den, 0.0, 1.0)
    dist = np.linalg.norm(w - s[..., None] * d, axis=-1)
    return dist.min(axis=1)


def mesh_segments(imm, points=None):
    """Edge segments of an immersion, optionally re-positioned (e.g. projected)."""
    a, b, o = imm.topology.edges()
    X = imm.vertices
    Pa, Pb = X[a], X[b]
    if imm.period is not None:
        Pb = Pb + o[:, None] * imm.period
    if points is not None:
        Pa, Pb = points(Pa), points(Pb)
    return Pa, Pb


def projected_set_distance(sub, total_imm, base_imm, factor=10):
    """Hausdorff distance between ``pi(total_imm)`` and ``base_imm`` in the base embedding.

    Dense samples (``factor`` times the vertex count) of each set are measured
    against the exact edge segments of the other.
    """
    scale = diameter_scale(base_imm)
    proj = sub.project_points(total_imm.dense_sample(factor))
    bA, bB = mesh_segments(base_imm)
    d1 = points_to_segments(proj, bA, bB).max()
    pA, pB = mesh_segments(total_imm, sub.project_points)
    pA, pB = _dedupe_segments(pA, pB, scale)
    d2 = points_to_segments(base_imm.dense_sample(factor), pA, pB).max()
    return float(max(d1, d2))


def diameter_scale(imm):
    X = imm.vertices
    return float(np.linalg.norm(X - X.mean(axis=0), axis=1).max()) or 1.0


def refine_curve(imm: DiscreteImmersion, factor: int = 2) -> DiscreteImmersion:
    """Same curve with ``factor`` times as many vertices (periodic spline resampling)."""
    if imm.kind is not ImmersionKind.CURVE:
        raise ValueError("refine_curve expects a curve")
    V = _resample_loop(imm.space, imm.vertices, factor * imm.n_vertices)
    return DiscreteImmersion.curve(imm.space, V)


def default_fiber_res(sub: SubmersionModel, base_imm: DiscreteImmersion) -> int:
    return max(8, int(math.ceil(sub.fiber_length / base_imm.h)))


def _slope(coarse, fine):
    if coarse <= 0 or fine <= 0:
        return float("nan")
    return math.log2(coarse / fine)


def _require_audit(sub, n_points=100, tol=1e-6):
    audit = fiber_audit(sub, n_points=n_points, tol=tol)
    if not audit.passed:
        raise AuditFailed(f"fiber audit failed: max |H_fiber| = {audit.max_mean_curvature:.3e}")
    return audit


# ---------------------------------------------------------------------------
# commutation


@dataclass
class CommutationRun:
    times: np.ndarray
    distances: np.ndarray
    h: float
    dt: float
    base_trace: object
    total_trace: object
    base_report: object
    total_report: object

    @property
    def max_distance(self):
        return float(self.distances.max()) if len(self.distances) else float("nan")


def commutation_run(sub, base_imm, policy: FlowPolicy, fiber_res=None, sample_factor=10):
    """Flow ``B_0`` and its lift independently and compare ``pi(M_t)`` with ``B_t`` as sets."""
    fiber_res = fiber_res or default_fiber_res(sub, base_imm)
    total0 = lift_immersion(sub, base_imm, fiber_res)
    base_sets, total_sets = {}, {}

    def grab_base(st, forms):
        base_sets[st.t] = st.imm

    def grab_total(st, forms):
        total_sets[st.t] = st.imm

    btrace, brep = run_flow(base_imm, policy, callback=grab_base)
    ttrace, trep = run_flow(total0, policy, sub=sub, callback=grab_total)
    common = sorted(set(base_sets) & set(total_sets))
    # exact sample times only (a final singular sample is excluded)
    grid = {round(t / policy.sample_interval) * policy.sample_interval for t in common}
    common = [t for t in common if any(abs(t - g) <= 1e-12 * max(1.0, policy.horizon) for g in grid)]
    times = np.array(common)
    dists = np.array([projected_set_distance(sub, total_sets[t], base_sets[t], sample_factor) for t in common])
    from .flow import FlowState, adaptive_dt

    dt0 = adaptive_dt(FlowState(total0), policy.safety)
    return CommutationRun(times, dists, total0.h, dt0, btrace, ttrace, brep, trep)


def commutation_test(sub, base_imm, policy: FlowPolicy, fiber_res=None, refine=True, tol=0.05,
                     min_ratio=3.0, audit=True):
    """Commutation certificate with a refinement check.

    Passes iff the coarse run's ``max_t d_H <= tol`` and, when ``refine`` is
    set, halving ``h`` (which quarters the CFL step) shrinks it by at least
    ``min_ratio``.  The fitted constant ``C = d / (h^2 + dt)`` is reported.
    """
    if audit:
        _require_audit(sub)
    coarse = commutation_run(sub, base_imm, policy, fiber_res)
    residuals = {
        "max_distance": coarse.max_distance,
        "h": coarse.h,
        "dt": coarse.dt,
        "C": coarse.max_distance / (coarse.h**2 + coarse.dt),
    }
    slopes = {}
    ok = coarse.max_distance <= tol
    fine = None
    if refine:
        fr = 2 * (fiber_res or default_fiber_res(sub, base_imm))
        fine = commutation_run(sub, refine_curve(base_imm), policy, fr)
        ratio = coarse.max_distance / fine.max_distance if fine.max_distance > 0 else math.inf
        residuals.update(max_distance_refined=fine.max_distance, h_refined=fine.h, dt_refined=fine.dt, ratio=ratio)
        slopes["distance"] = _slope(coarse.max_distance, fine.max_distance)
        ok = ok and ratio >= min_ratio
    v = Verdict(
        "commutation",
        {"submersion": sub.to_dict(), "policy": policy.to_dict(), "tol": tol, "min_ratio": min_ratio},
        residuals,
        slopes,
        ok,
    )
    v.series = {"t": coarse.times.tolist(), "distance": coarse.distances.tolist()}
    v.runs = (coarse, fine)
    return v


# ---------------------------------------------------------------------------
# lifted norm identities


def closed_form_lift_A2(sub: SubmersionModel, base_imm, base_forms=None, defect=None):
    """Predicted ``|A'|^2`` of a Hopf or Heisenberg lift at each base vertex, from base data only."""
    f = fundamental_forms(base_imm) if base_forms is None else base_forms
    c = sub.c
    if sub.kind is SubmersionKind.HOPF:
        d = tangency_defect(base_imm, sub, f) if defect is None else defect
        return f.A2 + 2.0 * c * sub.lam**-0.5 * d, f
    if sub.kind is SubmersionKind.HEISENBERG_PROJ:
        d = tangency_defect(base_imm, sub, f) if defect is None else defect
        return f.A2 + 0.5 * d, f
    raise UnsupportedSpace(sub.kind.value)


def _sasaki_closed_form_rows(sub, base_imm, lifted, base_forms):
    """Per-lifted-vertex prediction using the actual fiber angle theta."""
    c, r = sub.c, sub.total.params["r"]
    n, k = base_imm.dim, sub.base.dim - base_imm.dim
    groups = lifted.fiber_groups
    X1 = base_forms.tangent_frames[:, :, 0]
    u = lifted.vertices[groups][..., 3:]
    cos_t = np.einsum("ijk,ik->ij", u, X1) / r
    sin2 = 1 - cos_t**2
    corr = 0.5 * c * c * r * r * (1 + (n - 1) * sin2 + (k - 1) * cos_t**2)
    return base_forms.A2[:, None] + corr


def lift_identity_residual(sub, base_imm, fiber_res=None):
    fiber_res = fiber_res or default_fiber_res(sub, base_imm)
    lifted = lift_immersion(sub, base_imm, fiber_res)
    lf = fundamental_forms(lifted, frames=False)
    A2_lift = lf.A2[lifted.fiber_groups]
    if sub.kind is SubmersionKind.SASAKI_PROJ:
        bf = fundamental_forms(base_imm)
        pred = _sasaki_closed_form_rows(sub, base_imm, lifted, bf)
    else:
        p, bf = closed_form_lift_A2(sub, base_imm)
        pred = np.broadcast_to(p[:, None], A2_lift.shape)
    rel = np.abs(A2_lift - pred) / np.abs(pred)
    correction = float((A2_lift - bf.A2[:, None]).mean())
    predicted_correction = float((pred - bf.A2[:, None]).mean())
    return {
        "max_relative_residual": float(rel.max()),
        "mean_lift_A2": float(A2_lift.mean()),
        "mean_predicted_A2": float(pred.mean()),
        "correction": correction,
        "predicted_correction": predicted_correction,
        "h": lifted.h,
    }


#: residuals below this are at round-off level; "halving" is then vacuous
RESIDUAL_FLOOR = 1e-9


def lift_norm_identity_test(sub, base_imm, fiber_res=None, refine=True, tol=0.05):
    """Compare the estimated ``|A'|^2`` of the lift with the closed form from base data."""
    if sub.kind not in (SubmersionKind.HOPF, SubmersionKind.HEISENBERG_PROJ, SubmersionKind.SASAKI_PROJ):
        raise UnsupportedSpace(sub.kind.value)
    coarse = lift_identity_residual(sub, base_imm, fiber_res)
    residuals = dict(coarse)
    slopes = {}
    ok = coarse["max_relative_residual"] <= tol
    if refine:
        fr = 2 * (fiber_res or default_fiber_res(sub, base_imm))
        fine = lift_identity_residual(sub, refine_curve(base_imm), fr)
        residuals.update({f"{k}_refined": v for k, v in fine.items()})
        a, b = coarse["max_relative_residual"], fine["max_relative_residual"]
        slopes["max_relative_residual"] = _slope(a, b)
        ok = ok and (b <= 0.5 * a or b <= RESIDUAL_FLOOR)
    return Verdict(
        "lift_norm_identity",
        {"submersion": sub.to_dict(), "n_base": base_imm.n_vertices, "tol": tol},
        residuals,
        slopes,
        ok,
    )


# ---------------------------------------------------------------------------
# isometries


class Isometry:
    """An exact isometry of a model space, applied to point arrays."""

    def __init__(self, name, fn, params=None):
        self.name = name
        self.fn = fn
        self.params = params or {}

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))

    @classmethod
    def linear(cls, Q, name="orthogonal"):
        Q = np.asarray(Q, dtype=float)
        return cls(name, lambda x: x @ Q.T, {"matrix": Q.tolist()})

    @classmethod
    def rotation_2d(cls, angle, dim=2, axes=(0, 1)):
        Q = np.eye(dim)
        i, j = axes
        c, s = math.cos(angle), math.sin(angle)
        Q[i, i], Q[i, j], Q[j, i], Q[j, j] = c, -s, s, c
        return cls.linear(Q, name=f"rotation({angle})")

    @classmethod
    def hopf_action(cls, theta):
        J = complex_structure(2)
        Q = math.cos(theta) * np.eye(4) + math.sin(theta) * J
        return cls.linear(Q, name=f"hopf_action({theta})")

    @classmethod
    def heisenberg_left_translation(cls, a, b, t):
        """Left multiplication by ``(a, b, t)`` in H^1."""

        def fn(x):
            y = x.copy()
            y[..., 0] += a
            y[..., 1] += b
            y[..., 2] += t + 0.5 * (a * x[..., 1] - b * x[..., 0])
            return y

        return cls("heisenberg_left_translation", fn, {"a": a, "b": b, "t": t})

    @classmethod
    def heisenberg_rotation(cls, angle):
        c, s = math.cos(angle), math.sin(angle)
        Q = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
        return cls.linear(Q, name=f"heisenberg_rotation({angle})")

    @classmethod
    def sasaki_rotation(cls, Q):
        Q = np.asarray(Q, dtype=float)
        big = np.zeros((6, 6))
        big[:3, :3] = Q
        big[3:, 3:] = Q
        return cls.linear(big, name="sasaki_rotation")


def _map_immersion(imm, iso):
    out = imm.with_vertices(iso(imm.vertices))
    return out


def isometry_commutation_test(imm, isometry: Isometry, policy: FlowPolicy, sub=None, tol=1e-8):
    """Flow ``phi(M_0)`` and compare with ``phi`` applied to the flow of ``M_0``."""
    final = {}

    def keep(key):
        def cb(st, forms):
            final[key] = st.imm.vertices.copy()

        return cb

    tr1, _ = run_flow(imm, policy, sub=sub, callback=keep("a"))
    tr2, _ = run_flow(_map_immersion(imm, isometry), policy, sub=sub, callback=keep("b"))
    if len(tr1) != len(tr2) or final["a"].shape != final["b"].shape:
        res = math.inf
    else:
        res = float(np.linalg.norm(isometry(final["a"]) - final["b"], axis=1).max())
    residuals = {"max_vertex_distance": res, "t_final": tr1.times[-1]}
    if sub is not None and imm.fiber_groups is not None:
        residuals["max_invariance_defect"] = float(np.nanmax(tr1.invariance_defect))
    return Verdict(
        "isometry_commutation",
        {"isometry": isometry.name, "policy": policy.to_dict(), "tol": tol},
        residuals,
        {},
        res <= tol,
    )


def invariance_growth_test(sub, imm, policy: FlowPolicy, factor=10.0):
    """Lifted flows must keep the invariance defect below ``factor (h^2 + dt) t``."""
    from .flow import FlowState, adaptive_dt

    tr, _ = run_flow(imm, policy, sub=sub)
    dt0 = adaptive_dt(FlowState(imm), policy.safety)
    t = np.asarray(tr.times)
    d = np.asarray(tr.invariance_defect)
    bound = factor * (imm.h**2 + dt0) * t
    ok = bool(np.all(d <= bound + 1e-13))
    return Verdict(
        "invariance_growth",
        {"submersion": sub.to_dict(), "policy": policy.to_dict(), "factor": factor},
        {"max_defect": float(d.max()), "min_slack": float((bound - d)[1:].min()) if len(t) > 1 else 0.0},
        {},
        ok,
    )


# ---------------------------------------------------------------------------
# canonical variation


def _mixed_entries(sub, lifted, forms):
    """``|A'(X^L, V_lambda)|`` per vertex of a lifted torus (codimension one)."""
    X = lifted.vertices
    V = sub.unit_vertical(X)
    E = forms.tangent_frames
    G = sub.total.metric(X)
    vE = np.einsum("nia,nij,nj->na", E, G, V)
    vE /= np.linalg.norm(vE, axis=1, keepdims=True)
    xE = np.stack([-vE[:, 1], vE[:, 0]], axis=1)
    h = forms.h[:, 0]
    return np.abs(np.einsum("na,nab,nb->n", xE, h, vE))


def variation_exponent_fit(base_imm, lam_grid=(0.25, 0.5, 1.0, 2.0, 4.0), c=1.0, fiber_res=None):
    """Log-log slopes in ``lambda`` of the mixed entries and of the ``|A'|^2`` correction.

    ``base_imm`` is a curve on the FS sphere; its lifts to the Berger spheres
    ``(S^3(c), g_lambda)`` are measured directly on the mesh.
    """
    lam_grid = np.asarray(lam_grid, dtype=float)
    if len(lam_grid) < 4 or lam_grid.max() / lam_grid.min() < 10:
        raise ValueError("lambda grid needs >= 4 values spanning at least one decade")
    base_forms = fundamental_forms(base_imm)
    mixed, corr, A2 = [], [], []
    for lam in lam_grid:
        sub = SubmersionModel.hopf(c, float(lam))
        fr = fiber_res or default_fiber_res(sub, base_imm)
        lifted = lift_immersion(sub, base_imm, fr)
        f = fundamental_forms(lifted)
        mixed.append(float(_mixed_entries(sub, lifted, f).mean()))
        corr.append(float((f.A2[lifted.fiber_groups] - base_forms.A2[:, None]).mean()))
        A2.append(float(f.A2.mean()))
    ll = np.log(lam_grid)
    s_mixed = float(np.polyfit(ll, np.log(mixed), 1)[0])
    s_corr = float(np.polyfit(ll, np.log(corr), 1)[0])
    return Verdict(
        "variation_exponent_fit",
        {"lambda": lam_grid.tolist(), "c": c, "stated_exponent": -0.5},
        {"mixed": mixed, "correction": corr, "lift_A2": A2},
        {"mixed_entries": s_mixed, "correction": s_corr},
        abs(s_mixed + 0.5) <= 0.02,
    )


# ---------------------------------------------------------------------------
# mean curvature relation


def mean_curvature_relation_residual(sub, base_imm, fiber_res=None):
    fiber_res = fiber_res or default_fiber_res(sub, base_imm)
    lifted = lift_immersion(sub, base_imm, fiber_res)
    lf = fundamental_forms(lifted, frames=False)
    bf = fundamental_forms(base_imm, frames=False)
    pushed = sub.push(lifted.vertices, lf.H)[lifted.fiber_groups]
    diff = pushed - bf.H[:, None, :]
    B = np.broadcast_to(base_imm.vertices[:, None, :], diff.shape)
    return float(sub.base.norm(B, diff).max()), lifted.h


def mean_curvature_relation_test(sub, base_imm, fiber_res=None, refine=True, tol=0.05):
    """``d pi (H') = H`` vertexwise on the lift (fibers minimal, so ``H'`` is basic)."""
    _require_audit(sub)
    res, h = mean_curvature_relation_residual(sub, base_imm, fiber_res)
    residuals = {"max_residual": res, "h": h}
    slopes = {}
    ok = res <= tol
    if refine:
        fr = 2 * (fiber_res or default_fiber_res(sub, base_imm))
        res2, h2 = mean_curvature_relation_residual(sub, refine_curve(base_imm), fr)
        residuals.update(max_residual_refined=res2, h_refined=h2)
        slopes["max_residual"] = _slope(res, res2)
        ok = ok and (res2 <= 0.5 * res or res2 <= RESIDUAL_FLOOR)
    return Verdict("mean_curvature_relation", {"submersion": sub.to_dict(), "tol": tol}, residuals, slopes, ok)


def fiber_audit_verdict(sub, n_points=100, seed=0, tol=1e-6):
    a = fiber_audit(sub, n_points, seed, tol)
    d = a.to_dict()
    return Verdict("fiber_audit", d["params"], d["residuals"], {}, a.passed)
