"""Explicit mean curvature flow with CFL stepping, remeshing and fate classification."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import CFLViolation, MeshCollapse
from .immersions import (
    DiscreteImmersion,
    ImmersionKind,
    PinchingCondition,
    fundamental_forms,
    grid_triangles,
    invariance_defect,
    pinching_margin,
)
from .submersions import SubmersionModel

#: edges shorter than this fraction of the mean edge count as collapsed
COLLAPSE_RATIO = 1e-6


@dataclass
class FlowState:
    imm: DiscreteImmersion
    t: float = 0.0
    step_count: int = 0
    last_dt: float = 0.0


def cfl_bound(h, max_A2, safety=1.0):
    """``safety * min(h^2 / 4, 1 / (2 max|A|^2))``."""
    if not 0 < safety <= 1:
        raise ValueError("safety must lie in (0, 1]")
    curv = 1.0 / (2.0 * max_A2) if max_A2 > 0 else math.inf
    return safety * min(h * h / 4.0, curv)


def adaptive_dt(state: FlowState, safety: float = 1.0, forms=None) -> float:
    """Stable explicit step for the current mesh.

    The length scale is the shortest edge: a stencil's stiffness is set by its
    closest neighbors, so graded meshes need the minimum, not the maximum.
    """
    forms = fundamental_forms(state.imm, frames=False) if forms is None else forms
    return cfl_bound(state.imm.h_min, float(forms.A2.max()), safety)


def _check_mesh(imm: DiscreteImmersion):
    L = imm.edge_lengths()
    if L.min() < COLLAPSE_RATIO * L.mean():
        raise MeshCollapse(f"edge of length {L.min():.3e} (mean {L.mean():.3e})")
    if imm.kind is ImmersionKind.SURFACE:
        P = imm.triangle_corners()
        e1, e2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
        g11, g22, g12 = (e1 * e1).sum(1), (e2 * e2).sum(1), (e1 * e2).sum(1)
        area2 = np.maximum(g11 * g22 - g12 * g12, 0.0)
        if np.sqrt(area2).min() < (COLLAPSE_RATIO * L.mean()) ** 2:
            raise MeshCollapse("degenerate triangle")


def step_mcf(state: FlowState, dt: float, forms=None, safety: float = 1.0) -> FlowState:
    """One explicit Euler step ``x <- retract(x + dt H)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    forms = fundamental_forms(state.imm, frames=False) if forms is None else forms
    bound = adaptive_dt(state, safety, forms)
    if dt > bound * (1 + 1e-9):
        raise CFLViolation(f"dt={dt:.3e} exceeds the stable bound {bound:.3e}")
    X = state.imm.space.retract(state.imm.vertices + dt * forms.H)
    imm = state.imm.with_vertices(X)
    _check_mesh(imm)
    return FlowState(imm, state.t + dt, state.step_count + 1, dt)


# ---------------------------------------------------------------------------
# remeshing


def _resample_loop(space, P, n_new):
    """Periodic cubic spline through a closed polyline, resampled by arclength."""
    Q = np.vstack([P, P[:1]])
    d = np.linalg.norm(np.diff(Q, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(d)])
    spl = CubicSpline(s, Q, bc_type="periodic")
    # refine the parameter-to-arclength map once on a dense grid
    fine = np.linspace(0, s[-1], 20 * len(P) + 1)
    F = spl(fine)
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(F, axis=0), axis=1))])
    target = np.arange(n_new) * arc[-1] / n_new
    return space.retract(spl(np.interp(target, arc, fine)))


def _remesh_curve(imm, target_h):
    L = imm.edge_lengths()
    n_new = max(8, int(round(L.sum() / target_h)))
    if abs(n_new - imm.n_vertices) <= 1 and L.min() >= 0.5 * target_h and L.max() <= 1.5 * target_h:
        return imm
    return DiscreteImmersion.curve(imm.space, _resample_loop(imm.space, imm.vertices, n_new), validate=False)


def _remesh_grid(imm, target_h):
    """Resample every fiber-index column of a lifted grid to a common count."""
    groups = imm.fiber_groups
    nb, fr = groups.shape
    cols = [imm.vertices[groups[:, j]] for j in range(fr)]
    lengths = [imm.space.norm(c, np.roll(c, -1, axis=0) - c).sum() for c in cols]
    n_new = max(8, int(round(np.mean(lengths) / target_h)))
    L = imm.edge_lengths()
    if n_new == nb and L.min() >= 0.5 * target_h and L.max() <= 1.5 * target_h:
        return imm
    newcols = [_resample_loop(imm.space, c, n_new) for c in cols]
    V = np.stack(newcols, axis=1).reshape(n_new * fr, -1)
    tris, wraps = grid_triangles(V, n_new, fr, imm.period is not None)
    out = DiscreteImmersion.surface(imm.space, V, tris, wraps, period=imm.period, validate=False)
    out.fiber_groups = np.arange(n_new * fr).reshape(n_new, fr)
    return out


def _remesh_unstructured(imm, target_h, passes=8):
    """Edge split/collapse toward ``target_h`` with the link condition."""
    if imm.period is not None:
        raise ValueError("unstructured remeshing of periodic strips is not supported")
    space = imm.space
    V = [v for v in imm.vertices]
    F = [list(f) for f in imm.topology.triangles]
    hi, lo = 4.0 / 3.0 * target_h, 0.8 * target_h

    def length(a, b):
        mid = 0.5 * (V[a] + V[b])
        return float(space.norm(mid, V[b] - V[a]))

    def edge_faces():
        ef = {}
        for fi, f in enumerate(F):
            if f is None:
                continue
            for k in range(3):
                a, b = f[k], f[(k + 1) % 3]
                ef.setdefault((min(a, b), max(a, b)), []).append(fi)
        return ef

    for _ in range(passes):
        changed = False
        # splits
        ef = edge_faces()
        long_edges = sorted(((length(a, b), a, b) for (a, b) in ef if length(a, b) > hi), reverse=True)
        dirty = set()
        for _, a, b in long_edges:
            fs = ef[(a, b)]
            if any(fi in dirty for fi in fs):
                continue
            V.append(space.retract(0.5 * (V[a] + V[b])))
            m = len(V) - 1
            for fi in fs:
                f = F[fi]
                k = next(k for k in range(3) if {f[k], f[(k + 1) % 3]} == {a, b})
                p, q, r = f[k], f[(k + 1) % 3], f[(k + 2) % 3]
                F[fi] = [p, m, r]
                F.append([m, q, r])
                dirty.add(fi)
                dirty.add(len(F) - 1)
            changed = True
        # collapses
        ef = edge_faces()
        nbrs = {}
        for (a, b) in ef:
            nbrs.setdefault(a, set()).add(b)
            nbrs.setdefault(b, set()).add(a)
        vfaces = {}
        for fi, f in enumerate(F):
            if f is not None:
                for v in f:
                    vfaces.setdefault(v, set()).add(fi)
        short = sorted((length(a, b), a, b) for (a, b) in ef if length(a, b) < lo)
        locked = set()
        for _, a, b in short:
            if a in locked or b in locked or (min(a, b), max(a, b)) not in ef:
                continue
            fs = ef[(min(a, b), max(a, b))]
            if len(fs) != 2:
                continue
            opp = {v for fi in fs for v in F[fi] if v not in (a, b)}
            if (nbrs[a] & nbrs[b]) != opp or len(nbrs[a]) <= 3 or len(nbrs[b]) <= 3:
                continue  # link condition / tetrahedron guard
            new = space.retract(0.5 * (V[a] + V[b]))
            ring = (nbrs[a] | nbrs[b]) - {a, b}
            if any(float(space.norm(0.5 * (new + V[c]), V[c] - new)) > hi for c in ring):
                continue
            V[a] = new
            for fi in fs:
                F[fi] = None
            for fi in vfaces[b] - set(fs):
                F[fi] = [a if v == b else v for v in F[fi]]
                vfaces[a].add(fi)
            locked |= {a, b} | ring
            changed = True
        F = [f for f in F if f is not None]
        if not changed:
            break
    used = sorted({v for f in F for v in f})
    remap = {v: i for i, v in enumerate(used)}
    Vn = np.array([V[v] for v in used])
    Fn = np.array([[remap[v] for v in f] for f in F])
    return DiscreteImmersion.surface(space, Vn, Fn, validate=False)


def remesh(imm: DiscreteImmersion, target_h: float) -> DiscreteImmersion:
    """Bring edge lengths back toward ``target_h``.

    Curves are resampled uniformly in arclength.  Fiber-swept grids are
    resampled column by column so the fiber symmetry is kept.  Other surfaces
    get edge splits and link-condition collapses.
    """
    if not target_h > 0:
        raise ValueError("target_h must be positive")
    if imm.kind is ImmersionKind.CURVE:
        out = _remesh_curve(imm, target_h)
    elif imm.fiber_groups is not None:
        out = _remesh_grid(imm, target_h)
    else:
        out = _remesh_unstructured(imm, target_h)
    try:
        out.check(tol=1e-8)
    except ValueError as exc:
        raise MeshCollapse(f"remeshing broke the mesh: {exc}") from exc
    return out


def needs_remesh(imm, target_h, lo=0.5, hi=1.5):
    L = imm.edge_lengths()
    return L.min() < lo * target_h or L.max() > hi * target_h


# ---------------------------------------------------------------------------
# diagnostics


def diameter(points):
    """Twice the largest distance from the centroid (cheap diameter proxy)."""
    P = np.asarray(points, dtype=float)
    return 2.0 * float(np.linalg.norm(P - P.mean(axis=0), axis=1).max())


def transverse_points(imm, sub):
    if sub is None or imm.space != sub.total:
        return imm.vertices
    return sub.project_points(imm.vertices)


def fiber_distance(imm, sub):
    """Largest base distance from a projected vertex to the fiber over the projected centroid."""
    if sub is None or imm.space != sub.total:
        return float("nan")
    B = sub.project_points(imm.vertices)
    c = sub.base.retract(B.mean(axis=0))
    return float(np.linalg.norm(B - c, axis=1).max())


class Outcome(str, Enum):
    SHRINKS_TO_FIBER = "SHRINKS_TO_FIBER"
    CONVERGES_MINIMAL = "CONVERGES_MINIMAL"
    SHRINKS_TO_POINT = "SHRINKS_TO_POINT"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class FlowPolicy:
    horizon: float
    sample_interval: float
    target_h: float | None = None
    safety: float = 0.5
    max_A2: float = 1e4
    diameter_factor: float = 10.0
    minimal_H2: float = 1e-8
    stop_when_minimal: bool = True
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not self.horizon > 0 or not self.sample_interval > 0:
            raise ValueError("horizon and sample_interval must be positive")
        if not 0 < self.safety <= 1:
            raise ValueError("safety must lie in (0, 1]")
        if self.target_h is not None and not self.target_h > 0:
            raise ValueError("target_h must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class FlowTrace:
    times: list = field(default_factory=list)
    max_A2: list = field(default_factory=list)
    max_H2: list = field(default_factory=list)
    margins: dict = field(default_factory=dict)
    diameter: list = field(default_factory=list)
    transverse_diameter: list = field(default_factory=list)
    fiber_distance: list = field(default_factory=list)
    invariance_defect: list = field(default_factory=list)
    h: list = field(default_factory=list)
    stop_reason: str = "horizon"

    def __len__(self):
        return len(self.times)

    def columns(self):
        cols = {"t": self.times, "max_A2": self.max_A2, "max_H2": self.max_H2}
        for name, series in self.margins.items():
            cols[f"min_margin_{name}"] = series
        cols.update(
            diameter=self.diameter, fiber_distance=self.fiber_distance, invariance_defect=self.invariance_defect
        )
        return cols

    def to_csv(self, path):
        cols = self.columns()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(cols))
            for row in zip(*cols.values()):
                w.writerow([f"{v:.17g}" for v in row])


@dataclass
class SingularityEvent:
    T_singular: float
    slope: float
    n_samples: int


@dataclass
class FateReport:
    outcome: Outcome
    T_singular: float | None
    terminal: dict
    thresholds: dict

    def to_dict(self):
        return {
            "outcome": self.outcome.value,
            "T_singular": self.T_singular,
            "terminal": self.terminal,
            "thresholds": self.thresholds,
            "note": "classifier thresholds are engineering choices",
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def detect_singularity(trace, threshold: float = 1e4, force: bool = False):
    """Type-I blow-up fit: regress ``1/max|A|^2`` on ``t`` over the tail and extrapolate to zero.

    Fires when the last ``max|A|^2`` exceeds ``threshold`` (or ``force``) and the
    tail is increasing; returns ``None`` otherwise.
    """
    t = np.asarray(trace.times if hasattr(trace, "times") else trace[0], dtype=float)
    a = np.asarray(trace.max_A2 if hasattr(trace, "max_A2") else trace[1], dtype=float)
    if len(t) < 3:
        return None
    if not (force or a[-1] > threshold):
        return None
    tail = np.nonzero(a >= 0.5 * a[-1])[0]
    k = max(3, len(tail))
    tt, y = t[-k:], 1.0 / a[-k:]
    if not np.all(np.diff(a[-k:]) > 0):
        return None
    slope, icpt = np.polyfit(tt, y, 1)
    if slope >= 0:
        return None
    return SingularityEvent(float(-icpt / slope), float(slope), int(k))


def run_flow(imm: DiscreteImmersion, policy: FlowPolicy, sub: SubmersionModel | None = None, conditions=(),
             callback=None):
    """Integrate until the horizon, a singularity, or convergence to a minimal immersion.

    Samples are taken exactly at multiples of ``policy.sample_interval``.
    ``callback(state, forms)`` is invoked at every sample (used by the harness).
    """
    state = FlowState(imm)
    trace = FlowTrace()
    for c in conditions:
        trace.margins[c.name] = []
    fiber_ok = sub is not None and imm.fiber_groups is not None and imm.space == sub.total
    init_fd = fiber_distance(imm, sub)

    def sample(st, forms):
        trace.times.append(st.t)
        trace.max_A2.append(float(forms.A2.max()))
        trace.max_H2.append(float(forms.H2.max()))
        for c in conditions:
            trace.margins[c.name].append(pinching_margin(forms, c)[1])
        trace.diameter.append(diameter(st.imm.vertices))
        trace.transverse_diameter.append(diameter(transverse_points(st.imm, sub)))
        trace.fiber_distance.append(fiber_distance(st.imm, sub))
        trace.invariance_defect.append(invariance_defect(sub, st.imm) if fiber_ok else float("nan"))
        trace.h.append(st.imm.h)
        if callback is not None:
            callback(st, forms)

    forms = fundamental_forms(state.imm, frames=False)
    sample(state, forms)
    k_next = 1
    eps = 1e-12 * policy.horizon
    while True:
        if policy.stop_when_minimal and trace.max_H2[-1] <= policy.minimal_H2:
            trace.stop_reason = "minimal"
            break
        if state.t >= policy.horizon - eps:
            break
        if state.step_count >= policy.max_steps:
            trace.stop_reason = "max_steps"
            break
        dt = adaptive_dt(state, policy.safety, forms)
        t_sample = min(k_next * policy.sample_interval, policy.horizon)
        hit = state.t + dt >= t_sample - eps
        if hit:
            dt = t_sample - state.t
        state = step_mcf(state, dt, forms, policy.safety)
        if hit:
            state.t = t_sample
            k_next += 1
        if policy.target_h is not None and needs_remesh(state.imm, policy.target_h):
            state = FlowState(remesh(state.imm, policy.target_h), state.t, state.step_count, state.last_dt)
        forms = fundamental_forms(state.imm, frames=False)
        A2max = float(forms.A2.max())
        tdiam = diameter(transverse_points(state.imm, sub))
        singular = A2max > policy.max_A2 or tdiam < policy.diameter_factor * state.imm.h
        if hit or singular:
            sample(state, forms)
        if singular:
            trace.stop_reason = "curvature" if A2max > policy.max_A2 else "diameter"
            break

    return trace, classify(trace, policy, fiber_ok, init_fd)


def classify(trace: FlowTrace, policy: FlowPolicy, lifted: bool, init_fiber_distance: float) -> FateReport:
    event = None
    if trace.stop_reason in ("curvature", "diameter"):
        event = detect_singularity(trace, policy.max_A2, force=True)
    terminal = {k: (v[-1] if v else None) for k, v in trace.columns().items()}
    terminal["stop_reason"] = trace.stop_reason
    thresholds = {
        "max_A2": policy.max_A2,
        "diameter_factor": policy.diameter_factor,
        "minimal_H2": policy.minimal_H2,
        "fiber_ratio": 0.5,
        "point_ratio": 0.5,
    }
    if event is not None:
        if lifted and trace.fiber_distance[-1] <= 0.5 * init_fiber_distance:
            outcome = Outcome.SHRINKS_TO_FIBER
        elif trace.diameter[-1] <= 0.5 * trace.diameter[0] or (
            trace.stop_reason == "diameter" and trace.diameter[-1] < trace.diameter[0]
        ):
            outcome = Outcome.SHRINKS_TO_POINT
        else:
            outcome = Outcome.INCONCLUSIVE
        return FateReport(outcome, event.T_singular, terminal, thresholds)
    if trace.max_H2[-1] <= policy.minimal_H2:
        return FateReport(Outcome.CONVERGES_MINIMAL, None, terminal, thresholds)
    return FateReport(Outcome.INCONCLUSIVE, None, terminal, thresholds)


def conditions_from_dicts(items):
    out = []
    for d in items:
        d = dict(d)
        kind = d.pop("name")
        out.append(getattr(PinchingCondition, kind)(**d))
    return out
