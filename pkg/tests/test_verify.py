import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from submcf import families as F
from submcf import verify as V
from submcf.errors import AuditFailed, UnsupportedSpace
from submcf.flow import FlowPolicy
from submcf.submersions import FiberAudit, SubmersionModel

FAST = FlowPolicy(horizon=0.05, sample_interval=0.025, safety=1.0, diameter_factor=0, stop_when_minimal=False)


def test_hausdorff_point_clouds():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[0.0, 0.5], [1.0, 0.0], [3.0, 0.0]])
    assert V.hausdorff_distance(a, b) == pytest.approx(2.0)
    assert V.hausdorff_distance(a, a) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_points_to_segments_exact(x, y):
    A = np.array([[0.0, 0.0], [1.0, 0.0]])
    B = np.array([[1.0, 0.0], [1.0, 1.0]])
    d = V.points_to_segments(np.array([[x, y]]), A, B)[0]
    # distance to the polyline (0,0)-(1,0)-(1,1) by hand
    d1 = math.hypot(x - min(max(x, 0.0), 1.0), y)
    d2 = math.hypot(x - 1.0, y - min(max(y, 0.0), 1.0))
    assert d == pytest.approx(min(d1, d2), abs=1e-12)


def test_projected_distance_of_exact_lift_is_small():
    sub, base, lifted = F.hopf_torus(phi=0.6, h=0.1)
    d = V.projected_set_distance(sub, lifted, base)
    # projected triangle interiors bulge by the chord sagitta, O(h^2)
    assert d < base.h**2


def test_verdict_json(tmp_path):
    v = V.fiber_audit_verdict(SubmersionModel.hopf(), n_points=5)
    v.to_json(tmp_path / "v.json")
    d = json.loads((tmp_path / "v.json").read_text())
    assert set(d) == {"test", "params", "residuals", "refinement_slopes", "pass"}
    assert d["pass"] is True


def test_commutation_refuses_without_audit(monkeypatch):
    monkeypatch.setattr(V, "fiber_audit", lambda sub, n_points=100, tol=1e-6: FiberAudit("HOPF", 1.0, n_points, tol))
    sub, base, _ = F.hopf_torus(h=0.1)
    with pytest.raises(AuditFailed):
        V.commutation_test(sub, base, FAST, refine=False)


def test_hopf_commutation_coarse():
    sub = SubmersionModel.hopf()
    v = V.commutation_test(sub, F.fs_circle(0.6, h=0.1), FAST, refine=False)
    assert v.passed, v.residuals
    assert len(v.series["t"]) == len(v.series["distance"]) >= 2


def test_commutation_of_geodesic_stays_small():
    sub = SubmersionModel.hopf()
    base = F.fs_circle(math.pi / 2, h=0.1)
    v = V.commutation_test(sub, base, FAST, refine=False)
    assert v.residuals["max_distance"] <= base.h**2


@pytest.mark.parametrize(
    "sub, base",
    [
        (SubmersionModel.heisenberg_proj(), F.plane_circle(1.0, 0.1)),
        (SubmersionModel.sasaki_proj(), F.geodesic_circle(math.pi / 2, h=0.1)),
        (SubmersionModel.sasaki_proj(), F.geodesic_circle(1.0, h=0.1)),
        (SubmersionModel.hopf(), F.fs_circle(0.6, h=0.1)),
    ],
    ids=["heisenberg", "sasaki-great", "sasaki-small", "hopf"],
)
def test_lift_norm_identities(sub, base):
    v = V.lift_norm_identity_test(sub, base)
    assert v.passed, v.residuals


def test_lift_identity_unsupported_for_closed_form():
    with pytest.raises(UnsupportedSpace):
        V.closed_form_lift_A2(SubmersionModel.sasaki_proj(), F.geodesic_circle(1.0, h=0.2))


def test_mean_curvature_relation():
    for sub, base in [(SubmersionModel.hopf(), F.fs_circle(0.8, h=0.1)),
                      (SubmersionModel.heisenberg_proj(), F.plane_circle(1.0, 0.1))]:
        v = V.mean_curvature_relation_test(sub, base)
        assert v.passed, v.residuals


def test_mean_curvature_relation_minimal_base():
    # both sides vanish in the limit; the sheared lifted grid leaves an O(h^2) estimator error
    res = [V.mean_curvature_relation_residual(SubmersionModel.hopf(), F.fs_circle(math.pi / 2, h=h))[0]
           for h in (0.1, 0.05)]
    assert res[0] < 0.1**2 and res[1] < res[0] / 3


def test_isometry_euclidean_rotation():
    v = V.isometry_commutation_test(F.plane_circle(1.0, 0.1), V.Isometry.rotation_2d(0.7), FAST)
    assert v.passed, v.residuals


def test_isometry_hopf_action():
    sub, _, lifted = F.hopf_torus(phi=0.6, h=0.1)
    v = V.isometry_commutation_test(lifted, V.Isometry.hopf_action(0.37), FAST, sub=sub)
    assert v.passed, v.residuals


@pytest.mark.parametrize("iso", [V.Isometry.heisenberg_left_translation(0.3, -0.2, 0.45),
                                 V.Isometry.heisenberg_left_translation(0.0, 0.0, 0.45),
                                 V.Isometry.heisenberg_rotation(0.8)], ids=["left", "vertical", "rotation"])
def test_isometry_heisenberg(iso):
    sub, _, lifted = F.heisenberg_cylinder(h=0.1)
    v = V.isometry_commutation_test(lifted, iso, FAST, sub=sub)
    assert v.passed, v.residuals


def test_isometry_sasaki_rotation():
    sub, _, lifted = F.sasaki_circle_lift(phi=1.0, h=0.1)
    Q = Rotation.from_rotvec([0.3, -0.5, 0.2]).as_matrix()
    v = V.isometry_commutation_test(lifted, V.Isometry.sasaki_rotation(Q), FAST, sub=sub)
    assert v.passed, v.residuals


def test_isometries_preserve_the_model():
    rng = np.random.default_rng(0)
    sub = SubmersionModel.heisenberg_proj()
    iso = V.Isometry.heisenberg_left_translation(0.3, -0.2, 0.45)
    p = rng.normal(size=3)
    w = rng.normal(size=3)
    eps = 1e-6
    dphi = (iso(p + eps * w) - iso(p - eps * w)) / (2 * eps)
    assert sub.total.norm(iso(p), dphi) == pytest.approx(sub.total.norm(p, w), rel=1e-8)


@pytest.mark.parametrize("make", [lambda: F.hopf_torus(phi=0.6, h=0.1), lambda: F.heisenberg_cylinder(h=0.1),
                                  lambda: F.sasaki_circle_lift(phi=1.0, h=0.1)], ids=["hopf", "heisenberg", "sasaki"])
def test_invariance_growth(make):
    sub, _, lifted = make()
    v = V.invariance_growth_test(sub, lifted, FAST)
    assert v.passed, v.residuals


def test_variation_grid_validation():
    with pytest.raises(ValueError):
        V.variation_exponent_fit(F.fs_circle(0.6, h=0.2), [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        V.variation_exponent_fit(F.fs_circle(0.6, h=0.2), [1.0, 1.5, 2.0, 3.0])


def test_variation_at_unit_lambda_is_round_sphere():
    base = F.fs_circle(0.6, h=0.1)
    v = V.variation_exponent_fit(base, [0.25, 0.5, 1.0, 2.5])
    direct = V.lift_identity_residual(SubmersionModel.hopf(), base)
    assert v.residuals["correction"][2] == pytest.approx(direct["correction"], rel=1e-12)


def test_refine_curve_doubles():
    base = F.fs_circle(0.6, h=0.1)
    fine = V.refine_curve(base)
    assert fine.n_vertices == 2 * base.n_vertices
    assert fine.h == pytest.approx(base.h / 2, rel=0.01)
