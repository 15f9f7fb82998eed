import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from submcf.errors import ConstraintViolation, IntegrationError, StencilError, UnsupportedSpace
from submcf.spaces import (
    AmbientSpace,
    Kind,
    TangentVector,
    covariant_derivative,
    geodesic_shoot,
    heisenberg_frame,
    metric_at,
    riemann_at,
    sasaki_tangent_lift,
    sectional_curvature,
    validate_connection_tables,
)

SPACES = [
    AmbientSpace.euclidean(3),
    AmbientSpace.round_sphere(2, 1.0),
    AmbientSpace.round_sphere(3, 2.0),
    AmbientSpace.berger_sphere(1.0, 0.5),
    AmbientSpace.fs_sphere(1.0),
    AmbientSpace.heisenberg(1),
    AmbientSpace.sasaki_bundle(1.0, 1.0),
]


def random_point(space, rng):
    x = rng.normal(size=space.embed_dim)
    if space.kind is Kind.SASAKI_BUNDLE:
        c, r = space.params["c"], space.params["r"]
        p = x[:3] / (np.linalg.norm(x[:3]) * math.sqrt(c))
        u = x[3:] - c * (x[3:] @ p) * p
        return np.concatenate([p, r * u / np.linalg.norm(u)])
    return space.retract(x)


def test_euclidean_metric_identity():
    E = AmbientSpace.euclidean(2)
    assert metric_at(E, [0.3, -1.0], [1, 0], [1, 0]) == 1.0


def test_heisenberg_frame_is_orthonormal():
    H = AmbientSpace.heisenberg(1)
    frame = heisenberg_frame(H)
    q = np.array([0.7, -1.3, 2.1])
    vecs = [frame[k](q) for k in ("X1", "Y1", "V")]
    gram = np.array([[metric_at(H, q, a, b) for b in vecs] for a in vecs])
    assert np.allclose(gram, np.eye(3), atol=1e-14)


def test_sasaki_tangent_lift_of_u_has_zero_length():
    # r^2 - (1/r^2)(r^2)^2 = 0: the radial vertical direction is not tangent
    S = AmbientSpace.sasaki_bundle(1.0, 1.0)
    q = np.array([0.0, 0.0, 1.0, 1.0, 0.0, 0.0])
    u = q[3:]
    lift = sasaki_tangent_lift(S, lambda p: u)(q)
    assert metric_at(S, q, lift, lift) == pytest.approx(0.0, abs=1e-14)
    # a generic tangent lift has length^2 |X|^2 - <X,u>^2 / r^2
    X = np.array([0.6, 0.8, 0.0])
    lift = sasaki_tangent_lift(S, lambda p: X)(q)
    assert metric_at(S, q, lift, lift) == pytest.approx(1.0 - 0.36, abs=1e-14)


def test_off_manifold_point_raises():
    S = AmbientSpace.round_sphere(2, 1.0)
    with pytest.raises(ConstraintViolation):
        metric_at(S, [1.0, 1.0, 0.0], [0, 0, 1], [0, 0, 1])


def test_berger_at_unit_lambda_matches_round_sphere():
    rng = np.random.default_rng(1)
    B = AmbientSpace.berger_sphere(2.0, 1.0)
    R = AmbientSpace.round_sphere(3, 2.0)
    for _ in range(20):
        x = R.retract(rng.normal(size=4))
        v, w = R.project_tangent(x, rng.normal(size=4)), R.project_tangent(x, rng.normal(size=4))
        assert B.inner(x, v, w) == pytest.approx(R.inner(x, v, w), abs=1e-12)


@pytest.mark.parametrize("space", SPACES, ids=lambda s: s.kind.value)
def test_metric_is_symmetric_positive_on_tangent_space(space):
    rng = np.random.default_rng(0)
    x = random_point(space, rng)
    E = space.tangent_basis(x)
    gram = E.T @ space.metric(x) @ E
    assert np.allclose(gram, gram.T, atol=1e-12)
    assert np.linalg.eigvalsh(gram).min() > 0


@pytest.mark.parametrize("space", SPACES[1:], ids=lambda s: s.kind.value)
def test_connection_is_metric_compatible(space):
    # X g(Y, Z) = g(nabla_X Y, Z) + g(Y, nabla_X Z) with projected constant fields
    rng = np.random.default_rng(2)
    x = random_point(space, rng)
    a, b, d = (rng.normal(size=space.embed_dim) for _ in range(3))

    def fld(c):
        return lambda y: space.project_tangent(space.retract(y), c)

    X = space.project_tangent(x, d)
    eps = 1e-5
    f = lambda y: space.inner(space.retract(y), fld(a)(y), fld(b)(y))
    lhs = (f(x + eps * X) - f(x - eps * X)) / (2 * eps)
    Ya = covariant_derivative(space, fld(a), TangentVector(x, X)).comp
    Yb = covariant_derivative(space, fld(b), TangentVector(x, X)).comp
    rhs = space.inner(x, Ya, fld(b)(x)) + space.inner(x, fld(a)(x), Yb)
    assert lhs == pytest.approx(rhs, abs=1e-6)


def test_heisenberg_connection_values():
    H = AmbientSpace.heisenberg(1)
    fr = heisenberg_frame(H)
    q = np.array([0.4, 1.1, -0.3])
    got = covariant_derivative(H, fr["Y1"], TangentVector(q, fr["X1"](q))).comp
    assert np.allclose(got, 0.5 * fr["V"](q), atol=1e-8)
    vv = covariant_derivative(H, fr["V"], TangentVector(q, fr["V"](q))).comp
    assert np.allclose(vv, 0.0, atol=1e-8)


def test_sasaki_tangent_lift_derivative():
    # nabla_{X^T} Y^T = -(1/r^2) gbar(u, Y) X^T
    S = AmbientSpace.sasaki_bundle(1.0, 1.0)
    q = np.array([0.0, 0.0, 1.0, 0.6, 0.8, 0.0])
    X = lambda p: np.array([1.0, 0.0, 0.0]) - p[0] * p
    Y = lambda p: np.array([0.3, -0.7, 0.0]) - (0.3 * p[0] - 0.7 * p[1]) * p
    XT, YT = sasaki_tangent_lift(S, X), sasaki_tangent_lift(S, Y)
    got = covariant_derivative(S, YT, TangentVector(q, XT(q))).comp
    u = q[3:]
    want = -(u @ Y(q[:3])) * XT(q)
    assert np.allclose(got, want, atol=1e-7)


def test_path_stencil_must_be_odd():
    E = AmbientSpace.euclidean(2)
    pts = np.zeros((4, 2))
    with pytest.raises(StencilError):
        covariant_derivative(E, (pts, pts), TangentVector(np.zeros(2), np.ones(2)))


def test_path_stencil_matches_callable():
    S = AmbientSpace.round_sphere(2, 1.0)
    fld = lambda y: S.project_tangent(S.retract(y), np.array([0.2, 0.5, -0.1]))
    x = S.retract(np.array([0.3, 0.4, 0.8]))
    v = S.project_tangent(x, np.array([1.0, 0.0, 0.0]))
    s = np.linspace(-2, 2, 5) * 1e-3
    pts = np.array([geodesic_shoot(S, x, v, t, ds=1e-4) if t else x for t in s])
    vals = np.array([fld(p) for p in pts])
    a = covariant_derivative(S, (pts, vals), TangentVector(x, v)).comp
    b = covariant_derivative(S, fld, TangentVector(x, v)).comp
    assert np.allclose(a, b, atol=1e-6)


def test_sectional_curvatures():
    S2 = AmbientSpace.round_sphere(2, 1.0)
    p = np.array([0.0, 0.0, 1.0])
    assert sectional_curvature(S2, p, [1, 0, 0], [0, 1, 0]) == pytest.approx(1.0)
    FS = AmbientSpace.fs_sphere(1.0)
    p = np.array([0.0, 0.0, 0.5])
    assert sectional_curvature(FS, p, [1, 0, 0], [0, 1, 0]) == pytest.approx(4.0)
    E = AmbientSpace.euclidean(3)
    assert riemann_at(E, np.zeros(3), [1, 0, 0], [0, 1, 0], [1, 0, 0], [0, 1, 0]) == 0.0


def test_berger_sectional_curvature_matches_round_at_unit_lambda():
    B = AmbientSpace.berger_sphere(1.0, 1.0)
    x = B.retract(np.array([0.3, -0.2, 0.5, 0.7]))
    E = B.tangent_basis(x)
    assert sectional_curvature(B, x, E[:, 0], E[:, 1]) == pytest.approx(1.0, abs=1e-5)


@pytest.mark.parametrize("space", [AmbientSpace.heisenberg(1), AmbientSpace.berger_sphere(1.0, 0.5)],
                         ids=lambda s: s.kind.value)
def test_curvature_symmetries(space):
    rng = np.random.default_rng(3)
    x = random_point(space, rng)
    X, Y, Z, W = (space.project_tangent(x, rng.normal(size=space.embed_dim)) for _ in range(4))
    R = lambda a, b, c, d: riemann_at(space, x, a, b, c, d)
    r = R(X, Y, Z, W)
    assert r == pytest.approx(-R(Y, X, Z, W), abs=1e-8)
    assert r == pytest.approx(R(Z, W, X, Y), abs=1e-6)
    bianchi = R(X, Y, Z, W) + R(Y, Z, X, W) + R(Z, X, Y, W)
    assert abs(bianchi) < 1e-6


def test_geodesic_great_circle_period():
    S2 = AmbientSpace.round_sphere(2, 1.0)
    p = np.array([1.0, 0.0, 0.0])
    q = geodesic_shoot(S2, p, [0, 1.0, 0], 2 * math.pi)
    assert np.linalg.norm(q - p) < 1e-6


def test_geodesic_euclidean_is_straight():
    E = AmbientSpace.euclidean(2)
    assert np.array_equal(geodesic_shoot(E, [1.0, 2.0], [0.5, -1.0], 2.0), np.array([2.0, 0.0]))


def test_heisenberg_vertical_geodesic():
    H = AmbientSpace.heisenberg(1)
    q = geodesic_shoot(H, np.zeros(3), [0, 0, 1.0], 1.0)
    assert np.allclose(q, [0, 0, 1.0], atol=1e-10)


def test_geodesic_needs_velocity():
    with pytest.raises(IntegrationError):
        geodesic_shoot(AmbientSpace.round_sphere(2), [0, 0, 1.0], [0, 0, 0], 1.0)


def test_geodesic_speed_conserved_on_heisenberg():
    H = AmbientSpace.heisenberg(1)
    p, v = np.zeros(3), np.array([1.0, 0.3, 0.2])
    q = geodesic_shoot(H, p, v, 1.0 - 1e-3)
    q2 = geodesic_shoot(H, p, v, 1.0 + 1e-3)
    speed = H.norm(q, (q2 - q) / 2e-3)
    assert speed == pytest.approx(H.norm(p, v), rel=1e-5)


@pytest.mark.parametrize("space", [AmbientSpace.heisenberg(1), AmbientSpace.sasaki_bundle(1.0, 1.0)],
                         ids=lambda s: s.kind.value)
def test_connection_tables_pass(space):
    rep = validate_connection_tables(space, n_samples=20)
    assert rep.passed, rep.residuals


def test_connection_tables_unsupported():
    with pytest.raises(UnsupportedSpace):
        validate_connection_tables(AmbientSpace.round_sphere(2))


def test_space_round_trip():
    for s in SPACES:
        assert AmbientSpace.from_dict(s.to_dict()) == s


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_retract_lands_on_sphere(xs):
    S = AmbientSpace.round_sphere(3, 2.0)
    x = np.array(xs)
    if np.linalg.norm(x) < 1e-3:
        return
    y = S.retract(x)
    assert abs(y @ y - 0.5) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_tangent_projector_is_idempotent(seed):
    rng = np.random.default_rng(seed)
    for space in (AmbientSpace.berger_sphere(1.0, 0.3), AmbientSpace.sasaki_bundle(1.0, 2.0)):
        x = random_point(space, rng)
        v = rng.normal(size=space.embed_dim)
        p1 = space.project_tangent(x, v)
        assert np.allclose(space.project_tangent(x, p1), p1, atol=1e-10)
