import numpy as np
import pytest
from sklearn.base import clone

from submcf import families as F
from submcf.estimators import FundamentalForms, MeanCurvatureFlow
from submcf.immersions import DiscreteImmersion, PinchingCondition, fundamental_forms


def test_forms_transformer_single_and_list():
    imm = F.plane_circle(1.0, 0.1)
    cond = PinchingCondition.heisenberg_cylinder(3)
    t = FundamentalForms(conditions=[cond]).fit(imm)
    X = t.transform(imm)
    assert X.shape == (imm.n_vertices, 3)
    assert np.allclose(X[:, 0], fundamental_forms(imm).A2)
    assert list(t.get_feature_names_out()) == ["A2", "H2", f"margin_{cond.name}"]
    many = t.transform([imm, F.plane_circle(2.0, 0.2)])
    assert len(many) == 2 and many[1].shape[1] == 3


def test_flow_estimator_predicts_outcome():
    est = MeanCurvatureFlow(horizon=1.0, sample_interval=0.05, safety=1.0)
    assert est.fit(F.plane_circle(1.0, 0.1)).predict() == "SHRINKS_TO_POINT"
    assert est.report_.T_singular == pytest.approx(0.5, rel=0.02)


def test_params_and_clone():
    est = MeanCurvatureFlow(horizon=0.3, safety=0.9)
    p = est.get_params()
    assert p["horizon"] == 0.3 and p["safety"] == 0.9
    c = clone(est)
    assert c.get_params() == p and not hasattr(c, "trace_")
    est.set_params(horizon=0.7)
    assert est.horizon == 0.7


def test_catalog_builds_every_family():
    for name, (builder, schema, _) in F.CATALOG.items():
        out = F.build(name, h=0.2)
        imm = out[2] if isinstance(out, tuple) else out
        assert isinstance(imm, DiscreteImmersion)
        assert set(schema) <= set(builder.__code__.co_varnames)
    with pytest.raises(KeyError):
        F.build("nope")
