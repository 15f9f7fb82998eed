"""scikit-learn style wrappers around the estimator and the flow.

The geometric objects are not feature matrices, so ``X`` here is a
:class:`~submcf.immersions.DiscreteImmersion` (or a list of them).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .flow import FlowPolicy, run_flow
from .immersions import DiscreteImmersion, PinchingCondition, fundamental_forms, pinching_margin


def _as_list(X):
    return [X] if isinstance(X, DiscreteImmersion) else list(X)


class FundamentalForms(TransformerMixin, BaseEstimator):
    """Per-vertex ``[|A|^2, |H|^2, margins...]`` for each immersion.

    ``conditions`` is a list of :class:`PinchingCondition`; one margin column
    is appended per condition.
    """

    def __init__(self, conditions=()):
        self.conditions = conditions

    def fit(self, X, y=None):
        self.n_features_out_ = 2 + len(self.conditions)
        return self

    def transform(self, X):
        out = []
        for imm in _as_list(X):
            f = fundamental_forms(imm, frames=False)
            cols = [f.A2, f.H2] + [pinching_margin(f, c)[0] for c in self.conditions]
            out.append(np.column_stack(cols))
        return out[0] if isinstance(X, DiscreteImmersion) else out

    def get_feature_names_out(self, input_features=None):
        names = ["A2", "H2"] + [f"margin_{c.name}" for c in self.conditions]
        return np.array(names, dtype=object)


class MeanCurvatureFlow(BaseEstimator):
    """Runs the flow on ``fit``; ``trace_`` and ``report_`` hold the results."""

    def __init__(self, horizon=1.0, sample_interval=0.05, target_h=None, safety=0.5, max_A2=1e4,
                 diameter_factor=10.0, minimal_H2=1e-8, submersion=None, conditions=()):
        self.horizon = horizon
        self.sample_interval = sample_interval
        self.target_h = target_h
        self.safety = safety
        self.max_A2 = max_A2
        self.diameter_factor = diameter_factor
        self.minimal_H2 = minimal_H2
        self.submersion = submersion
        self.conditions = conditions

    def _policy(self):
        return FlowPolicy(
            horizon=self.horizon,
            sample_interval=self.sample_interval,
            target_h=self.target_h,
            safety=self.safety,
            max_A2=self.max_A2,
            diameter_factor=self.diameter_factor,
            minimal_H2=self.minimal_H2,
        )

    def fit(self, X, y=None):
        self.trace_, self.report_ = run_flow(X, self._policy(), sub=self.submersion, conditions=self.conditions)
        return self

    def predict(self, X=None):
        """Outcome label of the fitted run."""
        return self.report_.outcome.value


__all__ = ["FundamentalForms", "MeanCurvatureFlow", "PinchingCondition"]
