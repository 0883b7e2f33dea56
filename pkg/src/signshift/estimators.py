"""scikit-learn style wrappers around the classifier and the limiting-absorption sweep."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .complementing import check_pair
from .lab import Scenario, detect_resonance, run_sweep
from .reflectmap import classify


class ComplementingClassifier(ClassifierMixin, BaseEstimator):
    """Predict whether coefficient pairs satisfy the complementing condition.

    ``X`` has shape ``(n, 2, d, d)`` (pairs ``A1, A2``); the normal is fixed by
    ``normal`` (default ``e_d``).  There is nothing to learn: ``fit`` only
    records the label set.
    """

    def __init__(self, normal: Optional[Sequence[float]] = None):
        self.normal = normal

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 4 or X.shape[1] != 2 or X.shape[2] != X.shape[3]:
            raise ValueError("X must have shape (n, 2, d, d)")
        self.classes_ = np.array([False, True])
        self.n_features_in_ = int(X.shape[2] ** 2 * 2)
        return self

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        d = X.shape[2]
        e = np.eye(d)[-1] if self.normal is None else np.asarray(self.normal, dtype=float)
        return np.array([check_pair(p[0], p[1], e).holds for p in X])


class ConditionClassifier(BaseEstimator):
    """Label scenarios ``Thm0``/``Thm1``/``Thm2``/``Resonant``/``Unknown``."""

    def __init__(self, n_samples: int = 400):
        self.n_samples = n_samples

    def fit(self, X=None, y=None):
        self.classes_ = np.array(["Resonant", "Thm0", "Thm1", "Thm2", "Unknown"])
        return self

    def predict(self, X: Sequence[Scenario]) -> np.ndarray:
        return np.array([classify(s, self.n_samples).tag for s in X])


class LimitingAbsorptionEstimator(BaseEstimator):
    """Run the absorption sweep on a scenario and expose the fitted growth exponents.

    After ``fit`` the attributes ``report_``, ``verdict_`` and
    ``growth_exponent_`` (largest fitted ``p``) are available; ``predict``
    returns the resonance tag of each scenario, reusing the fitted report when
    the scenario hash matches.
    """

    def __init__(self, n_fit: int = 3):
        self.n_fit = n_fit

    def fit(self, X: Scenario, y=None):
        self.report_ = run_sweep(X, n_fit=self.n_fit)
        self.verdict_ = detect_resonance(self.report_)
        ps = [f.p for f in self.report_.fits if np.isfinite(f.p)]
        self.growth_exponent_ = max(ps) if ps else float("nan")
        self.lemma_constant_ = self.report_.lemma_constant
        return self

    def predict(self, X: Sequence[Scenario]) -> np.ndarray:
        out = []
        for s in X:
            if hasattr(self, "report_") and s.hash == self.report_.scenario.hash:
                out.append(self.verdict_.tag)
            else:
                out.append(detect_resonance(run_sweep(s, n_fit=self.n_fit)).tag)
        return np.array(out)
