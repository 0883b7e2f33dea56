import copy

import numpy as np
from sklearn.base import clone

from signshift import lab
from signshift.estimators import ComplementingClassifier, ConditionClassifier, LimitingAbsorptionEstimator


def test_complementing_classifier():
    X = np.array([
        [np.eye(2), 2 * np.eye(2)],
        [np.eye(2), np.diag([2.0, 0.5])],
        [np.eye(2), np.eye(2)],
    ])
    clf = ComplementingClassifier().fit(X)
    np.testing.assert_array_equal(clf.predict(X), [True, False, False])
    assert clf.score(X, [True, False, False]) == 1.0
    assert clone(clf).get_params() == {"normal": None}


def test_condition_classifier():
    scns = [lab.load_scenario(n) for n in ("cor0_contrast3", "cor3_sigma_0.5", "kelvin_annulus_resonant")]
    clf = ConditionClassifier(n_samples=200).fit()
    np.testing.assert_array_equal(clf.predict(scns), ["Thm0", "Thm2", "Resonant"])


def test_limiting_absorption_estimator():
    cfg = copy.deepcopy(lab.load_scenario("cor3_sigma_0.5").config)
    cfg["sweep"]["deltas"] = [1e-1, 1e-2, 1e-4, 1e-5, 1e-6]
    scn = lab.scenario_from_dict(cfg)
    est = LimitingAbsorptionEstimator().fit(scn)
    assert est.verdict_.tag == "Stable"
    assert abs(est.growth_exponent_) <= 0.05
    assert est.lemma_constant_ > 0
    np.testing.assert_array_equal(est.predict([scn]), ["Stable"])
