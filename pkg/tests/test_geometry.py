import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from signshift.errors import AmbiguousProjection, ValidationError
from signshift.geometry import Circle, Ellipse, InterfaceGeometry, foot_point, make_geometry, sample_tube, signed_distance


def ellipse_nearest_bruteforce(a, b, x, n=10**6):
    """Dense sampling oracle, refined by a second dense pass around the best sample."""
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    d = np.hypot(a * np.cos(t) - x[0], b * np.sin(t) - x[1])
    t0 = t[np.argmin(d)]
    t = t0 + np.linspace(-4 * np.pi / n, 4 * np.pi / n, n)
    d = np.hypot(a * np.cos(t) - x[0], b * np.sin(t) - x[1])
    i = np.argmin(d)
    return np.array([a * np.cos(t[i]), b * np.sin(t[i])]), d[i]


@pytest.fixture
def unit():
    return make_geometry([Circle((0.0, 0.0), 1.0)], 0.1)


@pytest.fixture
def ellipse():
    return make_geometry([Ellipse((0.0, 0.0), 2.0, 1.0)], 0.1)


def test_signed_distance_circle(unit):
    assert signed_distance(unit, (0.5, 0.0)) == pytest.approx(0.5, abs=1e-15)
    assert signed_distance(unit, (1.0, 0.0)) == pytest.approx(0.0, abs=1e-15)
    assert signed_distance(unit, (1.3, 0.0)) == pytest.approx(-0.3, abs=1e-15)


def test_signed_distance_ellipse_matches_dense_sampling(ellipse):
    x = np.array([0.0, 1.5])
    _, d = ellipse_nearest_bruteforce(2.0, 1.0, x)
    assert signed_distance(ellipse, x) == pytest.approx(-d, abs=1e-10)
    assert signed_distance(ellipse, x) == pytest.approx(-0.5, abs=1e-12)


def test_foot_point_circle(unit):
    bp = foot_point(unit, (0.5, 0.0))
    np.testing.assert_allclose(bp.position, [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(bp.normal, [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(foot_point(unit, (1.3, 0.0)).position, [1.0, 0.0], atol=1e-15)


def test_foot_point_ellipse_matches_dense_sampling(ellipse):
    x = np.array([1.9, 0.05])
    ref, dref = ellipse_nearest_bruteforce(2.0, 1.0, x)
    bp = foot_point(ellipse, x)
    np.testing.assert_allclose(bp.position, ref, atol=1e-8)
    assert np.linalg.norm(x - bp.position) == pytest.approx(dref, abs=1e-10)


def test_foot_point_beyond_reach(unit):
    with pytest.raises(AmbiguousProjection):
        foot_point(unit, (0.0, 0.0))


def test_sample_tube_membership(unit):
    inner = sample_tube(unit, "inner", 100)
    r = np.hypot(*inner.points.T)
    assert len(inner) == 100
    assert np.all((r > 0.9) & (r < 1.0))
    outer = sample_tube(unit, "outer", 100)
    r = np.hypot(*outer.points.T)
    assert np.all((r > 1.0) & (r < 1.1))


def test_sample_tube_stratified_near_interface(unit):
    s = sample_tube(unit, "inner", 200)
    assert np.mean(np.abs(s.signed_distance) < unit.tau / 10) >= 0.10
    assert np.all((np.abs(s.signed_distance) > 0) & (np.abs(s.signed_distance) < unit.tau))


def test_sample_tube_component_labels():
    g = make_geometry([Circle((-2.0, 0.0), 1.0), Circle((2.0, 0.0), 0.5)], 0.1)
    s = sample_tube(g, "outer", 150)
    for p, c in zip(s.points, s.component):
        assert g.foot_point(p).component == c
    assert set(np.unique(s.component)) == {0, 1}


def test_annulus_orientation_and_inside():
    g = make_geometry([Circle((0.0, 0.0), 0.5), Circle((0.0, 0.0), 1.0)], 0.1)
    assert g.inside(np.array([[0.75, 0.0]]))[0]
    assert not g.inside(np.array([[0.2, 0.0]]))[0]
    assert not g.inside(np.array([[1.2, 0.0]]))[0]
    bp = g.foot_point((0.45, 0.0))
    # nu points out of D: toward the center on the inner circle
    np.testing.assert_allclose(bp.normal, [-1.0, 0.0], atol=1e-15)
    assert bp.curvature == pytest.approx(-2.0)


def test_validation_errors():
    with pytest.raises(ValidationError):
        InterfaceGeometry([Circle((0.0, 0.0), 1.0)], 1.0)
    with pytest.raises(ValidationError):
        InterfaceGeometry([Ellipse((0.0, 0.0), 2.0, 1.0)], 0.6)  # reach b^2/a = 0.5
    with pytest.raises(ValidationError):
        InterfaceGeometry([Circle((0.0, 0.0), 1.0), Circle((1.5, 0.0), 1.0)], 0.1)


@given(st.floats(0.0, 2 * np.pi), st.floats(1e-3, 0.099))
def test_signed_distance_flips_across_interface_ellipse(theta, t):
    g = make_geometry([Ellipse((0.3, -0.2), 2.0, 1.0, 0.4)], 0.1)
    c = g.components[0]
    p = c.point(theta)
    nu = c.normal(theta)
    assert g.signed_distance(p - t * nu) == pytest.approx(t, abs=1e-10)
    assert g.signed_distance(p + t * nu) == pytest.approx(-t, abs=1e-10)


@given(st.floats(0.2, 5.0), st.floats(0.0, 2 * np.pi))
def test_circle_curvature_times_radius(radius, theta):
    g = make_geometry([Circle((0.0, 0.0), radius)], 0.1 * radius)
    bp = g.foot_point(radius * np.array([np.cos(theta), np.sin(theta)]) * 0.99)
    assert bp.curvature * radius == pytest.approx(1.0, rel=1e-14)
    assert abs(np.linalg.norm(bp.normal) - 1.0) <= 1e-12


@given(st.sampled_from(["inner", "outer"]), st.integers(1, 300))
def test_distance_equals_foot_point_distance(side, n):
    g = make_geometry([Ellipse((0.0, 0.0), 1.5, 1.0, 0.3), Circle((4.0, 0.0), 0.7)], 0.15)
    s = g.sample_tube(side, n)
    for p, sd in s:
        bp = g.foot_point(p)
        assert abs(abs(sd) - np.linalg.norm(p - bp.position)) <= 1e-10
        assert abs(g.signed_distance(p) - sd) <= 1e-10
