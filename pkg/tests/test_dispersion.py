import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diamond.dispersion import (DiscreteGeometry, DispersionProblem, PoleError, P_r1, P_simple,
                                bisect_roots, boundary_curve, continuous_zero_set, cubic_problem,
                                discrete_zero_set, emit_dispersion_curves, h_map, jacobian_h,
                                p_continuous, simple_roots_at, to_square_frequencies, wave_problem,
                                wave_stability_curve, wave_stable)

WAVE = wave_problem()
UNIT = DiscreteGeometry(1.0, 1.0)


def test_p_examples(rng):
    assert abs(p_continuous(WAVE, 1.0, 1.0)) < 1e-14
    assert p_continuous(WAVE, 2.0, 0.0) == pytest.approx(4.0)
    assert abs(p_continuous(WAVE, 0.0, 0.0)) < 1e-14
    xi, om = rng.uniform(-5, 5, (2, 25))
    assert np.allclose(p_continuous(WAVE, xi, om), xi**2 - om**2, atol=1e-12)


def test_problem_requires_one_form():
    with pytest.raises(ValueError):
        DispersionProblem()
    with pytest.raises(ValueError):
        DispersionProblem(np.eye(2), np.eye(2), np.eye(2), custom_p=lambda a, b: a)
    with pytest.raises(ValueError):
        DiscreteGeometry(1.0, 0.0)


def test_h_examples():
    assert np.allclose(h_map(0.0, 0.0, UNIT), (0.0, 0.0))
    assert np.allclose(h_map(np.pi, 0.0, UNIT), (4.0, 0.0))
    with pytest.raises(PoleError):
        h_map(np.pi, np.pi, UNIT)


@settings(max_examples=50)
@given(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0), st.floats(0.1, 2.0))
def test_h_is_odd(x, y, lam):
    g = DiscreteGeometry.from_lambda(lam)
    a = np.array(h_map(x, y, g))
    b = np.array(h_map(-x, -y, g))
    assert np.allclose(a, -b, atol=1e-12)


def test_h_small_argument_limit():
    g = DiscreteGeometry(0.1, 0.05)
    x, y = 1e-4, 2e-4
    xi, om = h_map(x, y, g)
    assert xi == pytest.approx(x / g.dx, rel=1e-7) and om == pytest.approx(y / g.dt, rel=1e-7)


def test_P_simple_examples():
    g = DiscreteGeometry.from_lambda(0.5)
    assert abs(P_simple(WAVE, np.pi, np.pi / 3, g)) < 1e-12
    assert abs(P_simple(WAVE, 0.0, 0.0, g)) < 1e-14
    assert abs(P_simple(WAVE, np.pi / 2, np.pi / 2, UNIT)) < 1e-12


def test_P_r1_matches_P_simple_on_grid():
    for lam in (0.5, 1.0, 2.0):
        g = DiscreteGeometry.from_lambda(lam, dx=0.7)
        x, y = np.meshgrid(np.linspace(-2.9, 2.9, 21), np.linspace(-2.9, 2.9, 21))
        xt, ot = to_square_frequencies(x, y)
        assert np.abs(P_r1(WAVE, xt, ot, g) - P_simple(WAVE, x, y, g)).max() < 1e-10
    assert abs(P_r1(WAVE, 0.0, 0.0, UNIT) - np.linalg.det(-WAVE.S_matrix)) < 1e-14


def test_P_r1_general_linear_system(rng):
    K = rng.normal(size=(4, 4))
    L = rng.normal(size=(4, 4))
    S = rng.normal(size=(4, 4))
    prob = DispersionProblem(K - K.T, L - L.T, S + S.T)
    g = DiscreteGeometry(0.3, 0.2)
    x, y = rng.uniform(-2.5, 2.5, (2, 30))
    a = P_r1(prob, *to_square_frequencies(x, y), g)
    b = P_simple(prob, x, y, g)
    assert np.abs(a - b).max() <= 1e-10 * max(1.0, np.abs(b).max())


def test_jacobian():
    J, d = jacobian_h(0.0, 0.0, UNIT)
    assert np.allclose(J, np.eye(2)) and d == pytest.approx(1.0)
    x, y = np.meshgrid(np.linspace(-3, 3, 41), np.linspace(-3, 3, 41))
    for lam in (0.1, 0.5, 1.0, 2.0):
        g = DiscreteGeometry.from_lambda(lam)
        J, d = jacobian_h(x, y, g)
        assert np.all(d > 0)
        Jm, _ = jacobian_h(-x, -y, g)
        assert np.allclose(J, Jm)


def test_jacobian_matches_finite_difference(rng):
    g = DiscreteGeometry(0.4, 0.3)
    x, y = rng.uniform(-2, 2, 2)
    J, _ = jacobian_h(x, y, g)
    e = 1e-6
    col_x = (np.array(h_map(x + e, y, g)) - np.array(h_map(x - e, y, g))) / (2 * e)
    col_y = (np.array(h_map(x, y + e, g)) - np.array(h_map(x, y - e, g))) / (2 * e)
    assert np.allclose(J, np.stack([col_x, col_y], axis=1), rtol=1e-7)


def test_stability_curve_and_boundary():
    assert wave_stability_curve(np.pi, 0.5) == pytest.approx(np.pi / 3)
    assert wave_stability_curve(np.pi, 1.0) == pytest.approx(np.pi)
    assert wave_stability_curve(np.pi, 2.0) is None
    g = DiscreteGeometry(1.0, 1.0)
    assert boundary_curve(0.0, g) == pytest.approx(4.0)
    big = 1e8
    assert boundary_curve(big, DiscreteGeometry.from_lambda(0.5)) / big == pytest.approx(2.0)
    assert wave_stable(DiscreteGeometry.from_lambda(0.5))
    assert wave_stable(DiscreteGeometry.from_lambda(1.0))
    assert not wave_stable(DiscreteGeometry.from_lambda(2.0))


def test_bisect_roots_simple():
    r = bisect_roots(np.cos, 0.0, 10.0, 64)
    assert np.allclose(r, [np.pi / 2, 3 * np.pi / 2, 5 * np.pi / 2])
    with np.errstate(divide="ignore"):
        r = bisect_roots(lambda t: 1 / (t - 0.5), 0.0, 1.0, 11)
    assert r.size == 0
    r = bisect_roots(lambda t: np.tan(t), 1.0, 4.0, 10)
    assert np.allclose(r, [np.pi])


def _curve_grid(lam, n=17):
    x = np.linspace(-np.pi, np.pi, n)
    # at lam = 1 the endpoints (+-pi, +-pi) sit on a pole of h
    return x[1:-1] if lam == 1.0 else x


@pytest.mark.parametrize("lam", [0.5, 1.0])
def test_simple_roots_follow_stability_curve(lam):
    g = DiscreteGeometry.from_lambda(lam)
    for x in _curve_grid(lam):
        want = wave_stability_curve(x, lam)
        roots = simple_roots_at(WAVE, x, g, resolution=256)
        assert np.min(np.abs(roots - want)) < 1e-8
        assert np.min(np.abs(roots + want)) < 1e-8


def test_unstable_lambda_has_no_root_at_pi():
    assert simple_roots_at(WAVE, np.pi, DiscreteGeometry.from_lambda(2.0)).size == 0


def test_cubic_continuous_curve():
    cub = cubic_problem()
    assert abs(p_continuous(cub, 0.0, 0.0)) == 0
    assert abs(p_continuous(cub, 1.0, 0.0)) == 0
    pts = continuous_zero_set(cub, 2.0, 10.0, resolution=40)
    assert np.allclose(pts[:, 1], pts[:, 0] - pts[:, 0] ** 3, atol=1e-10)


def test_discrete_zero_set_maps_onto_continuous_curve():
    g = DiscreteGeometry.from_lambda(0.5)
    pts = discrete_zero_set(WAVE, g, resolution=32)
    xi, om = h_map(pts[:, 0], pts[:, 1], g)
    assert len(pts) > 0 and np.abs(xi**2 - om**2).max() < 1e-8 * max(1, np.abs(xi).max() ** 2)


def test_lambda_one_curve_reaches_corner():
    g = DiscreteGeometry.from_lambda(1.0)
    for d in (1e-2, 1e-4, 1e-6):
        roots = simple_roots_at(WAVE, np.pi - d, g)
        assert np.min(np.abs(roots - (np.pi - d))) < 1e-8
    rows = emit_dispersion_curves(WAVE, lambdas=(1.0,), resolution=32)
    pts = np.array([(r[3], r[4]) for r in rows if r[0] == "lambda=1"])
    assert np.min(np.hypot(pts[:, 0] - np.pi, pts[:, 1] - np.pi)) <= np.sqrt(2) * 2 * np.pi / 32 + 1e-12
    assert any(r[0] == "continuous" for r in rows)
