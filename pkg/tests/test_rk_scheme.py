import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diamond.harness_cli import breather_z
from diamond.mesh import MeshParams, ZigzagState, corner_position, node_coords, transform_coeffs, transform_coeffs_raw
from diamond.nonlinear import SolverConfig
from diamond.rk_scheme import (EdgeData, StageBlock, map_simple_to_r1, r1_residuals, reduced_wave_solve,
                               rk_half_step, rk_init, rk_run, solve_corner_extension, solve_stages,
                               stage_residual, update_edges)
from diamond.simple_scheme import simple_diamond_update
from diamond.system import MultiHamiltonianSystem, make_linear_system, make_wave_system, sine_gordon
from diamond.tableau import build_B, gauss_tableau


def _params(r, N=60, lam=0.5):
    return MeshParams.from_lambda(N, lam, r=r)


def _random_edges(rng, B, r, n=3, scale=1.0):
    return EdgeData(rng.uniform(-scale, scale, (B, n)), rng.uniform(-scale, scale, (B, r, n)),
                    rng.uniform(-scale, scale, (B, r, n)))


def _random_linear(rng, n=4):
    K = rng.normal(size=(n, n))
    L = rng.normal(size=(n, n))
    S = rng.normal(size=(n, n))
    return make_linear_system(K - K.T, L - L.T, S + S.T)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_equilibrium_edges(sg, r):
    tab = gauss_tableau(r)
    p = _params(r)
    z = np.array([np.pi, 0.0, 0.0])
    edges = EdgeData(z[None], np.tile(z, (1, r, 1)), np.tile(z, (1, r, 1)))
    st_ = solve_stages(sg, tab, transform_coeffs(sg, p), edges)
    assert np.abs(st_.Z - z).max() < 1e-13
    assert np.abs(st_.X).max() < 1e-13 and np.abs(st_.T).max() < 1e-13
    right, top = update_edges(st_, edges, tab)
    assert np.allclose(right, z) and np.allclose(top, z)


def _dense_oracle(sys_, tab, coeffs, left, bottom):
    """Solve all 3 r^2 n linear stage equations at once, assembled entry by entry."""
    r, n = tab.r, left.shape[-1]
    idx = lambda blk, i, j: (blk * r * r + i * r + j) * n
    m = 3 * r * r * n
    A = np.zeros((m, m))
    rhs = np.zeros(m)
    I = np.eye(n)
    row = 0
    for i in range(r):
        for j in range(r):
            # Z_ij - sum_k a_ik X_kj = left_j
            A[row:row + n, idx(0, i, j):idx(0, i, j) + n] += I
            for k in range(r):
                A[row:row + n, idx(1, k, j):idx(1, k, j) + n] -= tab.A[i, k] * I
            rhs[row:row + n] = left[j]
            row += n
            # Z_ij - sum_k a_jk T_ik = bottom_i
            A[row:row + n, idx(0, i, j):idx(0, i, j) + n] += I
            for k in range(r):
                A[row:row + n, idx(2, i, k):idx(2, i, k) + n] -= tab.A[j, k] * I
            rhs[row:row + n] = bottom[i]
            row += n
            # Kt T_ij + Lt X_ij - S Z_ij = 0
            A[row:row + n, idx(2, i, j):idx(2, i, j) + n] += coeffs.K_tilde
            A[row:row + n, idx(1, i, j):idx(1, i, j) + n] += coeffs.L_tilde
            A[row:row + n, idx(0, i, j):idx(0, i, j) + n] -= sys_.hess_S(np.zeros(n))
            row += n
    sol = np.linalg.solve(A, rhs).reshape(3, r, r, n)
    return sol[0], sol[1], sol[2]


@pytest.mark.parametrize("r", [1, 2, 3])
def test_linear_dense_oracle(rng, r):
    sys_ = _random_linear(rng)
    tab = gauss_tableau(r)
    coeffs = transform_coeffs(sys_, _params(r))
    edges = _random_edges(rng, 1, r, n=4)
    st_ = solve_stages(sys_, tab, coeffs, edges)
    Z, X, T = _dense_oracle(sys_, tab, coeffs, edges.left[0], edges.bottom[0])
    assert np.abs(st_.Z[0] - Z).max() < 1e-10
    assert np.abs(st_.X[0] - X).max() < 1e-10
    assert np.abs(st_.T[0] - T).max() < 1e-10


def test_single_diamond_shapes(sg, rng):
    tab = gauss_tableau(2)
    e = _random_edges(rng, 1, 2)
    one = solve_stages(sg, tab, transform_coeffs(sg, _params(2)), EdgeData(e.corner[0], e.left[0], e.bottom[0]))
    assert one.Z.shape == (2, 2, 3)


def test_r1_stage_is_edge_average(sg, rng):
    tab = gauss_tableau(1)
    edges = _random_edges(rng, 20, 1)
    st_ = solve_stages(sg, tab, transform_coeffs(sg, _params(1)), edges)
    right, top = update_edges(st_, edges, tab)
    avg = (edges.left + edges.bottom + right + top) / 4
    assert np.abs(st_.Z[:, 0] - avg).max() < 1e-13
    assert np.abs(top + edges.bottom - edges.left - right).max() < 1e-13


def test_update_edges_example():
    tab = gauss_tableau(2)
    X = np.zeros((1, 2, 2, 1))
    T = np.zeros((1, 2, 2, 1))
    X[0, :, 0, 0] = [2.0, 4.0]
    T[0, 1, :, 0] = [6.0, 8.0]
    edges = EdgeData(np.zeros((1, 1)), np.ones((1, 2, 1)), np.full((1, 2, 1), 10.0))
    right, top = update_edges(StageBlock(None, X, T), edges, tab)
    assert np.allclose(right[0, :, 0], [4.0, 1.0])
    assert np.allclose(top[0, :, 0], [10.0, 17.0])


@pytest.mark.parametrize("r", [1, 2, 3, 4])
def test_corner_extension(rng, r):
    tab = gauss_tableau(r)
    c = np.array([[1.0, -2.0]])
    eq = EdgeData(c, np.tile(c, (1, r, 1)), np.tile(c, (1, r, 1)))
    cr, ct = solve_corner_extension(tab, eq)
    assert np.allclose(cr, c) and np.allclose(ct, c)
    e = _random_edges(rng, 1, r, n=2)
    cr, ct = solve_corner_extension(tab, e)
    X0 = np.linalg.solve(tab.A, e.bottom[0] - e.corner[0])
    X1 = np.linalg.solve(tab.A, e.left[0] - e.corner[0])
    assert np.abs(cr[0] - (e.corner[0] + tab.b @ X0)).max() < 1e-12
    assert np.abs(ct[0] - (e.corner[0] + tab.b @ X1)).max() < 1e-12


def test_r1_corner_extension_is_reflection(rng):
    tab = gauss_tableau(1)
    e = _random_edges(rng, 5, 1)
    cr, ct = solve_corner_extension(tab, e)
    assert np.allclose((e.corner + cr) / 2, e.bottom[:, 0])
    assert np.allclose((e.corner + ct) / 2, e.left[:, 0])


@pytest.mark.parametrize("r", [1, 2, 3])
def test_reduced_wave_matches_full_solve(sg, rng, r):
    tab = gauss_tableau(r)
    p = _params(r)
    edges = _random_edges(rng, 10, r)
    a = reduced_wave_solve(sg, tab, p, edges)
    b = solve_stages(sg, tab, transform_coeffs(sg, p), edges)
    assert np.abs(a.Z - b.Z).max() < 1e-9


def test_reduced_wave_free_wave_is_linear_solve(rng):
    wave = make_wave_system(lambda u: 0 * u, lambda u: 0 * u, lipschitz_const=0.0)
    tab = gauss_tableau(2)
    p = _params(2)
    edges = _random_edges(rng, 3, 2)
    hist = []
    a = reduced_wave_solve(wave, tab, p, edges, history=hist)
    assert hist[-1] < 1e-12 and len(hist) <= 2
    b = solve_stages(wave, tab, transform_coeffs(wave, p), edges)
    assert np.abs(a.Z - b.Z).max() < 1e-10


def test_reduced_wave_contraction_factor(sg, rng):
    tab = gauss_tableau(2)
    p = MeshParams.from_lambda(20, 0.5, r=2)
    B = build_B(tab, p.lam).B
    q = p.dt**2 * np.abs(np.linalg.inv(B)).sum(axis=1).max()
    assert q < 1
    hist = []
    reduced_wave_solve(sg, tab, p, _random_edges(rng, 1, 2, scale=2.0), history=hist)
    d = np.array(hist)
    d = d[d > 1e-13]
    assert np.all(d[1:] <= q * d[:-1] * (1 + 1e-8))


def test_reduced_wave_warns_past_bound(sg, rng):
    tab = gauss_tableau(1)
    p = MeshParams(3, 8.0, r=1)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        try:
            reduced_wave_solve(sg, tab, p, _random_edges(rng, 1, 1), SolverConfig(max_iter=5))
        except Exception:
            pass
    assert any(issubclass(x.category, RuntimeWarning) for x in w)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_time_symmetry_per_diamond(sg, rng, r):
    tab = gauss_tableau(r)
    p = _params(r)
    e = _random_edges(rng, 4, r, scale=0.8)
    fwd = solve_stages(sg, tab, transform_coeffs(sg, p), e)
    right, top = update_edges(fwd, e, tab)
    back = EdgeData(np.full_like(e.corner, np.nan), top[:, ::-1], right[:, ::-1])
    bst = solve_stages(sg, tab, transform_coeffs_raw(sg.K, sg.L, p.dx, -p.dt), back)
    r2, t2 = update_edges(bst, back, tab)
    assert np.abs(r2[:, ::-1] - e.bottom).max() < 1e-8
    assert np.abs(t2[:, ::-1] - e.left).max() < 1e-8


def test_rk_init_examples():
    tab = gauss_tableau(2)
    p = _params(2, N=10)
    c = np.array([1.0, 2.0, 3.0])
    s = rk_init(lambda x: np.tile(c, (len(x), 1)), lambda x: np.zeros((len(x), 3)), tab, p)
    assert s.values.shape == (10, 5, 3) and np.allclose(s.values, c)
    s = rk_init(None, None, tab, p, mode="exact", z_exact=breather_z)
    x, t = node_coords(p, 0)
    assert np.allclose(s.values, breather_z(x.ravel(), t.ravel()).reshape(10, 5, 3))
    x0, t0 = corner_position(p, 0, 3)
    assert np.allclose(s.corner()[3], breather_z(np.array([x0]), t0)[0])
    s = rk_init(lambda x: np.zeros((len(x), 3)), lambda x: np.ones((len(x), 3)), tab, p)
    assert np.allclose(s.values[..., 0], t)
    with pytest.raises(ValueError):
        rk_init(None, None, tab, p, mode="exact")
    with pytest.raises(ValueError):
        rk_init(None, None, tab, p, mode="bogus")


def test_map_simple_to_r1_example():
    l, b, r, t = map_simple_to_r1(0.0, 2.0, 4.0, 6.0)
    assert (l, b, r, t) == (1.0, 3.0, 5.0, 3.0)


def test_simple_corners_solve_r1_equations(sg, rng):
    p = _params(1)
    zl, zb, zr = rng.uniform(-1, 1, (3, 30, 3))
    zt = simple_diamond_update(sg, zl, zb, zr, p)
    dyn, con = r1_residuals(sg, transform_coeffs(sg, p), *map_simple_to_r1(zl, zb, zr, zt))
    assert dyn.max() < 1e-10 and con.max() < 1e-13


def test_half_step_equilibrium_and_level(sg):
    tab = gauss_tableau(2)
    p = _params(2, N=8)
    z = np.array([np.pi, 0.0, 0.0])
    s = ZigzagState(3, np.tile(z, (8, 5, 1)))
    out = rk_half_step(sg, tab, p, s)
    assert out.level == 4 and np.abs(out.values - z).max() < 1e-13
    assert rk_run(sg, tab, p, s, 0) is s
    with pytest.raises(ValueError):
        rk_run(sg, tab, p, s, -1)


def test_corners_do_not_change_edges(sg):
    tab = gauss_tableau(2)
    p = _params(2, N=40)
    s = rk_init(None, None, tab, p, mode="exact", z_exact=breather_z)
    a = rk_run(sg, tab, p, s, 2, corners=True)
    b = rk_run(sg, tab, p, s, 2, corners=False)
    assert np.abs(a.values[:, 1:] - b.values[:, 1:]).max() < 1e-11
    assert np.all(np.isnan(b.corner()))


def test_threads_bit_identical(sg):
    tab = gauss_tableau(2)
    p = _params(2, N=150)
    s = rk_init(None, None, tab, p, mode="exact", z_exact=breather_z)
    a = rk_run(sg, tab, p, s, 1, threads=1)
    b = rk_run(sg, tab, p, s, 1, threads=4)
    assert np.array_equal(a.values, b.values)


def test_chord_path_without_hessian(sg, rng):
    plain = MultiHamiltonianSystem(sg.K, sg.L, sg.grad_S)
    tab = gauss_tableau(2)
    co = transform_coeffs(sg, _params(2))
    e = _random_edges(rng, 6, 2, scale=0.5)
    a = solve_stages(plain, tab, co, e, SolverConfig(max_iter=300))
    b = solve_stages(sg, tab, co, e)
    assert np.abs(a.Z - b.Z).max() < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10**6))
def test_stage_residual_property(r, seed):
    rng = np.random.default_rng(seed)
    sg = sine_gordon()
    tab = gauss_tableau(r)
    co = transform_coeffs(sg, _params(r))
    e = _random_edges(rng, 3, r)
    cfg = SolverConfig(tol=1e-12)
    st_ = solve_stages(sg, tab, co, e, cfg)
    assert stage_residual(sg, tab, co, e, st_).max() <= 10 * cfg.tol
