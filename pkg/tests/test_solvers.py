import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_laplacian_matrix

from lapfield.field import laplacian, stencil
from lapfield.solvers import (
    SOLVERS,
    SolverConfig,
    default_omega,
    laplacian_matrix,
    relative_residual,
    solve,
    solve_cholesky_dense,
    solve_dst,
    solve_gauss_seidel,
    solve_jacobi,
    solve_multigrid,
    solve_sor,
)

# value of the discrete Green's function at a unit impulse in the middle of a
# 16x16 grid, from the dense Cholesky solve
GREEN_16_CENTER = -0.6088240381958774

ITERATIVE = ["jacobi", "gauss-seidel", "sor", "multigrid"]


def test_matrix_builder_matches_oracle():
    for sid in ("k0", "k3"):
        assert np.array_equal(laplacian_matrix(5, 6, sid), dense_laplacian_matrix(5, 6, stencil(sid).coeffs.tolist()))


def test_config_validation():
    for bad in (dict(tol=0), dict(max_iter=0), dict(omega=2.0), dict(omega=0.0), dict(mg_levels=0), dict(mg_smooth=0)):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


def test_relative_residual_of_zero_field():
    assert relative_residual(np.zeros((4, 4)), np.zeros((4, 4))) == 0.0


# -- Cholesky oracle ----------------------------------------------------------


def test_cholesky_zero_and_roundtrip(rng):
    assert np.all(solve_cholesky_dense(np.zeros((6, 6))) == 0)
    u0 = rng.uniform(0, 255, (8, 8))
    u = solve_cholesky_dense(laplacian(u0))
    assert np.max(np.abs(u - u0)) < 1e-6
    assert relative_residual(laplacian(u0), u) < 1e-8


@pytest.mark.parametrize("sid", ["k1", "k2", "k3"])
def test_cholesky_other_stencils(sid, rng):
    u0 = rng.uniform(0, 255, (2, 7, 9))
    assert np.max(np.abs(solve_cholesky_dense(laplacian(u0, sid), sid) - u0)) < 1e-6


def test_cholesky_green_function_regression():
    L = np.zeros((16, 16))
    L[8, 8] = 1.0
    u = solve_cholesky_dense(L)
    assert u[8, 8] == pytest.approx(GREEN_16_CENTER, rel=1e-12)
    assert np.all(u < 0)


def test_cholesky_size_cap():
    with pytest.raises(ValueError):
        solve_cholesky_dense(np.zeros((65, 64)))


# -- stationary iterations ----------------------------------------------------


@pytest.mark.parametrize("fn", [solve_jacobi, solve_gauss_seidel, solve_sor, solve_multigrid])
def test_zero_field_converges_to_zero(fn):
    u, rep = fn(np.zeros((9, 9)))
    assert np.all(u == 0) and rep.converged and rep.iterations <= 1


@pytest.mark.parametrize("fn", [solve_jacobi, solve_gauss_seidel, solve_sor])
def test_iterative_matches_oracle_8x8(fn, rng):
    L = rng.standard_normal((8, 8))
    u, rep = fn(L, config=SolverConfig(tol=1e-6))
    assert rep.converged and rep.final_residual <= 1e-6
    assert np.max(np.abs(u - solve_cholesky_dense(L))) < 1e-4


def test_jacobi_residuals_non_increasing(rng):
    _, rep = solve_jacobi(rng.standard_normal((12, 12)), config=SolverConfig(tol=1e-6))
    r = np.array(rep.residuals)
    assert np.all(np.diff(r) <= 1e-15)
    assert rep.iterations == len(rep.residuals) - 1


def test_gauss_seidel_beats_jacobi(rng):
    L = rng.standard_normal((32, 32))
    _, rj = solve_jacobi(L)
    _, rg = solve_gauss_seidel(L)
    assert rj.converged and rg.converged
    assert rg.iterations < rj.iterations


def test_sor_omega_one_is_gauss_seidel(rng):
    L = rng.standard_normal((2, 10, 13))
    u1, r1 = solve_sor(L, config=SolverConfig(omega=1.0))
    u2, r2 = solve_gauss_seidel(L)
    assert np.array_equal(u1, u2) and r1.residuals == r2.residuals


def test_sor_default_omega_faster(rng):
    L = rng.standard_normal((64, 64))
    _, r1 = solve_sor(L, config=SolverConfig(omega=1.0))
    _, r2 = solve_sor(L)
    assert r2.iterations < r1.iterations


def test_default_omega():
    assert default_omega(64, 64) == pytest.approx(2 / (1 + np.sin(np.pi / 65)))


def test_non_convergence_is_reported(rng):
    u, rep = solve_jacobi(rng.standard_normal((16, 16)), config=SolverConfig(max_iter=3))
    assert not rep.converged and rep.iterations == 3 and np.all(np.isfinite(u))


@pytest.mark.parametrize("sid", ["k1", "k3"])
def test_gauss_seidel_general_stencil(sid, rng):
    L = rng.standard_normal((10, 10))
    u, rep = solve_gauss_seidel(L, sid)
    assert rep.converged
    assert np.max(np.abs(u - solve_cholesky_dense(L, sid))) < 1e-4


# -- DST ----------------------------------------------------------------------


def test_dst_single_mode_eigen():
    H, W, p, q = 12, 9, 3, 5
    i, j = np.mgrid[1:H + 1, 1:W + 1]
    u0 = np.sin(np.pi * p * i / (H + 1)) * np.sin(np.pi * q * j / (W + 1))
    lam = 4 * np.sin(np.pi * p / (2 * (H + 1))) ** 2 + 4 * np.sin(np.pi * q / (2 * (W + 1))) ** 2
    assert np.allclose(laplacian(u0), -lam * u0, atol=1e-12)
    assert np.allclose(solve_dst(-lam * u0), u0, atol=1e-12)


def test_dst_matches_oracle_and_naive(rng):
    L = rng.standard_normal((3, 16, 16)) * 50
    u = solve_dst(L)
    assert np.max(np.abs(u - solve_cholesky_dense(L))) < 1e-4
    assert np.allclose(u, solve_dst(L, _naive=True), atol=1e-9)
    assert np.all(solve_dst(np.zeros((5, 7))) == 0)
    assert relative_residual(L, u) < 1e-5


def test_dst_requires_k0():
    with pytest.raises(ValueError):
        solve_dst(np.zeros((5, 5)), "k1")


# -- multigrid ----------------------------------------------------------------


@pytest.mark.parametrize("shape", [(32, 32), (31, 17), (3, 3), (4, 9)])
def test_multigrid_matches_oracle(shape, rng):
    L = rng.standard_normal(shape)
    u, rep = solve_multigrid(L)
    assert rep.converged
    assert np.max(np.abs(u - solve_cholesky_dense(L))) < 1e-3


@pytest.mark.parametrize("n", [128, 127])
def test_multigrid_contraction(n):
    x = np.linspace(0, 1, n)
    L = 100 * np.outer(np.sin(np.pi * x), np.sin(2 * np.pi * x))
    _, rep = solve_multigrid(L)
    r = np.array(rep.residuals)
    assert rep.converged and np.all(r[1:] / r[:-1] < 0.5)


def test_multigrid_requires_k0():
    with pytest.raises(ValueError):
        solve_multigrid(np.zeros((8, 8)), "k3")


def test_multigrid_bsds_shape_roundtrip(rng):
    u0 = rng.uniform(0, 255, (1, 321, 481))
    u, rep = solve_multigrid(laplacian(u0), config=SolverConfig(tol=1e-9))
    assert rep.converged and rep.iterations <= 10
    assert np.max(np.abs(u - u0)) < 1e-3


# -- dispatcher and invariants -----------------------------------------------


@pytest.mark.parametrize("name", SOLVERS)
def test_every_solver_roundtrips(name, rng):
    u0 = rng.uniform(0, 255, (2, 20, 20))
    u, rep = solve(laplacian(u0), SolverConfig(name, tol=1e-10))
    assert rep.solver == name and rep.residuals
    assert np.max(np.abs(u - u0)) < 1e-3


def test_unknown_solver():
    with pytest.raises(ValueError):
        solve(np.zeros((4, 4)), SolverConfig("fft"))


@pytest.mark.parametrize("name", ["cholesky", "dst", "multigrid"])
def test_linearity(name, rng):
    L1, L2 = rng.standard_normal((2, 15, 15))
    cfg = SolverConfig(name, tol=1e-12)
    lhs = solve(2 * L1 - 3 * L2, cfg)[0]
    rhs = 2 * solve(L1, cfg)[0] - 3 * solve(L2, cfg)[0]
    assert np.linalg.norm(lhs - rhs) <= 1e-5 * np.linalg.norm(rhs)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 24), st.integers(3, 24), st.integers(0, 2**31 - 1))
def test_dst_and_multigrid_agree_with_oracle(h, w, seed):
    L = np.random.default_rng(seed).standard_normal((h, w))
    ref = solve_cholesky_dense(L)
    assert np.max(np.abs(solve_dst(L) - ref)) < 1e-8
    assert np.max(np.abs(solve_multigrid(L)[0] - ref)) < 1e-3
