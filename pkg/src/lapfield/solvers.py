"""Classical solvers for the Dirichlet Poisson problem ``laplacian(u) = L``.

Every solver treats the pixels outside the grid as 0, matching
:func:`lapfield.field.laplacian`, so ``solve(laplacian(u0))`` returns ``u0``.

Direct solvers: dense Cholesky (a brute-force oracle for small grids) and the
DST-I spectral solver. Iterative solvers: Jacobi, Gauss-Seidel, SOR and a
geometric multigrid V-cycle; they start from ``u = 0`` and report the
relative residual ``||L - laplacian(u)|| / max(||L||, 1e-12)`` after every
iteration or cycle.
"""

from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.fft
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .field import Stencil, apply_laplacian, as_planar, stencil

__all__ = [
    "SOLVERS",
    "SolverConfig",
    "SolverReport",
    "SolverError",
    "relative_residual",
    "laplacian_matrix",
    "solve_cholesky_dense",
    "solve_jacobi",
    "solve_gauss_seidel",
    "solve_sor",
    "solve_dst",
    "solve_multigrid",
    "default_omega",
    "solve",
]

SOLVERS = ("cholesky", "jacobi", "gauss-seidel", "sor", "dst", "multigrid")
CHOLESKY_MAX_PIXELS = 4096
_EPS = 1e-12


class SolverError(RuntimeError):
    """Internal numerical failure (e.g. a factorization that should not fail)."""


@dataclass
class SolverConfig:
    solver: str = "dst"
    tol: float = 1e-6
    max_iter: int = 20000
    omega: float | None = None
    mg_levels: int | None = None
    mg_smooth: int = 2

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.omega is not None and not 0.0 < self.omega < 2.0:
            raise ValueError("omega must lie in (0, 2)")
        if self.mg_levels is not None and self.mg_levels < 1:
            raise ValueError("mg_levels must be >= 1")
        if self.mg_smooth < 1:
            raise ValueError("mg_smooth must be >= 1")


@dataclass
class SolverReport:
    solver: str
    iterations: int = 0
    residuals: list[float] = field(default_factory=list)
    seconds: float = 0.0
    converged: bool = True

    @property
    def final_residual(self) -> float:
        return self.residuals[-1]


def relative_residual(L, u, st="k0") -> float:
    L = np.asarray(L, dtype=np.float64)
    r = L - apply_laplacian(u, st)
    return float(np.linalg.norm(r) / max(np.linalg.norm(L), _EPS))


def _planar(L):
    squeeze = np.ndim(L) == 2
    return as_planar(L, "field"), squeeze


def _out(u, squeeze):
    return u[0] if squeeze else u


# -- dense oracle -------------------------------------------------------------


def laplacian_matrix(height: int, width: int, st="k0") -> np.ndarray:
    """Dense ``(H*W, H*W)`` matrix of the zero-exterior stencil operator (row-major)."""
    c = stencil(st).coeffs
    n = height * width
    A = np.zeros((n, n))
    for i in range(height):
        for j in range(width):
            row = i * width + j
            for a in range(3):
                for b in range(3):
                    ii, jj = i + a - 1, j + b - 1
                    if 0 <= ii < height and 0 <= jj < width:
                        A[row, ii * width + jj] += c[a, b]
    return A


def solve_cholesky_dense(L, st="k0") -> np.ndarray:
    """Solve by factorizing the (negated, SPD) dense system matrix.

    O(N^3); limited to ``H*W <= 4096``. Used as the reference oracle for the
    other solvers.
    """
    f, squeeze = _planar(L)
    c, h, w = f.shape
    if h * w > CHOLESKY_MAX_PIXELS:
        raise ValueError(f"dense Cholesky is limited to {CHOLESKY_MAX_PIXELS} pixels, got {h}x{w}")
    A = laplacian_matrix(h, w, st)
    try:
        factor = scipy.linalg.cho_factor(-A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"Cholesky factorization failed: {exc}") from exc
    rhs = -f.reshape(c, h * w).T
    u = scipy.linalg.cho_solve(factor, rhs).T.reshape(c, h, w)
    return _out(u, squeeze)


# -- stationary iterations ---------------------------------------------------


def default_omega(height: int, width: int) -> float:
    """Model-problem optimal SOR factor ``2 / (1 + sin(pi / (min(H, W) + 1)))``."""
    return 2.0 / (1.0 + math.sin(math.pi / (min(height, width) + 1)))


@numba.njit(cache=True)
def _sor_sweep(u, f, coeffs, omega):
    # lexicographic in-place sweep; omega == 1 is plain Gauss-Seidel
    nc, h, w = u.shape
    center = coeffs[1, 1]
    for c in range(nc):
        for i in range(h):
            for j in range(w):
                s = 0.0
                for a in range(3):
                    ii = i + a - 1
                    if ii < 0 or ii >= h:
                        continue
                    for b in range(3):
                        jj = j + b - 1
                        if jj < 0 or jj >= w or (a == 1 and b == 1):
                            continue
                        s += coeffs[a, b] * u[c, ii, jj]
                new = (f[c, i, j] - s) / center
                if omega == 1.0:
                    u[c, i, j] = new
                else:
                    u[c, i, j] += omega * (new - u[c, i, j])


@numba.njit(cache=True)
def _gs_sweep_k0(u, f):
    nc, h, w = u.shape
    for c in range(nc):
        for i in range(h):
            for j in range(w):
                s = 0.0
                if i > 0:
                    s += u[c, i - 1, j]
                if j > 0:
                    s += u[c, i, j - 1]
                if j < w - 1:
                    s += u[c, i, j + 1]
                if i < h - 1:
                    s += u[c, i + 1, j]
                u[c, i, j] = (s - f[c, i, j]) * 0.25


def _iterate(L, st, config, name, step):
    t0 = time.perf_counter()
    f, squeeze = _planar(L)
    f = np.ascontiguousarray(f)
    st = stencil(st)
    norm_f = max(np.linalg.norm(f), _EPS)
    u = np.zeros_like(f)
    report = SolverReport(name, converged=False)
    res = np.linalg.norm(f) / norm_f
    report.residuals.append(float(res))
    while True:
        if res <= config.tol:
            report.converged = True
            break
        if report.iterations >= config.max_iter or not np.isfinite(res):
            break
        step(u, f, st)
        report.iterations += 1
        r = _residual_k0(u, f) if st.id == "k0" else f - apply_laplacian(u, st)
        res = np.linalg.norm(r) / norm_f
        report.residuals.append(float(res))
    report.seconds = time.perf_counter() - t0
    return _out(u, squeeze), report


def solve_jacobi(L, st="k0", config: SolverConfig | None = None):
    """Jacobi iteration ``u <- u + (L - laplacian(u)) / center``.

    Returns ``(u, SolverReport)``; non-convergence sets ``converged=False``.
    """
    config = config or SolverConfig("jacobi")

    def step(u, f, st):
        u += (f - apply_laplacian(u, st)) / st.center

    return _iterate(L, st, config, "jacobi", step)


def solve_sor(L, st="k0", config: SolverConfig | None = None):
    """Successive over-relaxation with lexicographic sweeps.

    ``config.omega`` defaults to :func:`default_omega` for the grid.
    """
    config = config or SolverConfig("sor")
    h, w = np.shape(L)[-2:]
    omega = config.omega if config.omega is not None else default_omega(h, w)

    def step(u, f, st):
        _sor_sweep(u, f, st.coeffs, omega)

    return _iterate(L, st, config, "sor", step)


def solve_gauss_seidel(L, st="k0", config: SolverConfig | None = None):
    config = config or SolverConfig("gauss-seidel")

    def step(u, f, st):
        _sor_sweep(u, f, st.coeffs, 1.0)

    return _iterate(L, st, config, "gauss-seidel", step)


# -- spectral direct solver --------------------------------------------------


def _dst_eigenvalues(h: int, w: int) -> np.ndarray:
    p = np.arange(1, h + 1)[:, None]
    q = np.arange(1, w + 1)[None, :]
    return -(4 * np.sin(np.pi * p / (2 * (h + 1))) ** 2 + 4 * np.sin(np.pi * q / (2 * (w + 1))) ** 2)


def _naive_dst_matrix(n: int) -> np.ndarray:
    k = np.arange(1, n + 1)
    return np.sqrt(2.0 / (n + 1)) * np.sin(np.pi * np.outer(k, k) / (n + 1))


def _dst_core(f: np.ndarray, naive: bool = False) -> np.ndarray:
    h, w = f.shape[-2:]
    lam = _dst_eigenvalues(h, w)
    if naive:
        Sh, Sw = _naive_dst_matrix(h), _naive_dst_matrix(w)
        return Sh @ ((Sh @ f @ Sw) / lam) @ Sw
    fh = scipy.fft.dstn(f, type=1, axes=(-2, -1))
    return scipy.fft.idstn(fh / lam, type=1, axes=(-2, -1))


def solve_dst(L, st="k0", _naive: bool = False) -> np.ndarray:
    """Direct O(N log N) solve by 2-D DST-I diagonalization of the 5-point operator.

    Only ``k0`` is diagonalized by this basis. ``_naive`` swaps in an O(N^2)
    dense sine-matrix transform and exists for tests only.
    """
    if stencil(st).id != "k0":
        raise ValueError("the DST solver only supports the k0 stencil")
    f, squeeze = _planar(L)
    return _out(_dst_core(f, _naive), squeeze)


# -- geometric multigrid -----------------------------------------------------


@numba.njit(cache=True)
def _restrict(r):
    """Full weighting onto coarse nodes at fine indices 1, 3, 5, ... (zero exterior)."""
    nc, h, w = r.shape
    m, n = h // 2, w // 2
    out = np.zeros((nc, m, n))
    for c in range(nc):
        for J in range(m):
            for K in range(n):
                s = 0.0
                for a in range(3):
                    i = 2 * J + a
                    if i >= h:
                        continue
                    wa = 0.5 if a == 1 else 0.25
                    for b in range(3):
                        j = 2 * K + b
                        if j >= w:
                            continue
                        wb = 0.5 if b == 1 else 0.25
                        s += wa * wb * r[c, i, j]
                out[c, J, K] = s
    return out


@numba.njit(cache=True)
def _prolong_add(u, e):
    """``u += P e`` with bilinear interpolation P, the adjoint of 4 x :func:`_restrict`."""
    nc, h, w = u.shape
    m, n = e.shape[1], e.shape[2]
    for c in range(nc):
        for i in range(h):
            if i % 2 == 1:
                r0, r1, wr = (i - 1) // 2, -1, 1.0
            else:
                r0, r1, wr = i // 2 - 1, i // 2, 0.5
            for j in range(w):
                if j % 2 == 1:
                    c0, c1, wc = (j - 1) // 2, -1, 1.0
                else:
                    c0, c1, wc = j // 2 - 1, j // 2, 0.5
                s = 0.0
                for rr in (r0, r1):
                    if rr < 0 or rr >= m:
                        continue
                    for cc in (c0, c1):
                        if cc < 0 or cc >= n:
                            continue
                        s += e[c, rr, cc]
                u[c, i, j] += wr * wc * s


def _prolong(e, shape):
    out = np.zeros(e.shape[:-2] + tuple(shape[-2:]))
    _prolong_add(out, e)
    return out


@numba.njit(cache=True)
def _residual_k0(u, f):
    nc, h, w = u.shape
    r = np.empty_like(u)
    for c in range(nc):
        for i in range(h):
            for j in range(w):
                s = -4.0 * u[c, i, j]
                if i > 0:
                    s += u[c, i - 1, j]
                if j > 0:
                    s += u[c, i, j - 1]
                if j < w - 1:
                    s += u[c, i, j + 1]
                if i < h - 1:
                    s += u[c, i + 1, j]
                r[c, i, j] = f[c, i, j] - s
    return r


@numba.njit(cache=True)
def _residual_var(u, f, S):
    nc, h, w = u.shape
    r = np.empty_like(u)
    for c in range(nc):
        for i in range(h):
            for j in range(w):
                s = 0.0
                for a in range(3):
                    ii = i + a - 1
                    if ii < 0 or ii >= h:
                        continue
                    for b in range(3):
                        jj = j + b - 1
                        if jj < 0 or jj >= w:
                            continue
                        s += S[a, b, i, j] * u[c, ii, jj]
                r[c, i, j] = f[c, i, j] - s
    return r


@numba.njit(cache=True)
def _gs_sweep_var(u, f, S):
    # lexicographic Gauss-Seidel for a per-node 9-point stencil S[a, b, i, j]
    nc, h, w = u.shape
    for c in range(nc):
        for i in range(h):
            for j in range(w):
                s = 0.0
                for a in range(3):
                    ii = i + a - 1
                    if ii < 0 or ii >= h:
                        continue
                    for b in range(3):
                        jj = j + b - 1
                        if jj < 0 or jj >= w or (a == 1 and b == 1):
                            continue
                        s += S[a, b, i, j] * u[c, ii, jj]
                u[c, i, j] = (f[c, i, j] - s) / S[1, 1, i, j]


def _apply_var(S, u):
    return -_residual_var(u, np.zeros_like(u), S)


def _galerkin(apply_fine, fine_shape):
    """Coarse stencil field of ``R A P`` found by probing with 9 colored unit grids."""
    h, w = fine_shape[0] // 2, fine_shape[1] // 2
    J = np.arange(h)[:, None]
    K = np.arange(w)[None, :]
    probes = {}
    for ca in range(3):
        for cb in range(3):
            e = ((J % 3 == ca) & (K % 3 == cb)).astype(np.float64)[None]
            probes[ca, cb] = _restrict(apply_fine(_prolong(e, fine_shape)))[0]
    S = np.zeros((3, 3, h, w))
    for a in range(3):
        for b in range(3):
            color_a = (J + a - 1) % 3
            color_b = (K + b - 1) % 3
            for ca in range(3):
                for cb in range(3):
                    mask = (color_a == ca) & (color_b == cb)
                    S[a, b][mask] = probes[ca, cb][mask]
    # columns outside the grid do not exist
    S[0, :, 0, :] = 0.0
    S[2, :, -1, :] = 0.0
    S[:, 0, :, 0] = 0.0
    S[:, 2, :, -1] = 0.0
    return S


def _assemble(S):
    h, w = S.shape[-2:]
    idx = np.arange(h * w).reshape(h, w)
    rows, cols, vals = [], [], []
    for a in range(3):
        for b in range(3):
            i0, i1 = max(0, 1 - a), min(h, h + 1 - a)
            j0, j1 = max(0, 1 - b), min(w, w + 1 - b)
            rows.append(idx[i0:i1, j0:j1].ravel())
            cols.append(idx[i0 + a - 1 : i1 + a - 1, j0 + b - 1 : j1 + b - 1].ravel())
            vals.append(S[a, b, i0:i1, j0:j1].ravel())
    A = scipy.sparse.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(h * w, h * w)
    )
    return scipy.sparse.linalg.splu(A)


@functools.lru_cache(maxsize=8)
def _hierarchy(h: int, w: int, max_levels: int):
    """Coarse-level stencils and the coarsest-grid factorization for an ``h x w`` grid.

    Depends only on the grid size, so it is cached like an FFT plan.
    """
    stencils = [None]
    shape = (h, w)
    while len(stencils) < max_levels and min(shape) >= 4:
        prev = stencils[-1]
        apply_fine = (lambda u: apply_laplacian(u, "k0")) if prev is None else (lambda u, S=prev: _apply_var(S, u))
        stencils.append(_galerkin(apply_fine, shape))
        shape = (shape[0] // 2, shape[1] // 2)
    coarsest = stencils[-1]
    if coarsest is None:
        coarsest = np.zeros((3, 3, h, w))
        coarsest[:, :, :, :] = stencil("k0").coeffs[:, :, None, None]
        coarsest[0, :, 0, :] = coarsest[2, :, -1, :] = 0.0
        coarsest[:, 0, :, 0] = coarsest[:, 2, :, -1] = 0.0
    return stencils, _assemble(coarsest)


def _vcycle(u, f, level, stencils, lu, nu):
    if level == len(stencils) - 1:
        c, h, w = f.shape
        u[...] = lu.solve(np.ascontiguousarray(f.reshape(c, h * w).T)).T.reshape(c, h, w)
        return
    S = stencils[level]
    smooth = (lambda: _gs_sweep_k0(u, f)) if S is None else (lambda: _gs_sweep_var(u, f, S))
    for _ in range(nu):
        smooth()
    r = _residual_k0(u, f) if S is None else _residual_var(u, f, S)
    fc = _restrict(r)
    ec = np.zeros_like(fc)
    _vcycle(ec, fc, level + 1, stencils, lu, nu)
    _prolong_add(u, ec)
    for _ in range(nu):
        smooth()


def solve_multigrid(L, st="k0", config: SolverConfig | None = None):
    """Geometric multigrid V-cycles for the 5-point operator.

    Gauss-Seidel smoothing (``config.mg_smooth`` pre- and post-sweeps),
    full-weighting restriction to ``n // 2`` coarse nodes per side and
    bilinear prolongation. Coarse operators are Galerkin products
    ``R A P``, which stay consistent with the fine boundary for any grid size,
    not just ``2^k - 1``. The coarsest grid (a side below 4, or
    ``config.mg_levels`` levels) is solved by sparse LU.
    """
    if stencil(st).id != "k0":
        raise ValueError("the multigrid solver only supports the k0 stencil")
    config = config or SolverConfig("multigrid", max_iter=100)
    h, w = np.shape(L)[-2:]
    stencils, lu = _hierarchy(h, w, config.mg_levels or 64)

    def step(u, f, st):
        _vcycle(u, f, 0, stencils, lu, config.mg_smooth)

    return _iterate(L, st, config, "multigrid", step)


# -- dispatch ----------------------------------------------------------------


def solve(L, config: SolverConfig | None = None, st: str | Stencil = "k0"):
    """Run the solver named by ``config.solver``; returns ``(u, SolverReport)``."""
    config = config or SolverConfig()
    name = config.solver
    if name in ("cholesky", "dst"):
        t0 = time.perf_counter()
        u = solve_cholesky_dense(L, st) if name == "cholesky" else solve_dst(L, st)
        seconds = time.perf_counter() - t0
        return u, SolverReport(name, 0, [relative_residual(L, u, st)], seconds, True)
    if name == "jacobi":
        return solve_jacobi(L, st, config)
    if name == "gauss-seidel":
        return solve_gauss_seidel(L, st, config)
    if name == "sor":
        return solve_sor(L, st, config)
    if name == "multigrid":
        return solve_multigrid(L, st, config)
    raise ValueError(f"unknown solver {name!r}; expected one of {SOLVERS}")
