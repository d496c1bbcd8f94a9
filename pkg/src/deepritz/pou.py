"""Tanh-ramp partition of unity on a uniform grid and localized polynomial approximants.

Cells are indexed by multi-indices j in {1..N}^d (1-based). The cell I_j is
prod ((j_i - 1)/N, j_i/N) and its patch J_j is prod ((j_i - 2)/N, (j_i + 1)/N).
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from math import comb, log
from typing import Callable, Iterable

import numpy as np


@dataclass(frozen=True)
class PouConfig:
    N: int
    k: int
    eps: float

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be at least 2")
        alpha(self.N, self.k, self.eps)

    @property
    def alpha(self) -> float:
        return alpha(self.N, self.k, self.eps)


def alpha(N: int, k: int, eps: float) -> float:
    """Ramp steepness N ln((2k)^(k+1) (Nk)^k / (e^k eps))."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if N < 1:
        raise ValueError("N must be at least 1")
    if not 0 < eps < 0.25:
        raise ValueError("eps must lie in (0, 1/4)")
    return N * ((k + 1) * log(2 * k) + k * log(N * k) - k - log(eps))


def phi(j: int, cfg: PouConfig, y):
    """One-dimensional bump phi_j; vectorised over y."""
    N, a = cfg.N, cfg.alpha
    if not 1 <= j <= N:
        raise ValueError(f"index {j} outside 1..{N}")
    y = np.asarray(y, dtype=float)
    if j == 1:
        return 0.5 - 0.5 * np.tanh(a * (y - 1.0 / N))
    if j == N:
        return 0.5 * np.tanh(a * (y - (N - 1.0) / N)) + 0.5
    return 0.5 * np.tanh(a * (y - (j - 1.0) / N)) - 0.5 * np.tanh(a * (y - float(j) / N))


def phi_table(cfg: PouConfig, y) -> np.ndarray:
    """All bumps at once: array (..., N) with entry j-1 equal to phi_j(y)."""
    return np.stack([phi(j, cfg, y) for j in range(1, cfg.N + 1)], axis=-1)


def Phi(j, cfg: PouConfig, x):
    """Tensor-product bump prod_i phi_{j_i}(x_i); x is (d,) or (n, d)."""
    j = tuple(int(v) for v in np.atleast_1d(j))
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != len(j):
        raise ValueError("multi-index and point dimensions differ")
    out = np.ones(x.shape[:-1])
    for i, ji in enumerate(j):
        out = out * phi(ji, cfg, x[..., i])
    return out


def all_indices(N: int, d: int) -> Iterable[tuple[int, ...]]:
    return itertools.product(range(1, N + 1), repeat=d)


def Phi_all(cfg: PouConfig, X) -> dict:
    """Every Phi_j at the points X (n, d), keyed by multi-index."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    tables = [phi_table(cfg, X[:, i]) for i in range(X.shape[1])]
    out = {}
    for j in all_indices(cfg.N, X.shape[1]):
        v = np.ones(len(X))
        for i, ji in enumerate(j):
            v = v * tables[i][:, ji - 1]
        out[j] = v
    return out


def cell_bounds(j, N: int) -> tuple[np.ndarray, np.ndarray]:
    j = np.asarray(j, dtype=float)
    return (j - 1) / N, j / N


def patch_bounds(j, N: int) -> tuple[np.ndarray, np.ndarray]:
    """J_j intersected with [0, 1]^d."""
    j = np.asarray(j, dtype=float)
    return np.maximum((j - 2) / N, 0.0), np.minimum((j + 1) / N, 1.0)


@dataclass(frozen=True)
class PouCheck:
    N: int
    eps: float
    d: int
    alpha: float
    sup_deficit: float
    sup_far: float
    deficit_bound: float
    far_bound: float
    consistency: float
    max_global_error: float

    @property
    def bound_ok(self) -> bool:
        return self.sup_deficit <= self.deficit_bound and self.sup_far <= self.far_bound


def check_pou_bounds(cfg: PouConfig, d: int, sample_count: int, seed) -> PouCheck:
    """Sample every cell I_j and measure the order-0 partition-of-unity defects.

    sup_deficit: sup |sum_{|v|_inf <= 1} Phi_{j+v} - 1| over I_j.
    sup_far: sup of Phi_{j+v} with |v|_inf >= 2.
    consistency: max |(1 - near sum) - far sum|, zero up to rounding because
    the full sum is exactly one.
    """
    rng = np.random.default_rng(seed)
    N = cfg.N
    sup_def = sup_far = cons = glob = 0.0
    for j in all_indices(N, d):
        lo, hi = cell_bounds(j, N)
        X = lo + (hi - lo) * rng.random((sample_count, d))
        vals = Phi_all(cfg, X)
        near = np.zeros(sample_count)
        far = np.zeros(sample_count)
        for idx, v in vals.items():
            if max(abs(a - b) for a, b in zip(idx, j)) <= 1:
                near += v
            else:
                far += v
                sup_far = max(sup_far, float(v.max()))
        sup_def = max(sup_def, float(np.abs(near - 1.0).max()))
        cons = max(cons, float(np.abs((1.0 - near) - far).max()))
        glob = max(glob, float(np.abs(near + far - 1.0).max()))
    return PouCheck(N, cfg.eps, d, cfg.alpha, sup_def, sup_far, d * cfg.eps, cfg.eps, cons, glob)


POU_CSV_HEADER = ["N", "eps", "d", "sup_deficit", "sup_far", "bound_ok"]


def pou_csv(checks: Iterable[PouCheck]) -> str:
    buf = io.StringIO()
    buf.write("# schema=1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(POU_CSV_HEADER + ["global_sum_error"])
    for c in checks:
        w.writerow([c.N, c.eps, c.d, repr(c.sup_deficit), repr(c.sup_far),
                    str(c.bound_ok).lower(), repr(c.max_global_error)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# local polynomial fits

def exponents(degree: int, d: int) -> list[tuple[int, ...]]:
    """Multi-indices of total degree <= degree, graded order."""
    out = []
    for total in range(degree + 1):
        for beta in itertools.product(range(total + 1), repeat=d):
            if sum(beta) == total:
                out.append(beta)
    return out


def _design(X, exps) -> np.ndarray:
    X = np.atleast_2d(X)
    return np.stack([np.prod(X ** np.array(b), axis=1) for b in exps], axis=1)


@dataclass(frozen=True, eq=False)
class LocalFit:
    """Polynomial sum_beta coeffs[beta] x^beta fitted on the patch of cell j."""

    j: tuple
    exponents: list
    coeffs: np.ndarray

    def __call__(self, X) -> np.ndarray:
        return _design(np.asarray(X, dtype=float), self.exponents) @ self.coeffs


def fit_grid(j, N: int, n_per_axis: int) -> np.ndarray:
    lo, hi = patch_bounds(j, N)
    axes = [np.linspace(a, b, n_per_axis) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def local_poly_fit(f: Callable, j, N: int, degree: int, grid_points: int | None = None) -> LocalFit:
    """Least-squares polynomial of the given degree on a tensor grid over J_j.

    grid_points is the number of nodes per axis; the default is four times
    the number of coefficients.
    """
    j = tuple(int(v) for v in np.atleast_1d(j))
    d = len(j)
    exps = exponents(degree, d)
    ncoef = comb(degree + d, d)
    npa = grid_points if grid_points is not None else 4 * ncoef
    if npa**d < ncoef:
        raise ValueError(f"{npa**d} grid points cannot determine {ncoef} coefficients")
    X = fit_grid(j, N, npa)
    M = _design(X, exps)
    scale = np.linalg.norm(M, axis=0)
    scale[scale == 0] = 1.0
    Ms = M / scale
    if np.linalg.matrix_rank(Ms) < ncoef:
        raise np.linalg.LinAlgError("rank-deficient design for the local fit")
    sol, *_ = np.linalg.lstsq(Ms, np.asarray(f(X), dtype=float), rcond=None)
    return LocalFit(j, exps, sol / scale)


def fit_all(f: Callable, N: int, d: int, degree: int, grid_points: int | None = None) -> dict:
    return {j: local_poly_fit(f, j, N, degree, grid_points) for j in all_indices(N, d)}


def patch_rms_error(f: Callable, fit: LocalFit, N: int, n_per_axis: int = 64) -> float:
    """Root-mean-square of f - p over a uniform grid of the patch J_j."""
    X = fit_grid(fit.j, N, n_per_axis)
    return float(np.sqrt(np.mean((f(X) - fit(X)) ** 2)))


def assemble_localized_approximant(f: Callable, cfg: PouConfig, fits: dict) -> Callable:
    """x -> sum_j Phi_j(x) p_j(x), with exact products."""
    d = len(next(iter(fits)))
    missing = [j for j in all_indices(cfg.N, d) if j not in fits]
    if missing:
        raise ValueError(f"missing local fits for cells {missing[:3]}...")

    def approximant(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        weights = Phi_all(cfg, X)
        out = np.zeros(len(X))
        for j, w in weights.items():
            out += w * fits[j](X)
        return out
    return approximant


def eps_for_resolution(N: int, s: int, d: int) -> float:
    """Accuracy N^-(s + 2d), tied to the grid so leakage decays with the fit error."""
    return min(float(N) ** (-(s + 2 * d)), 0.2)


def fit_test_function(X) -> np.ndarray:
    """Smooth, non-polynomial target used by the fit sweeps."""
    X = np.atleast_2d(X)
    return np.sin(2.0 * np.pi * X[:, 0]) * np.exp(X[:, 0]) + np.sum(X[:, 1:], axis=1) ** 2


def fit_errors(f: Callable, s: int, N_list, d: int = 1) -> list[tuple[int, float]]:
    """(N, worst patch RMS error) for fits of degree s - 1 on every cell."""
    out = []
    for N in N_list:
        fits = fit_all(f, N, d, s - 1)
        out.append((N, max(patch_rms_error(f, fit, N) for fit in fits.values())))
    return out


def error_slope(pairs) -> float:
    """Log-log slope of error against N; the local fit theory predicts -s."""
    arr = np.asarray(list(pairs), dtype=float)
    slope, _ = np.polyfit(np.log(arr[:, 0]), np.log(arr[:, 1]), 1)
    return float(slope)
