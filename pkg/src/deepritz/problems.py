"""Domains, uniform sampling, manufactured problems and exact 1D solutions."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from math import gamma, pi
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
import sympy as sp

BOUNDARY_KINDS = ("dirichlet", "neumann", "robin")
FD_STEP = 1e-4


@dataclass(frozen=True)
class Domain:
    """Unit hypercube (0,1)^d or the ball of radius 1/2 centred at (1/2,...,1/2)."""

    kind: str
    d: int

    def __post_init__(self):
        if self.kind not in ("hypercube", "ball"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.d < 1:
            raise ValueError("dimension must be at least 1")

    @property
    def center(self) -> np.ndarray:
        return np.full(self.d, 0.5)

    radius = 0.5

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.kind == "hypercube":
            return np.all((X > 0.0) & (X < 1.0), axis=1)
        return np.linalg.norm(X - self.center, axis=1) < self.radius


def measures(domain: Domain) -> tuple[float, float]:
    """(|Omega|, |dOmega|). In d = 1 the boundary carries counting measure."""
    d = domain.d
    if domain.kind == "hypercube":
        return 1.0, 2.0 * d
    if d == 1:
        return 1.0, 2.0
    r = domain.radius
    vol = pi ** (d / 2) / gamma(d / 2 + 1) * r**d
    return vol, d * vol / r


def _check_count(k: int, what: str) -> None:
    if k < 1:
        raise ValueError(f"{what} sample count must be at least 1")


def sample_interior(domain: Domain, n: int, seed) -> np.ndarray:
    """n i.i.d. points uniform on the domain, shape (n, d)."""
    _check_count(n, "interior")
    rng = np.random.default_rng(seed)
    d = domain.d
    if domain.kind == "hypercube":
        X = rng.random((n, d))
        # random() may return exactly 0; redraw so points are strictly inside
        while not np.all(X > 0.0):
            bad = ~np.all(X > 0.0, axis=1)
            X[bad] = rng.random((bad.sum(), d))
        return X
    direction = rng.standard_normal((n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radii = domain.radius * rng.random(n) ** (1.0 / d)
    return domain.center + radii[:, None] * direction


def sample_boundary(domain: Domain, m: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """m i.i.d. points uniform on the boundary together with outward unit normals."""
    _check_count(m, "boundary")
    rng = np.random.default_rng(seed)
    d = domain.d
    if domain.kind == "hypercube" or d == 1:
        # all 2d faces have unit area: choose one, then a uniform point on it
        Y = rng.random((m, d))
        face = rng.integers(0, 2 * d, size=m)
        axis, side = face // 2, (face % 2).astype(float)
        rows = np.arange(m)
        Y[rows, axis] = side
        normals = np.zeros((m, d))
        normals[rows, axis] = 2.0 * side - 1.0
        return Y, normals
    normals = rng.standard_normal((m, d))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return domain.center + domain.radius * normals, normals


@dataclass(frozen=True, eq=False)
class SampleSet:
    interior: np.ndarray
    boundary: np.ndarray
    normals: np.ndarray
    vol: float
    area: float
    seed: Optional[int] = None

    @property
    def n(self) -> int:
        return len(self.interior)

    @property
    def m(self) -> int:
        return len(self.boundary)

    def to_csv(self) -> str:
        d = self.interior.shape[1]
        buf = io.StringIO()
        buf.write("# schema=1\n")
        buf.write(f"# seed={self.seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind"] + [f"x_{i + 1}" for i in range(d)] + [f"n_{i + 1}" for i in range(d)])
        for x in self.interior:
            w.writerow(["interior"] + [repr(float(v)) for v in x] + [""] * d)
        for y, nrm in zip(self.boundary, self.normals):
            w.writerow(["boundary"] + [repr(float(v)) for v in y] + [repr(float(v)) for v in nrm])
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str, domain: Domain) -> "SampleSet":
        seed = None
        rows = []
        for line in text.splitlines():
            if line.startswith("# seed="):
                value = line[len("# seed="):]
                seed = None if value == "None" else int(value)
            elif line and not line.startswith("#"):
                rows.append(line)
        reader = csv.reader(rows)
        header = next(reader)
        d = (len(header) - 1) // 2
        if d != domain.d:
            raise ValueError(f"sample file has dimension {d}, domain has {domain.d}")
        interior, boundary, normals = [], [], []
        for row in reader:
            if row[0] == "interior":
                interior.append([float(v) for v in row[1:1 + d]])
            elif row[0] == "boundary":
                boundary.append([float(v) for v in row[1:1 + d]])
                normals.append([float(v) for v in row[1 + d:]])
            else:
                raise ValueError(f"unknown row kind {row[0]!r}")
        vol, area = measures(domain)
        return cls(np.array(interior).reshape(-1, d), np.array(boundary).reshape(-1, d),
                   np.array(normals).reshape(-1, d), vol, area, seed)

    @classmethod
    def load(cls, path, domain: Domain) -> "SampleSet":
        return cls.from_csv(Path(path).read_text(), domain)


def draw_samples(domain: Domain, n: int, m: int, seed: int) -> SampleSet:
    """Interior and boundary samples from independent streams of one seed."""
    ss = np.random.SeedSequence(seed)
    s_int, s_bdry = ss.spawn(2)
    X = sample_interior(domain, n, s_int)
    Y, normals = sample_boundary(domain, m, s_bdry)
    vol, area = measures(domain)
    return SampleSet(X, Y, normals, vol, area, seed)


# ---------------------------------------------------------------------------
# exact solutions and problem data

Field = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ExactSolution:
    """u*, its gradient and (optionally) its Laplacian, all vectorised over (n, d)."""

    u: Field
    grad: Optional[Field] = None
    laplacian: Optional[Field] = None

    def gradient(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.grad is not None:
            return np.asarray(self.grad(X), dtype=float).reshape(X.shape)
        return fd_gradient(self.u, X)

    def lap(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.laplacian is not None:
            return np.broadcast_to(np.asarray(self.laplacian(X), dtype=float), X.shape[:1])
        return fd_laplacian(self.u, X)

    @classmethod
    def from_sympy(cls, expr, d: int) -> "ExactSolution":
        """Build from a sympy expression in the symbols x1..xd."""
        xs = sp.symbols(f"x1:{d + 1}")
        expr = sp.sympify(expr)
        grads = [sp.diff(expr, x) for x in xs]
        lap = sum(sp.diff(expr, x, 2) for x in xs)
        return cls(_lambdify(expr, xs), _lambdify_vec(grads, xs), _lambdify(lap, xs))


def _lambdify(expr, xs) -> Field:
    fn = sp.lambdify(xs, expr, "numpy")

    def field(X):
        X = np.atleast_2d(X)
        return np.broadcast_to(np.asarray(fn(*X.T), dtype=float), X.shape[:1]).copy()
    return field


def _lambdify_vec(exprs, xs) -> Field:
    parts = [_lambdify(e, xs) for e in exprs]
    return lambda X: np.stack([p(X) for p in parts], axis=-1)


def fd_gradient(u: Field, X, h: float = FD_STEP) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    cols = []
    for k in range(X.shape[1]):
        e = np.zeros(X.shape[1])
        e[k] = h
        cols.append((u(X + e) - u(X - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def fd_laplacian(u: Field, X, h: float = FD_STEP) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    centre = u(X)
    total = np.zeros(len(X))
    for k in range(X.shape[1]):
        e = np.zeros(X.shape[1])
        e[k] = h
        total += (u(X + e) - 2.0 * centre + u(X - e)) / h**2
    return total


def constant(c: float) -> Field:
    return lambda X: np.full(np.atleast_2d(X).shape[0], float(c))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """-Lap u + w u = f in the domain, with a boundary condition of kind bc.

    g takes (points, outward normals). Dirichlet problems carry g = 0 and a
    penalty parameter beta; they are solved as Robin problems.
    """

    bc: str
    domain: Domain
    w: Field
    f: Field
    g: Callable[[np.ndarray, np.ndarray], np.ndarray]
    beta: Optional[float] = None
    exact: Optional[ExactSolution] = None
    c_w: float = field(default=0.0)

    def __post_init__(self):
        if self.bc not in BOUNDARY_KINDS:
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.bc in ("robin", "dirichlet") and (self.beta is None or self.beta == 0):
            raise ValueError(f"{self.bc} problem needs a nonzero beta")

    def check_coercive(self, X) -> float:
        """Smallest value of w on X; raises if it is not positive."""
        wmin = float(np.min(self.w(X)))
        if not wmin > 0:
            raise ValueError(f"w must be positive, found min {wmin}")
        return wmin

    def with_data(self, f=None, g=None) -> "ProblemSpec":
        return ProblemSpec(self.bc, self.domain, self.w, f or self.f, g or self.g,
                           self.beta, self.exact, self.c_w)


def manufacture(domain: Domain, exact: ExactSolution, w: Field, bc: str,
                beta: Optional[float] = None) -> ProblemSpec:
    """Derive f and g so that exact.u solves the problem."""
    if bc == "robin" and (beta is None or beta == 0):
        raise ValueError("robin problem needs a nonzero beta")

    def f(X):
        return -exact.lap(X) + w(X) * exact.u(X)

    def dn(Y, normals):
        return np.sum(exact.gradient(Y) * normals, axis=1)

    if bc == "dirichlet":
        def g(Y, normals):
            return np.zeros(len(np.atleast_2d(Y)))
    elif bc == "neumann":
        g = dn
    else:
        def g(Y, normals):
            return exact.u(Y) + beta * dn(Y, normals)
    return ProblemSpec(bc, domain, w, f, g, beta, exact)


@dataclass(frozen=True)
class Exact1D:
    """u(x) = f/w + c1 exp(k x) + c2 exp(-k x) on (0,1), k = sqrt(w)."""

    fconst: float
    wconst: float
    c1: float
    c2: float

    @property
    def k(self) -> float:
        return float(np.sqrt(self.wconst))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.fconst / self.wconst + self.c1 * np.exp(self.k * x) + self.c2 * np.exp(-self.k * x)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return self.k * (self.c1 * np.exp(self.k * x) - self.c2 * np.exp(-self.k * x))

    def second_derivative(self, x):
        return self.wconst * (self.value(x) - self.fconst / self.wconst)

    def as_exact(self) -> ExactSolution:
        return ExactSolution(
            u=lambda X: self.value(np.atleast_2d(X)[:, 0]),
            grad=lambda X: self.derivative(np.atleast_2d(X)[:, 0])[:, None],
            laplacian=lambda X: self.second_derivative(np.atleast_2d(X)[:, 0]),
        )


def _solve_1d(fconst, wconst, rows) -> Exact1D:
    if not wconst > 0:
        raise ValueError("wconst must be positive")
    M = np.array([r[:2] for r in rows], dtype=float)
    rhs = np.array([r[2] for r in rows], dtype=float)
    if abs(np.linalg.det(M)) < 1e-14 * max(1.0, np.abs(M).max() ** 2):
        raise np.linalg.LinAlgError("boundary system is singular")
    c1, c2 = np.linalg.solve(M, rhs)
    return Exact1D(float(fconst), float(wconst), float(c1), float(c2))


def exact_robin_1d(fconst: float, wconst: float, beta: float) -> Exact1D:
    """Solution of -u'' + w u = f on (0,1) with u + beta du/dn = 0 at both ends."""
    if beta == 0:
        raise ValueError("beta must be nonzero")
    k = np.sqrt(wconst) if wconst > 0 else 0.0
    e = np.exp(k)
    c = fconst / wconst if wconst > 0 else 0.0
    # x=0: u - beta u' = 0;  x=1: u + beta u' = 0
    return _solve_1d(fconst, wconst, [
        (1 - beta * k, 1 + beta * k, -c),
        ((1 + beta * k) * e, (1 - beta * k) / e, -c),
    ])


def exact_dirichlet_1d(fconst: float, wconst: float) -> Exact1D:
    """Solution of -u'' + w u = f on (0,1) with u(0) = u(1) = 0."""
    k = np.sqrt(wconst) if wconst > 0 else 0.0
    e = np.exp(k)
    c = fconst / wconst if wconst > 0 else 0.0
    return _solve_1d(fconst, wconst, [(1.0, 1.0, -c), (e, 1 / e, -c)])


def robin_1d_problem(fconst: float = 1.0, wconst: float = 1.0, beta: float = 1.0,
                     bc: str = "robin") -> ProblemSpec:
    """Constant-data 1D benchmark with g = 0 and its exact solution attached."""
    sol = exact_robin_1d(fconst, wconst, beta)
    return ProblemSpec(bc, Domain("hypercube", 1), constant(wconst), constant(fconst),
                       lambda Y, nrm: np.zeros(len(np.atleast_2d(Y))), beta, sol.as_exact(),
                       c_w=wconst)


def h1_distance_1d(a: Exact1D, b: Exact1D) -> float:
    """H^1(0,1) norm of a - b by adaptive quadrature."""
    def sq(x):
        return (a.value(x) - b.value(x)) ** 2 + (a.derivative(x) - b.derivative(x)) ** 2
    val, _ = quad(sq, 0.0, 1.0, epsabs=1e-15, epsrel=1e-13)
    return float(np.sqrt(val))
