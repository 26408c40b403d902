"""Finite-rank symmetric kernels f(x, y) = sum_i theta_i r_i(x) r_i(y) on [0, 1]^2.

Eigenfunctions are piecewise polynomials of one of three kinds
(piecewise-constant, polynomial, tabulated with linear interpolation), so
every integral of a product of eigenfunctions is computed exactly with
Gauss-Legendre rules on the union of their knots.

Component indices are 0-based in Python; serialized outputs (JSON reports)
use 1-based labels matching theta_1 >= theta_2 >= ...
"""

from __future__ import annotations

import functools
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

ORTHONORMALITY_TOL = 1e-8
NONNEGATIVITY_TOL = 1e-12
ISOLATION_RTOL = 1e-9
VALIDATION_GRID = 256


def _as_unit_interval(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0) or np.any(np.isnan(x)):
        raise ValueError("arguments must lie in [0, 1]")
    return x


def _check_knots(knots, name):
    knots = np.asarray(knots, dtype=float)
    if knots.ndim != 1 or len(knots) < 2:
        raise ValueError(f"{name} needs at least two points")
    if knots[0] != 0.0 or knots[-1] != 1.0:
        raise ValueError(f"{name} must start at 0 and end at 1")
    if np.any(np.diff(knots) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return knots


@dataclass(frozen=True)
class PiecewiseConstant:
    """Step function; cell [b_m, b_{m+1}) is left-closed, the last cell is closed at 1."""

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]
    kind = "piecewise_constant"

    def __post_init__(self):
        bp = _check_knots(self.breakpoints, "breakpoints")
        if len(self.values) != len(bp) - 1:
            raise ValueError("need one value per cell")
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in bp))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        return np.asarray(self.values)[idx]

    @property
    def knots(self):
        return np.asarray(self.breakpoints)

    @property
    def degree(self):
        return 0

    def sup(self):
        return max(self.values)

    def inf(self):
        return min(self.values)

    def lipschitz(self):
        return 0.0 if len(set(self.values)) == 1 else float("inf")

    def to_dict(self):
        return {"kind": self.kind, "breakpoints": list(self.breakpoints), "values": list(self.values)}


@dataclass(frozen=True)
class Polynomial:
    """r(x) = sum_n coefficients[n] * x**n."""

    coefficients: tuple[float, ...]
    kind = "polynomial"

    def __post_init__(self):
        if len(self.coefficients) == 0:
            raise ValueError("empty coefficient list")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    @property
    def _poly(self):
        return np.polynomial.Polynomial(self.coefficients)

    def __call__(self, x):
        return self._poly(np.asarray(x, dtype=float))

    @property
    def knots(self):
        return np.array([0.0, 1.0])

    @property
    def degree(self):
        return len(self.coefficients) - 1

    def _extremes(self, poly):
        crit = poly.deriv().roots() if poly.degree() >= 1 else np.array([])
        crit = np.real(crit[np.abs(np.imag(crit)) < 1e-12])
        pts = np.concatenate([[0.0, 1.0], crit[(crit >= 0) & (crit <= 1)]])
        return poly(pts)

    def sup(self):
        return float(np.max(self._extremes(self._poly)))

    def inf(self):
        return float(np.min(self._extremes(self._poly)))

    def lipschitz(self):
        d = self._poly.deriv()
        return float(np.max(np.abs(self._extremes(d)))) if self.degree >= 1 else 0.0

    def to_dict(self):
        return {"kind": self.kind, "coefficients": list(self.coefficients)}


@dataclass(frozen=True)
class Tabulated:
    """Values on an increasing grid over [0, 1], linearly interpolated."""

    grid: tuple[float, ...]
    values: tuple[float, ...]
    kind = "tabulated"

    def __post_init__(self):
        grid = _check_knots(self.grid, "grid")
        if len(self.values) != len(grid):
            raise ValueError("grid and values differ in length")
        object.__setattr__(self, "grid", tuple(float(g) for g in grid))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.grid, self.values)

    @property
    def knots(self):
        return np.asarray(self.grid)

    @property
    def degree(self):
        return 1

    def sup(self):
        return max(self.values)

    def inf(self):
        return min(self.values)

    def lipschitz(self):
        return float(np.max(np.abs(np.diff(self.values) / np.diff(self.grid))))

    def to_dict(self):
        return {"kind": self.kind, "grid": list(self.grid), "values": list(self.values)}


Eigenfunction = PiecewiseConstant | Polynomial | Tabulated

_KINDS = {cls.kind: cls for cls in (PiecewiseConstant, Polynomial, Tabulated)}


def eigenfunction_from_dict(d: dict) -> Eigenfunction:
    kind = d.get("kind")
    if kind == "piecewise_constant":
        return PiecewiseConstant(tuple(d["breakpoints"]), tuple(d["values"]))
    if kind == "polynomial":
        return Polynomial(tuple(d["coefficients"]))
    if kind == "tabulated":
        return Tabulated(tuple(d["grid"]), tuple(d["values"]))
    raise ValueError(f"unknown eigenfunction kind {kind!r}; expected one of {sorted(_KINDS)}")


def common_knots(funcs: Sequence[Eigenfunction]) -> np.ndarray:
    return np.unique(np.concatenate([f.knots for f in funcs]))


def integrate_product(funcs: Sequence[Eigenfunction]) -> float:
    """Exact integral over [0, 1] of the pointwise product of ``funcs``.

    On every cell between consecutive knots the product is a polynomial of
    degree sum(f.degree), integrated exactly by Gauss-Legendre.
    """
    knots = common_knots(funcs)
    npts = sum(f.degree for f in funcs) // 2 + 1
    nodes, weights = np.polynomial.legendre.leggauss(npts)
    lo, hi = knots[:-1, None], knots[1:, None]
    x = 0.5 * (hi - lo) * nodes[None, :] + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * weights[None, :]
    prod = np.ones_like(x)
    for f in funcs:
        prod = prod * f(x)
    return float(np.sum(w * prod))


@dataclass(frozen=True)
class KernelSpec:
    """Rank-k kernel with non-increasing positive thetas and orthonormal eigenfunctions.

    ``sup_bound`` (M = sup f) is computed when not supplied. Construction
    fails if the invariants do not hold; ``validate`` reports the same
    quantities without raising.
    """

    thetas: tuple[float, ...]
    eigenfunctions: tuple[Eigenfunction, ...]
    sup_bound: float | None = None
    lipschitz_constant: float | None = None
    _id: str = field(default="", init=False, repr=False, compare=False)

    def __post_init__(self):
        thetas = tuple(float(t) for t in self.thetas)
        funcs = tuple(self.eigenfunctions)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "eigenfunctions", funcs)
        if len(thetas) == 0 or len(thetas) != len(funcs):
            raise ValueError("need one eigenfunction per theta and rank >= 1")
        if any(t <= 0 for t in thetas):
            raise ValueError("thetas must be positive")
        if any(a < b for a, b in zip(thetas, thetas[1:])):
            raise ValueError("thetas must be non-increasing")
        defect = np.max(np.abs(gram_matrix(funcs) - np.eye(len(funcs))))
        if defect > ORTHONORMALITY_TOL:
            raise ValueError(f"eigenfunctions not orthonormal (max defect {defect:.3g})")
        grid = np.linspace(0.0, 1.0, VALIDATION_GRID)
        fmin = float(np.min(_f_on_grid(thetas, funcs, grid)))
        if fmin < -NONNEGATIVITY_TOL:
            raise ValueError(f"f takes negative values (min {fmin:.3g} on validation grid)")
        measured = _measured_sup(thetas, funcs)
        if self.sup_bound is None:
            object.__setattr__(self, "sup_bound", measured)
        elif self.sup_bound < measured * (1 - 1e-12):
            raise ValueError(f"sup_bound {self.sup_bound} below measured sup f {measured}")
        if self.sup_bound <= 0:
            raise ValueError("sup f must be positive")
        if self.lipschitz_constant is not None and self.lipschitz_constant < 0:
            raise ValueError("lipschitz_constant must be non-negative")
        blob = json.dumps(kernel_to_dict(self), sort_keys=True).encode()
        object.__setattr__(self, "_id", hashlib.sha256(blob).hexdigest())

    @property
    def rank(self) -> int:
        return len(self.thetas)

    @property
    def kernel_id(self) -> str:
        return self._id

    @property
    def is_piecewise_constant(self) -> bool:
        return all(isinstance(r, PiecewiseConstant) for r in self.eigenfunctions)

    def __call__(self, x, y):
        return eval_f(self, x, y)

    def __hash__(self):
        return hash(self._id)

    def __eq__(self, other):
        return isinstance(other, KernelSpec) and other._id == self._id


def _f_on_grid(thetas, funcs, xs, ys=None):
    ys = xs if ys is None else ys
    rx = np.array([r(xs) for r in funcs])
    ry = rx if ys is xs else np.array([r(ys) for r in funcs])
    return rx.T @ (np.asarray(thetas)[:, None] * ry)


def _measured_sup(thetas, funcs):
    knots = common_knots(funcs)
    if all(isinstance(r, PiecewiseConstant) for r in funcs):
        # one representative per cell, plus x = 1 which closes the last cell
        pts = np.append(0.5 * (knots[:-1] + knots[1:]), 1.0)
    else:
        pts = np.unique(np.concatenate([knots, np.linspace(0.0, 1.0, 4097)]))
    return float(np.max(_f_on_grid(thetas, funcs, pts)))


def gram_matrix(funcs: Sequence[Eigenfunction]) -> np.ndarray:
    k = len(funcs)
    g = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            g[i, j] = g[j, i] = integrate_product([funcs[i], funcs[j]])
    return g


def eval_f(spec: KernelSpec, x, y):
    """f(x, y) = sum_i theta_i r_i(x) r_i(y); broadcasts over array arguments."""
    x = _as_unit_interval(x)
    y = _as_unit_interval(y)
    out = np.zeros(np.broadcast(x, y).shape)
    for theta, r in zip(spec.thetas, spec.eigenfunctions):
        out = out + theta * (r(x) * r(y))  # product first: bitwise symmetric in (x, y)
    return float(out) if out.ndim == 0 else out


@functools.lru_cache(maxsize=64)
def _discretize_cached(spec: KernelSpec, N: int) -> np.ndarray:
    grid = np.arange(1, N + 1) / N
    e = np.array([r(grid) for r in spec.eigenfunctions]) / np.sqrt(N)
    e.setflags(write=False)
    return e


def discretize(spec: KernelSpec, N: int) -> np.ndarray:
    """Rows e_i with e_i[a-1] = N^{-1/2} r_i(a/N), a = 1..N; shape (k, N), read-only."""
    if int(N) != N or N < 1:
        raise ValueError("N must be a positive integer")
    return _discretize_cached(spec, int(N))


# -- constructors ---------------------------------------------------------


@dataclass(frozen=True)
class SBMParams:
    """Block probabilities p (k x k, symmetric positive definite) over blocks [b_{i-1}, b_i)."""

    p: tuple[tuple[float, ...], ...]
    block_boundaries: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        k = p.shape[0] if p.ndim == 2 else -1
        if p.ndim != 2 or p.shape != (k, k):
            raise ValueError("p must be a square matrix")
        if not np.allclose(p, p.T, rtol=0, atol=1e-12 * max(1.0, np.abs(p).max())):
            raise ValueError("p must be symmetric")
        if np.linalg.eigvalsh(p).min() <= 1e-12:
            raise ValueError("p must be positive definite")
        b = np.asarray(self.block_boundaries, dtype=float)
        if len(b) != k + 1:
            raise ValueError("need k + 1 block boundaries")
        if b[0] != 0.0 or b[-1] != 1.0:
            raise ValueError("block boundaries must run from 0 to 1")
        if np.any(np.diff(b) <= 0):
            raise ValueError("degenerate block: boundaries must be strictly increasing")
        object.__setattr__(self, "p", tuple(tuple(float(v) for v in row) for row in p))
        object.__setattr__(self, "block_boundaries", tuple(float(v) for v in b))

    @property
    def block_measures(self) -> np.ndarray:
        return np.diff(self.block_boundaries)

    def f(self, x, y):
        """Direct block evaluation of sum_ij p(i,j) 1_{B_i}(x) 1_{B_j}(y)."""
        cell = PiecewiseConstant(self.block_boundaries, tuple(range(len(self.p))))
        bi = cell(x).astype(int)
        bj = cell(y).astype(int)
        return np.asarray(self.p)[bi, bj]


def kernel_from_sbm(params: SBMParams) -> KernelSpec:
    """Diagonalize p~(i,j) = p(i,j) sqrt(beta_i beta_j); r = U s with s_i = beta_i^{-1/2} 1_{B_i}."""
    p = np.asarray(params.p)
    beta = params.block_measures
    sq = np.sqrt(beta)
    ptilde = p * np.outer(sq, sq)
    vals, vecs = np.linalg.eigh(ptilde)
    dominant = np.argmax(np.abs(vecs), axis=0)
    order = sorted(range(len(vals)), key=lambda c: (-vals[c], dominant[c]))
    thetas, funcs = [], []
    for c in order:
        u = vecs[:, c]
        if u[dominant[c]] < 0:
            u = -u
        thetas.append(float(vals[c]))
        funcs.append(PiecewiseConstant(params.block_boundaries, tuple(u / sq)))
    return KernelSpec(tuple(thetas), tuple(funcs), sup_bound=float(p.max()))


def kernel_rank_one(theta: float, r: Eigenfunction) -> KernelSpec:
    """f(x, y) = theta r(x) r(y) for non-negative r with unit L2 norm."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    if r.inf() < 0:
        raise ValueError("r must be non-negative on [0, 1]")
    norm2 = integrate_product([r, r])
    if abs(norm2 - 1.0) > ORTHONORMALITY_TOL:
        raise ValueError(f"r must have unit L2 norm (got ||r||^2 = {norm2:.12g})")
    return KernelSpec((float(theta),), (r,), sup_bound=float(theta) * r.sup() ** 2)


def constant_kernel(value: float = 1.0) -> KernelSpec:
    """f == value, the homogeneous Erdos-Renyi case."""
    return kernel_rank_one(value, PiecewiseConstant((0.0, 1.0), (1.0,)))


# -- validation -----------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    thetas: tuple[float, ...]
    orthonormality_defect: float
    min_f: float
    sup_f: float
    sup_bound: float
    lipschitz_quotient: float
    krein_rutman_applicable: bool
    krein_rutman_passed: bool | None
    isolated: tuple[int, ...]
    trace_defect: float

    @property
    def ok(self) -> bool:
        return (
            self.orthonormality_defect <= ORTHONORMALITY_TOL
            and self.min_f >= -NONNEGATIVITY_TOL
            and self.krein_rutman_passed is not False
        )

    def to_dict(self) -> dict:
        return {
            "thetas": list(self.thetas),
            "orthonormality_defect": self.orthonormality_defect,
            "min_f_on_grid": self.min_f,
            "sup_f_on_grid": self.sup_f,
            "sup_bound": self.sup_bound,
            "lipschitz_quotient": self.lipschitz_quotient,
            "krein_rutman": {
                "applicable": self.krein_rutman_applicable,
                "passed": self.krein_rutman_passed,
            },
            "isolated_set": [i + 1 for i in self.isolated],
            "trace_defect": self.trace_defect,
            "grid_size": VALIDATION_GRID,
            "ok": self.ok,
        }


def isolated_indices(thetas: Sequence[float], rtol: float = ISOLATION_RTOL) -> tuple[int, ...]:
    """0-based indices i with theta_{i-1} > theta_i > theta_{i+1} (relative gap > rtol)."""
    out = []
    k = len(thetas)
    for i, t in enumerate(thetas):
        above = i == 0 or thetas[i - 1] - t > rtol * max(abs(thetas[i - 1]), abs(t))
        below = i == k - 1 or t - thetas[i + 1] > rtol * max(abs(thetas[i + 1]), abs(t))
        if above and below:
            out.append(i)
    return tuple(out)


def validate(spec: KernelSpec) -> ValidationReport:
    grid = np.linspace(0.0, 1.0, VALIDATION_GRID)
    fg = _f_on_grid(spec.thetas, spec.eigenfunctions, grid)
    h = grid[1] - grid[0]
    # neighbouring grid points differ by h in exactly one coordinate
    lip = max(np.max(np.abs(np.diff(fg, axis=0))), np.max(np.abs(np.diff(fg, axis=1)))) / h
    defect = float(np.max(np.abs(gram_matrix(spec.eigenfunctions) - np.eye(spec.rank))))
    fmin = float(fg.min())
    applicable = fmin > 0
    passed = None
    if applicable:
        r1 = spec.eigenfunctions[0](grid)
        one_signed = bool(np.all(r1 >= -NONNEGATIVITY_TOL) or np.all(r1 <= NONNEGATIVITY_TOL))
        passed = bool(0 in isolated_indices(spec.thetas) and one_signed)
    diag = integrate_product_diag(spec)
    return ValidationReport(
        thetas=spec.thetas,
        orthonormality_defect=defect,
        min_f=fmin,
        sup_f=float(fg.max()),
        sup_bound=float(spec.sup_bound),
        lipschitz_quotient=float(lip),
        krein_rutman_applicable=applicable,
        krein_rutman_passed=passed,
        isolated=isolated_indices(spec.thetas),
        trace_defect=abs(sum(spec.thetas) - diag),
    )


def integrate_product_diag(spec: KernelSpec) -> float:
    """Integral of f(x, x) over [0, 1]."""
    return sum(t * integrate_product([r, r]) for t, r in zip(spec.thetas, spec.eigenfunctions))


# -- JSON -----------------------------------------------------------------


def kernel_to_dict(spec: KernelSpec) -> dict:
    d = {
        "type": "explicit",
        "thetas": list(spec.thetas),
        "eigenfunctions": [r.to_dict() for r in spec.eigenfunctions],
        "sup_bound": spec.sup_bound,
    }
    if spec.lipschitz_constant is not None:
        d["lipschitz_constant"] = spec.lipschitz_constant
    return d


def kernel_from_dict(d: dict) -> KernelSpec:
    kind = d.get("type")
    if kind == "sbm":
        params = SBMParams(tuple(map(tuple, d["p"])), tuple(d["block_boundaries"]))
        return kernel_from_sbm(params)
    if kind == "rank_one":
        return kernel_rank_one(d["theta"], eigenfunction_from_dict(d["eigenfunction"]))
    if kind == "explicit":
        return KernelSpec(
            tuple(d["thetas"]),
            tuple(eigenfunction_from_dict(e) for e in d["eigenfunctions"]),
            sup_bound=d.get("sup_bound"),
            lipschitz_constant=d.get("lipschitz_constant"),
        )
    raise ValueError(f"unknown kernel type {kind!r}; expected 'sbm', 'rank_one' or 'explicit'")


def load_kernel(path) -> KernelSpec:
    with open(path, encoding="utf-8") as fh:
        return kernel_from_dict(json.load(fh))


def save_kernel(spec: KernelSpec, path) -> None:
    Path(path).write_text(json.dumps(kernel_to_dict(spec), indent=2), encoding="utf-8")
