"""Outlier eigenpairs of A and W, the operator norm of W, and the k x k resolvent matrix V."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, aslinearoperator, minres

from .kernel import KernelSpec, discretize
from .sampler import GraphSample, apply_A, apply_W

DENSE_THRESHOLD = 512
NEUMANN_MAX_TERMS = 200
SOLVE_RESIDUAL = 1e-10


class ConvergenceError(RuntimeError):
    """Lanczos ran out of iterations; carries the best values and residual estimates."""

    def __init__(self, message, values, residuals):
        super().__init__(message)
        self.values = np.asarray(values)
        self.residuals = np.asarray(residuals)


class ResolventDomainError(ValueError):
    """mu <= ||W||, where I - W/mu need not be invertible."""


@dataclass(frozen=True, eq=False)
class EigenPair:
    value: float
    vector: np.ndarray
    residual: float

    def to_dict(self, references=None) -> dict:
        d = {"value": self.value, "residual": self.residual}
        if references is not None:
            d["overlaps"] = {f"e_{j + 1}": float(e @ self.vector) for j, e in enumerate(references)}
        return d


def as_operator(operator, n: int | None = None) -> LinearOperator:
    if callable(operator) and not hasattr(operator, "shape"):
        if n is None:
            raise ValueError("dimension n is required for a bare matvec callable")
        return LinearOperator((n, n), matvec=operator, dtype=float)
    return aslinearoperator(operator)


def _fix_sign(v: np.ndarray, reference=None) -> np.ndarray:
    if reference is not None:
        s = float(reference @ v)
        if s != 0.0:
            return -v if s < 0 else v
    big = np.flatnonzero(np.abs(v) > 1e-8 * np.abs(v).max())
    return -v if big.size and v[big[0]] < 0 else v


def _orthonormalize(w, bases):
    for _ in range(2):
        for B in bases:
            if len(B):
                w = w - B.T @ (B @ w)
    return w


def _lanczos(op, m, tol, max_iter, krylov_dim, rng):
    """Top-m eigenpairs by Lanczos with full reorthogonalization.

    Converged Ritz pairs at the top of the spectrum are locked and deflated
    (later Krylov vectors are kept orthogonal to them); when the basis reaches
    ``krylov_dim`` the run restarts from the leading unconverged Ritz vector.
    """
    n = op.shape[0]
    locked_vals: list[float] = []
    locked = np.empty((0, n))
    used = 0
    start = rng.standard_normal(n)
    best_vals, best_res = np.full(m, np.nan), np.full(m, np.inf)
    while len(locked_vals) < m:
        want = m - len(locked_vals)
        kmax = min(n - len(locked_vals), krylov_dim, max_iter - used)
        if kmax < 1:
            raise ConvergenceError(
                f"Lanczos did not converge within {max_iter} iterations", best_vals, best_res
            )
        Q = np.empty((kmax, n))
        q = _orthonormalize(start, [locked])
        Q[0] = q / np.linalg.norm(q)
        alpha, beta = [], []
        for j in range(kmax):
            w = op.matvec(Q[j])
            used += 1
            a = float(Q[j] @ w)
            w = w - a * Q[j] - (beta[-1] * Q[j - 1] if j else 0.0)
            w = _orthonormalize(w, [Q[: j + 1], locked])
            b = float(np.linalg.norm(w))
            alpha.append(a)
            if j == 0:
                theta, S = np.array([a]), np.ones((1, 1))
            else:
                theta, S = scipy.linalg.eigh_tridiagonal(np.array(alpha), np.array(beta))
            top = np.argsort(theta)[::-1][:want]
            est = b * np.abs(S[-1, top])
            ok = est <= tol * np.maximum(1.0, np.abs(theta[top]))
            nconv = len(top) if ok.all() else int(np.argmin(ok))
            filled = len(locked_vals)
            best_vals[filled : filled + len(top)] = theta[top]
            best_res[filled : filled + len(top)] = est
            if (nconv == want and len(top) == want) or j == kmax - 1:
                break
            scale = max(1.0, float(np.max(np.abs(theta))))
            if b <= 1e-12 * scale:
                # invariant subspace: continue from a fresh direction
                w = _orthonormalize(rng.standard_normal(n), [Q[: j + 1], locked])
                b_next, w = 0.0, w / np.linalg.norm(w)
            else:
                b_next, w = b, w / b
            beta.append(b_next)
            Q[j + 1] = w
        basis = Q[: len(alpha)]
        vecs = S[:, top].T @ basis
        new = 0
        for c in range(nconv):
            v = vecs[c] / np.linalg.norm(vecs[c])
            res = np.linalg.norm(op.matvec(v) - theta[top[c]] * v)
            if res > tol * max(1.0, abs(theta[top[c]])):
                break
            locked_vals.append(float(theta[top[c]]))
            locked = np.vstack([locked, v])
            new += 1
        if new < len(top):
            start = vecs[new]
    order = np.argsort(locked_vals)[::-1]
    return np.asarray(locked_vals)[order], locked[order]


def top_eigenpairs(
    operator,
    m: int,
    tol: float = 1e-9,
    *,
    n: int | None = None,
    max_iter: int | None = None,
    krylov_dim: int | None = None,
    references=None,
    seed: int = 0,
    dense_threshold: int = DENSE_THRESHOLD,
) -> list[EigenPair]:
    """The m largest eigenpairs of a symmetric operator, sorted descending.

    Dimensions up to ``dense_threshold`` use a dense symmetric eigensolver;
    larger ones use Lanczos. ``references[p]``, when given, fixes the sign of
    pair p so that its overlap with the reference is non-negative; otherwise
    the first clearly non-zero coordinate is made positive. Residuals satisfy
    ||Av - lambda v|| <= tol * max(1, |lambda|).
    """
    op = as_operator(operator, n)
    N = op.shape[0]
    if not 1 <= m <= N:
        raise ValueError(f"need 1 <= m <= N (m={m}, N={N})")
    if N <= dense_threshold:
        mat = op.matmat(np.eye(N))
        vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
        vals, vecs = vals[::-1][:m], vecs[:, ::-1][:, :m].T
    else:
        # the (k+1)-th pair sits at the bulk edge, where gaps shrink with N
        max_iter = 10 * m + 500 if max_iter is None else max_iter
        rng = np.random.default_rng(seed)
        vals, vecs = _lanczos(op, m, tol, max_iter, krylov_dim or max_iter, rng)
    pairs = []
    for p in range(m):
        ref = references[p] if references is not None and p < len(references) else None
        v = _fix_sign(vecs[p], ref)
        res = float(np.linalg.norm(op.matvec(v) - vals[p] * v))
        pairs.append(EigenPair(float(vals[p]), v, res))
    return pairs


def adjacency_operator(g: GraphSample) -> LinearOperator:
    return LinearOperator((g.N, g.N), matvec=lambda x: apply_A(g, x), matmat=lambda x: apply_A(g, x), dtype=float)


def w_operator(g: GraphSample, spec: KernelSpec, sign: float = 1.0) -> LinearOperator:
    def mv(x):
        return sign * apply_W(g, spec, x)

    return LinearOperator((g.N, g.N), matvec=mv, matmat=mv, dtype=float)


def operator_norm_W(g: GraphSample, spec: KernelSpec, tol: float = 1e-8, max_iter: int = 1000) -> float:
    """||W|| = max(lambda_1(W), lambda_1(-W)) from two eigensolves."""
    hi = top_eigenpairs(w_operator(g, spec), 1, tol, max_iter=max_iter)[0].value
    lo = top_eigenpairs(w_operator(g, spec, -1.0), 1, tol, max_iter=max_iter)[0].value
    return max(hi, lo)


def _neumann(g, spec, mu, b):
    term = b.copy()
    y = b.copy()
    for _ in range(NEUMANN_MAX_TERMS):
        term = apply_W(g, spec, term) / mu
        y += term
        if np.linalg.norm(term) <= 1e-16 * np.linalg.norm(y):
            break
    return y


def resolvent_V(g: GraphSample, spec: KernelSpec, mu: float, norm_W: float | None = None) -> np.ndarray:
    """V(j, l) = N eps sqrt(theta_j theta_l) e_j' (I - W/mu)^{-1} e_l, for mu > ||W||.

    Each column is solved with MINRES (I - W/mu is positive definite there),
    falling back to the Neumann series sum_n (W/mu)^n e_l.
    """
    nw = operator_norm_W(g, spec) if norm_W is None else norm_W
    if not mu > nw:
        raise ResolventDomainError(f"mu = {mu:.6g} does not exceed ||W|| = {nw:.6g}")
    e = discretize(spec, g.N)

    def mv(x):
        return x - apply_W(g, spec, x) / mu

    op = LinearOperator((g.N, g.N), matvec=mv, dtype=float)
    Y = np.empty_like(e)
    for l in range(spec.rank):
        b = np.array(e[l])
        y, _ = minres(op, b, rtol=1e-13, maxiter=10 * g.N)
        if np.linalg.norm(mv(y) - b) > SOLVE_RESIDUAL:
            y = _neumann(g, spec, mu, b)
            res = np.linalg.norm(mv(y) - b)
            if res > SOLVE_RESIDUAL:
                raise ConvergenceError(f"resolvent solve residual {res:.3g}", [mu], [res])
        Y[l] = y
    st = np.sqrt(np.asarray(spec.thetas))
    V = g.N * g.epsilon * np.outer(st, st) * (e @ Y.T)
    return 0.5 * (V + V.T)


def overlap(v, e, reference=None) -> float:
    """e'v after flipping v so that its overlap with ``reference`` (default e) is >= 0."""
    v = np.asarray(v, dtype=float)
    e = np.asarray(e, dtype=float)
    if v.shape != e.shape:
        raise ValueError(f"dimension mismatch: {v.shape} vs {e.shape}")
    ref = e if reference is None else np.asarray(reference, dtype=float)
    if ref.shape != v.shape:
        raise ValueError("reference dimension mismatch")
    if float(ref @ v) < 0:
        v = -v
    return float(e @ v)
