"""Deterministic predictions at finite N: variance profile, E(W^2) forms, the B-matrix,
limiting fluctuation covariances, rank-one mean expansion and eigenvector-overlap laws.

All finite-N quantities are exact. Entries of W above the diagonal (and on it)
are independent with Var W(a, c) = eps f (1 - eps f) evaluated at (a/N, c/N);
sums over the N x N variance profile are reduced to O(N k^2) work using
f(a, c) = sum_l theta_l r_l(a/N) r_l(c/N).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernel import KernelSpec, discretize, integrate_product, isolated_indices


def _check_index(i, k, what="index"):
    if not 0 <= i < k:
        raise IndexError(f"{what} {i} out of range for rank {k}")


def var_profile(spec: KernelSpec, N: int, epsilon: float, a: int, c: int) -> float:
    """Bernoulli variance of A(a, c); vertex indices are 0-based (grid point (a+1)/N)."""
    for idx in (a, c):
        if not 0 <= idx < N:
            raise IndexError(f"vertex index {idx} out of range for N = {N}")
    e = discretize(spec, N)
    p = epsilon * N * float(np.sum(np.asarray(spec.thetas) * e[:, a] * e[:, c]))
    return p * (1.0 - p)


def _grid_values(spec, N):
    """r_l(a/N) as a (k, N) array."""
    return discretize(spec, N) * np.sqrt(N)


def variance_row_sums(spec: KernelSpec, N: int, epsilon: float) -> np.ndarray:
    """d(a) = sum_c Var A(a, c), the diagonal of E(W^2) (which is diagonal)."""
    R = _grid_values(spec, N)
    th = np.asarray(spec.thetas)
    first = (th[:, None] * R).T @ R.sum(axis=1)
    G = R @ R.T  # G[l, m] = sum_c r_l r_m
    second = np.einsum("la,ma,lm->a", th[:, None] * R, th[:, None] * R, G)
    return epsilon * first - epsilon**2 * second


def expected_W2_form(spec: KernelSpec, N: int, epsilon: float, j: int, l: int) -> float:
    """E(e_j' W^2 e_l) = sum_a e_j(a) e_l(a) sum_c Var A(a, c)."""
    _check_index(j, spec.rank)
    _check_index(l, spec.rank)
    e = discretize(spec, N)
    return float(np.sum(e[j] * e[l] * variance_row_sums(spec, N, epsilon)))


def expected_W2_matrix(spec: KernelSpec, N: int, epsilon: float) -> np.ndarray:
    e = discretize(spec, N)
    return (e * variance_row_sums(spec, N, epsilon)) @ e.T


def b_matrix(spec: KernelSpec, N: int, epsilon: float, i: int):
    """B(j,l) = sqrt(th_j th_l) [N eps e_j'e_l + th_i^{-2} (N eps)^{-1} E(e_j' W^2 e_l)].

    Returns (B, eigenvalues in descending order); lambda_i(B) approximates E[lambda_i(A)].
    """
    _check_index(i, spec.rank)
    if i not in isolated_indices(spec.thetas):
        raise ValueError(f"component {i} is not isolated")
    e = discretize(spec, N)
    th = np.asarray(spec.thetas)
    st = np.sqrt(th)
    ne = N * epsilon
    B = np.outer(st, st) * (ne * (e @ e.T) + expected_W2_matrix(spec, N, epsilon) / (th[i] ** 2 * ne))
    B = 0.5 * (B + B.T)
    return B, np.linalg.eigvalsh(B)[::-1]


def asymptotic_cov_G(spec: KernelSpec, eps_infty: float, i: int, j: int) -> float:
    """2 int int r_i r_j(x) r_i r_j(y) f(x,y) [1 - eps_infty f(x,y)] dx dy.

    f is separable, so the double integral reduces to one-dimensional
    integrals of eigenfunction products, each computed exactly.
    """
    _check_index(i, spec.rank)
    _check_index(j, spec.rank)
    r = spec.eigenfunctions
    th = spec.thetas
    k = spec.rank
    first = sum(th[l] * integrate_product([r[i], r[j], r[l]]) ** 2 for l in range(k))
    second = 0.0
    if eps_infty:
        for l in range(k):
            for m in range(k):
                second += th[l] * th[m] * integrate_product([r[i], r[j], r[l], r[m]]) ** 2
    return 2.0 * (first - eps_infty * second)


def asymptotic_cov_matrix(spec: KernelSpec, eps_infty: float, indices) -> np.ndarray:
    idx = list(indices)
    S = np.empty((len(idx), len(idx)))
    for p, i in enumerate(idx):
        for q, j in enumerate(idx[p:], start=p):
            S[p, q] = S[q, p] = asymptotic_cov_G(spec, eps_infty, i, j)
    return S


def exact_bilinear_cov(spec: KernelSpec, N: int, epsilon: float, a: int, b: int, c: int, d: int) -> float:
    """Cov(e_a' W e_b, e_c' W e_d) exactly at finite N.

    With x, y, u, w = e_a, e_b, e_c, e_d and V the variance profile,
    sum_{i<j} (x_i y_j + x_j y_i)(u_i w_j + u_j w_i) V_ij + sum_i x_i y_i u_i w_i V_ii
    = (x u)' V (y w) + (x w)' V (y u) - sum_i x_i y_i u_i w_i V_ii.
    """
    for idx in (a, b, c, d):
        _check_index(idx, spec.rank)
    e = discretize(spec, N)
    x, y, u, w = e[a], e[b], e[c], e[d]
    R = _grid_values(spec, N)
    th = np.asarray(spec.thetas)

    def quad(p, q):
        # p' V q with V = eps F - eps^2 F*F, F = R' diag(th) R
        lin = float(np.sum(th * (R @ p) * (R @ q)))
        RR = R[:, None, :] * R[None, :, :]
        sq = float(np.sum(np.outer(th, th) * (RR @ p) * (RR @ q)))
        return epsilon * lin - epsilon**2 * sq

    fdiag = th @ (R * R)
    vdiag = epsilon * fdiag * (1.0 - epsilon * fdiag)
    return quad(x * u, y * w) + quad(x * w, y * u) - float(np.sum(x * y * u * w * vdiag))


def rank_one_mean(spec: KernelSpec, N: int, epsilon: float) -> float:
    """theta N eps + (int r^3)(int r), the rank-one expansion of E[lambda_1(A)]."""
    if spec.rank != 1:
        raise ValueError("rank_one_mean needs a rank-one kernel")
    r = spec.eigenfunctions[0]
    return spec.thetas[0] * N * epsilon + integrate_product([r, r, r]) * integrate_product([r])


def z_shift(spec: KernelSpec, N: int, epsilon: float, i: int, j: int) -> float:
    """Deterministic centering E(e_i' W^2 e_j) / ((N eps)^2 th_i (th_i - th_j)) of e_j'v."""
    th = spec.thetas
    if th[i] == th[j]:
        raise ValueError("theta_i == theta_j: overlap law has a pole")
    return expected_W2_form(spec, N, epsilon, i, j) / ((N * epsilon) ** 2 * th[i] * (th[i] - th[j]))


def overlap_law(theta_i, theta_j, n_eps, w2_ij, lambda_i, bilinear_W):
    """(th_i bilinear_W / lambda_i + (N eps)^{-2} th_i^{-1} E(e_i'W^2 e_j)) / (th_i - th_j).

    Vectorizes over ``lambda_i`` and ``bilinear_W``.
    """
    if theta_i == theta_j:
        raise ValueError("theta_i == theta_j: overlap law has a pole")
    lam = np.asarray(lambda_i, dtype=float)
    if not np.all(lam > 0):
        raise ValueError("lambda_i must be positive")
    out = (theta_i * np.asarray(bilinear_W, dtype=float) / lam + w2_ij / (n_eps**2 * theta_i)) / (theta_i - theta_j)
    return float(out) if out.ndim == 0 else out


def eigvec_overlap_prediction(
    spec: KernelSpec, N: int, epsilon: float, i: int, j: int, lambda_i: float, bilinear_W: float
) -> float:
    """Predicted e_j'v for the eigenvector v of lambda_i(A), given e_i'W e_j on the same sample."""
    _check_index(i, spec.rank)
    _check_index(j, spec.rank)
    th = spec.thetas
    w2 = expected_W2_form(spec, N, epsilon, i, j)
    return overlap_law(th[i], th[j], N * epsilon, w2, lambda_i, bilinear_W)


@dataclass
class PredictionSet:
    """Every deterministic prediction for one (kernel, N, eps).

    Index conventions: ``isolated`` is 0-based; ``B`` and ``lambda_B`` are
    keyed/positioned by component; ``lambda_B[i]`` is lambda_i(B) built for
    that i (None for non-isolated components).
    """

    kernel_id: str
    N: int
    epsilon: float
    eps_infty: float
    thetas: tuple[float, ...]
    isolated: tuple[int, ...]
    gram: np.ndarray
    B: dict[int, np.ndarray]
    lambda_B: list
    sigma_G: np.ndarray
    exact_sigma: np.ndarray
    bilinear_cov: np.ndarray
    expected_W2: np.ndarray
    z_shift: dict[tuple[int, int], float] = field(default_factory=dict)
    rank_one_mean: float | None = None
    sup_bound: float = 1.0

    def to_dict(self) -> dict:
        """JSON form; component labels are 1-based, matrices are nested row-major lists."""

        def mat(a):
            a = np.asarray(a)
            return {"shape": list(a.shape), "data": a.tolist()}

        return {
            "kernel_id": self.kernel_id,
            "N": self.N,
            "epsilon": self.epsilon,
            "eps_infty": self.eps_infty,
            "thetas": list(self.thetas),
            "isolated_set": [i + 1 for i in self.isolated],
            "gram_e": mat(self.gram),
            "B": {str(i + 1): mat(b) for i, b in self.B.items()},
            "lambda_B": self.lambda_B,
            "Sigma_G": mat(self.sigma_G),
            "exact_Sigma": mat(self.exact_sigma),
            "bilinear_var_over_eps": mat(self.bilinear_cov),
            "expected_W2": mat(self.expected_W2),
            "z_shift": {f"{i + 1},{j + 1}": z for (i, j), z in self.z_shift.items()},
            "rank_one_mean": self.rank_one_mean,
            "sup_bound": self.sup_bound,
        }


def predictions(spec: KernelSpec, N: int, epsilon: float, eps_infty: float | None = None) -> PredictionSet:
    """Assemble the full PredictionSet; eps_infty defaults to epsilon (a constant eps sequence)."""
    eps_infty = epsilon if eps_infty is None else float(eps_infty)
    iso = isolated_indices(spec.thetas)
    k = spec.rank
    e = discretize(spec, N)
    B, lam = {}, [None] * k
    for i in iso:
        B[i], vals = b_matrix(spec, N, epsilon, i)
        lam[i] = float(vals[i])
    sigma = asymptotic_cov_matrix(spec, eps_infty, iso)
    exact = np.empty((len(iso), len(iso)))
    for p, i in enumerate(iso):
        for q, j in enumerate(iso):
            exact[p, q] = exact_bilinear_cov(spec, N, epsilon, i, i, j, j) / epsilon
    # Var(e_i' W e_j) / eps for every pair, the scale of the cross-overlap fluctuations
    bil = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            bil[i, j] = bil[j, i] = exact_bilinear_cov(spec, N, epsilon, i, j, i, j) / epsilon
    zs = {}
    for i in iso:
        for j in range(k):
            if j != i and spec.thetas[i] != spec.thetas[j]:
                zs[(i, j)] = z_shift(spec, N, epsilon, i, j)
    return PredictionSet(
        kernel_id=spec.kernel_id,
        N=N,
        epsilon=epsilon,
        eps_infty=eps_infty,
        thetas=spec.thetas,
        isolated=iso,
        gram=e @ e.T,
        B=B,
        lambda_B=lam,
        sigma_G=sigma,
        exact_sigma=exact,
        bilinear_cov=bil,
        expected_W2=expected_W2_matrix(spec, N, epsilon),
        z_shift=zs,
        rank_one_mean=rank_one_mean(spec, N, epsilon) if k == 1 else None,
        sup_bound=spec.sup_bound,
    )
