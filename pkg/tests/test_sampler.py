import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from errg_spectra.kernel import Polynomial, SBMParams, constant_kernel, discretize, eval_f, kernel_from_sbm, kernel_rank_one
from errg_spectra.rng import RowStreams, derive_seed, row_generator
from errg_spectra.sampler import (
    GraphSample,
    KernelMismatchError,
    ProbabilityOverflowError,
    _varint_decode,
    _varint_encode,
    apply_A,
    apply_W,
    from_binary,
    from_text,
    read_binary,
    read_text,
    sample_graph,
    to_binary,
    to_text,
    write_binary,
    write_text,
)
from errg_spectra.theory import exact_bilinear_cov

TWO_BLOCK = kernel_from_sbm(SBMParams(((2.0, 0.0), (0.0, 1.0)), (0.0, 0.5, 1.0)))
MIXED = kernel_from_sbm(SBMParams(((2.0, 0.5), (0.5, 1.0)), (0.0, 0.5, 1.0)))
SQRT3X = kernel_rank_one(1.0, Polynomial((0.0, math.sqrt(3.0))))
ONES = constant_kernel()


def graph_from_edges(N, edges, spec=ONES, eps=0.1):
    edges = np.array(sorted((min(a, b), max(a, b)) for a, b in edges), dtype=np.int64).reshape(-1, 2)
    indptr = np.concatenate([[0], np.cumsum(np.bincount(edges[:, 0], minlength=N))])
    return GraphSample(N, eps, spec.kernel_id, 0, indptr.astype(np.int64), edges[:, 1].copy())


def dense_W(g, spec):
    e = discretize(spec, g.N)
    return g.dense() - g.N * g.epsilon * (e.T * np.asarray(spec.thetas)) @ e


class TestStreams:
    def test_row_streams_match_fresh_generators(self):
        s = RowStreams(2**63 + 5)
        for row in (0, 1, 17, 4095):
            assert np.array_equal(s.row(row).random(7), row_generator(2**63 + 5, row).random(7))

    def test_derive_seed_distinct(self):
        seeds = {derive_seed(1, N, r) for N in (100, 200) for r in range(500)}
        assert len(seeds) == 1000
        assert derive_seed(1, 100, 3) == derive_seed(1, 100, 3)

    def test_seed_range(self):
        with pytest.raises(ValueError):
            RowStreams(-1)
        with pytest.raises(ValueError):
            row_generator(2**64, 0)


class TestSampleGraph:
    @pytest.mark.parametrize("spec", [TWO_BLOCK, MIXED, SQRT3X, ONES])
    def test_structure_and_determinism(self, spec):
        g = sample_graph(spec, 300, 0.2, 42)
        edges = g.upper_edges
        assert np.all(edges[:, 0] <= edges[:, 1])
        keys = edges[:, 0] * g.N + edges[:, 1]
        assert np.all(np.diff(keys) > 0)
        assert g.digest() == sample_graph(spec, 300, 0.2, 42).digest()
        assert g.digest() != sample_graph(spec, 300, 0.2, 43).digest()

    def test_complete_graph(self):
        g = sample_graph(ONES, 50, 1.0, 0)
        assert g.edge_count == 50 * 51 // 2
        assert np.all(g.dense() == 1.0)

    def test_zero_region_never_sampled(self):
        for seed in range(20):
            edges = sample_graph(TWO_BLOCK, 200, 0.5, seed).upper_edges
            x = (edges + 1) / 200  # grid points; x = 1/2 opens the second block
            assert not np.any((x[:, 0] < 0.5) & (x[:, 1] >= 0.5))
            assert np.any(x[:, 0] >= 0.5)

    def test_edge_count_moments(self):
        N, eps = 2000, 0.01
        mean = eps * N * (N + 1) / 2
        sd = math.sqrt(mean * (1 - eps))
        counts = np.array([sample_graph(ONES, N, eps, s).edge_count for s in range(100)])
        assert np.sum(np.abs(counts - mean) > 4 * sd) <= 1
        assert abs(counts.mean() - mean) <= 4 * sd / 10

    def test_exchangeability(self):
        N, eps, R = 60, 0.2, 400
        total = sum(sample_graph(ONES, N, eps, s).edge_count for s in range(R))
        pairs = R * N * (N + 1) / 2
        assert abs(total / pairs - eps) <= 3 * math.sqrt(eps * (1 - eps) / pairs)

    def test_errors(self):
        with pytest.raises(ProbabilityOverflowError):
            sample_graph(SQRT3X, 10, 0.5, 0)
        with pytest.raises(ValueError):
            sample_graph(ONES, 0, 0.5, 0)


def _pair_frequency_check(spec, N, eps, seeds):
    counts = np.zeros((N, N))
    for s in range(seeds):
        e = sample_graph(spec, N, eps, s).upper_edges
        counts[e[:, 0], e[:, 1]] += 1
    grid = np.arange(1, N + 1) / N
    p = eps * eval_f(spec, grid[:, None], grid[None, :])
    iu = np.triu_indices(N)
    freq = counts[iu] / seeds
    sd = np.sqrt(p[iu] * (1 - p[iu]) / seeds)
    z = np.abs(freq - p[iu]) / np.where(sd > 0, sd, 1.0)
    assert np.all(freq[sd == 0] == p[iu][sd == 0])
    return z


@pytest.mark.slow
def test_pair_frequencies_rejection_sampler():
    z = _pair_frequency_check(SQRT3X, 20, 0.3, 100_000)
    assert z.max() < 4, z.max()


@pytest.mark.slow
def test_pair_frequencies_block_sampler():
    z = _pair_frequency_check(MIXED, 20, 0.4, 100_000)
    assert z.max() < 4, z.max()


class TestApply:
    def test_empty_graph(self):
        g = graph_from_edges(5, [])
        assert np.all(apply_A(g, np.arange(5.0)) == 0)

    def test_single_edge(self):
        g = graph_from_edges(4, [(0, 1)])
        assert np.array_equal(apply_A(g, np.eye(4)[0]), np.eye(4)[1])

    def test_self_loop_counted_once(self):
        g = graph_from_edges(3, [(1, 1)])
        assert np.array_equal(apply_A(g, np.ones(3)), [0.0, 1.0, 0.0])

    def test_matches_dense(self):
        g = sample_graph(MIXED, 150, 0.3, 1)
        A = g.dense()
        assert np.array_equal(A, A.T)
        X = np.random.default_rng(0).standard_normal((150, 3))
        assert np.allclose(apply_A(g, X), A @ X, atol=1e-12)
        assert np.allclose(apply_W(g, MIXED, X), dense_W(g, MIXED) @ X, atol=1e-11)

    def test_dimension_mismatch(self):
        g = sample_graph(ONES, 10, 0.5, 0)
        with pytest.raises(ValueError):
            apply_A(g, np.ones(11))
        with pytest.raises(ValueError):
            apply_W(g, ONES, np.ones(9))

    def test_kernel_mismatch(self):
        g = sample_graph(ONES, 10, 0.5, 0)
        with pytest.raises(KernelMismatchError):
            apply_W(g, TWO_BLOCK, np.ones(10))

    def test_deterministic_graph_has_zero_W(self):
        g = sample_graph(ONES, 40, 1.0, 3)
        x = np.random.default_rng(1).standard_normal(40)
        assert np.max(np.abs(apply_W(g, ONES, x))) <= 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32), st.floats(-3, 3), st.floats(-3, 3))
    def test_symmetry_and_linearity(self, seed, a, b):
        g = sample_graph(MIXED, 80, 0.3, seed)
        rng = np.random.default_rng(seed)
        x, y = rng.standard_normal((2, 80))
        assert apply_A(g, x) @ y == pytest.approx(x @ apply_A(g, y), abs=1e-12 * (1 + np.abs(x).sum() * np.abs(y).sum()))
        lhs = apply_W(g, MIXED, a * x + b * y)
        rhs = a * apply_W(g, MIXED, x) + b * apply_W(g, MIXED, y)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + np.max(np.abs(lhs)))


def test_bilinear_forms_against_exact_covariance():
    """Monte Carlo mean and variance of e_i'W e_j over 10^4 replicates at N = 100."""
    N, eps, R = 100, 0.3, 10_000
    e = discretize(MIXED, N)
    vals = np.empty((R, 2, 2))
    first = np.empty((R, N))
    for s in range(R):
        g = sample_graph(MIXED, N, eps, s)
        We = apply_W(g, MIXED, e.T)
        first[s] = We[:, 0]
        vals[s] = e @ We
    # apply_W(e_1) coordinates have mean zero
    se = first.std(axis=0, ddof=1) / math.sqrt(R)
    assert np.mean(np.abs(first.mean(axis=0)) <= 3 * se) >= 0.97
    for i, j in [(0, 0), (0, 1), (1, 1)]:
        x = vals[:, i, j]
        exact = exact_bilinear_cov(MIXED, N, eps, i, j, i, j)
        var = x.var(ddof=1)
        # standard error of a sample variance: sqrt((m4 - var^2) / R)
        m4 = np.mean((x - x.mean()) ** 4)
        assert abs(var - exact) <= 3 * math.sqrt((m4 - var**2) / R), (i, j, var, exact)
        assert abs(x.mean()) <= 3 * x.std(ddof=1) / math.sqrt(R)


class TestSerialization:
    @pytest.mark.parametrize("spec", [TWO_BLOCK, SQRT3X])
    def test_round_trips(self, spec, tmp_path):
        g = sample_graph(spec, 500, 0.2, 77)
        assert from_binary(to_binary(g)).digest() == g.digest()
        assert from_text(to_text(g)).digest() == g.digest()
        write_binary(g, tmp_path / "g.bin")
        write_text(g, tmp_path / "g.txt")
        assert read_binary(tmp_path / "g.bin").digest() == g.digest()
        assert read_text(tmp_path / "g.txt").digest() == g.digest()

    def test_text_is_one_indexed(self):
        g = graph_from_edges(3, [(0, 0), (1, 2)])
        body = [line for line in to_text(g).splitlines() if not line.startswith("#")]
        assert body == ["1 1", "2 3"]

    def test_bad_magic(self):
        data = bytearray(to_binary(sample_graph(ONES, 10, 0.5, 0)))
        data[:4] = b"XXXX"
        with pytest.raises(ValueError):
            from_binary(bytes(data))

    def test_truncated(self):
        data = to_binary(sample_graph(ONES, 30, 0.5, 0))
        with pytest.raises(ValueError):
            from_binary(data[:-3])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 2**62), max_size=50))
    def test_varint_round_trip(self, values):
        arr = np.array(values, dtype=np.uint64)
        assert np.array_equal(_varint_decode(_varint_encode(arr), len(values)), arr)
