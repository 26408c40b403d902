import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from errg_spectra.kernel import (
    KernelSpec,
    PiecewiseConstant,
    Polynomial,
    SBMParams,
    Tabulated,
    constant_kernel,
    discretize,
    eval_f,
    gram_matrix,
    integrate_product,
    isolated_indices,
    kernel_from_dict,
    kernel_from_sbm,
    kernel_rank_one,
    kernel_to_dict,
    load_kernel,
    save_kernel,
    validate,
)

GRID = (np.arange(256) + 0.5) / 256


def two_block(theta=2.0):
    return kernel_from_sbm(SBMParams(((theta, 0.0), (0.0, 1.0)), (0.0, 0.5, 1.0)))


SQRT3X = Polynomial((0.0, math.sqrt(3.0)))


class TestSBM:
    def test_two_block_thetas_and_eigenfunctions(self):
        spec = two_block()
        assert spec.thetas == pytest.approx((1.0, 0.5), abs=1e-12)
        r1, r2 = spec.eigenfunctions
        assert r1(0.25) == pytest.approx(math.sqrt(2), abs=1e-12)
        assert r1(0.75) == 0.0
        assert r2(0.25) == 0.0
        assert r2(1.0) == pytest.approx(math.sqrt(2), abs=1e-12)

    def test_homogeneous(self):
        spec = kernel_from_sbm(SBMParams(((1.0,),), (0.0, 1.0)))
        assert spec.thetas == pytest.approx((1.0,))
        assert spec.eigenfunctions[0](0.3) == pytest.approx(1.0)

    def test_equal_blocks_have_no_isolated_index(self):
        spec = kernel_from_sbm(SBMParams(((1.0, 0.0), (0.0, 1.0)), (0.0, 0.5, 1.0)))
        assert spec.thetas == pytest.approx((0.5, 0.5))
        assert isolated_indices(spec.thetas) == ()
        # ties broken by the dominant block index
        assert spec.eigenfunctions[0](0.25) > 0 and spec.eigenfunctions[0](0.75) == 0

    def test_reconstruction(self):
        p = np.array([[2.0, 0.5, 0.1], [0.5, 1.0, 0.3], [0.1, 0.3, 0.7]])
        params = SBMParams(p, (0.0, 0.2, 0.7, 1.0))
        spec = kernel_from_sbm(params)
        X, Y = np.meshgrid(GRID, GRID)
        assert np.max(np.abs(eval_f(spec, X, Y) - params.f(X, Y))) <= 1e-10

    @pytest.mark.parametrize(
        "p, b",
        [
            (((1.0, 0.2), (0.3, 1.0)), (0.0, 0.5, 1.0)),  # not symmetric
            (((1.0, 2.0), (2.0, 1.0)), (0.0, 0.5, 1.0)),  # not positive definite
            (((1.0, 0.0), (0.0, 1.0)), (0.0, 0.5, 0.5)),  # empty block
            (((1.0, 0.0), (0.0, 1.0)), (0.0, 0.5, 0.9)),  # does not reach 1
        ],
    )
    def test_invalid(self, p, b):
        with pytest.raises(ValueError):
            SBMParams(p, b)


class TestRankOne:
    def test_constant(self):
        spec = kernel_rank_one(1.0, Polynomial((1.0,)))
        assert spec.sup_bound == pytest.approx(1.0)

    def test_sqrt3x(self):
        spec = kernel_rank_one(1.0, SQRT3X)
        assert spec.sup_bound == pytest.approx(3.0)
        assert eval_f(spec, 0.5, 0.4) == pytest.approx(0.6)

    def test_indicator(self):
        r = PiecewiseConstant((0.0, 0.5, 1.0), (math.sqrt(2), 0.0))
        spec = kernel_rank_one(2.0, r)
        assert spec.sup_bound == pytest.approx(4.0)
        assert eval_f(spec, 0.1, 0.2) == pytest.approx(4.0)
        assert eval_f(spec, 0.1, 0.7) == 0.0

    def test_negative_eigenfunction_rejected(self):
        with pytest.raises(ValueError):
            kernel_rank_one(1.0, Polynomial((math.sqrt(3) / 2 * 2, -math.sqrt(3) * 2)))

    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError):
            kernel_rank_one(1.0, Polynomial((2.0,)))


class TestEvalAndDiscretize:
    def test_two_block_values(self):
        spec = two_block()
        assert eval_f(spec, 0.25, 0.25) == pytest.approx(2.0)
        assert eval_f(spec, 0.25, 0.75) == 0.0
        assert eval_f(spec, 0.75, 0.75) == pytest.approx(1.0)

    def test_constant_everywhere(self):
        spec = constant_kernel()
        assert np.all(eval_f(spec, GRID[:, None], GRID[None, :]) == 1.0)

    @pytest.mark.parametrize("x, y", [(-0.1, 0.5), (0.5, 1.0001), (float("nan"), 0.2)])
    def test_outside_domain(self, x, y):
        with pytest.raises(ValueError):
            eval_f(constant_kernel(), x, y)

    def test_exact_symmetry_on_grid(self):
        spec = kernel_from_sbm(SBMParams(((2.0, 0.5), (0.5, 1.0)), (0.0, 0.3, 1.0)))
        X, Y = np.meshgrid(GRID, GRID)
        assert np.array_equal(eval_f(spec, X, Y), eval_f(spec, Y, X))

    def test_indicator_grid(self):
        e = discretize(two_block(), 4)
        assert e[0] == pytest.approx([math.sqrt(2) / 2, 0, 0, 0])

    def test_constant_grid_norm(self):
        e = discretize(constant_kernel(), 37)[0]
        assert np.allclose(e, 37**-0.5)
        assert e @ e == pytest.approx(1.0, abs=1e-14)

    def test_sqrt3x_grid_norm(self):
        N = 1000
        e = discretize(kernel_rank_one(1.0, SQRT3X), N)[0]
        closed = 3 * N ** -3 * N * (N + 1) * (2 * N + 1) / 6
        assert e @ e == pytest.approx(closed, rel=1e-12)
        assert abs(e @ e - 1) < 2 / N

    def test_discretize_read_only(self):
        e = discretize(constant_kernel(), 8)
        with pytest.raises(ValueError):
            e[0, 0] = 3.0


class TestValidation:
    def test_two_block_report(self):
        rep = validate(two_block())
        assert rep.ok
        assert rep.isolated == (0, 1)
        assert rep.to_dict()["isolated_set"] == [1, 2]
        assert rep.krein_rutman_applicable is False

    def test_constant_krein_rutman(self):
        rep = validate(constant_kernel())
        assert rep.krein_rutman_applicable and rep.krein_rutman_passed
        assert rep.isolated == (0,)

    def test_trace_property(self):
        spec = kernel_from_sbm(SBMParams(((2.0, 0.5), (0.5, 1.0)), (0.0, 0.3, 1.0)))
        assert validate(spec).trace_defect <= 1e-12

    def test_non_orthonormal_rejected(self):
        with pytest.raises(ValueError):
            KernelSpec((1.0, 0.5), (Polynomial((1.0,)), Polynomial((1.0,))))

    def test_increasing_thetas_rejected(self):
        r1 = PiecewiseConstant((0.0, 0.5, 1.0), (math.sqrt(2), 0.0))
        r2 = PiecewiseConstant((0.0, 0.5, 1.0), (0.0, math.sqrt(2)))
        with pytest.raises(ValueError):
            KernelSpec((0.5, 1.0), (r1, r2))

    def test_negative_kernel_rejected(self):
        # theta_2 r_2 r_2 with r_2 sign-changing and small theta_1 gives f < 0 somewhere
        r1 = Polynomial((1.0,))
        r2 = Polynomial((-math.sqrt(3), 2 * math.sqrt(3)))
        with pytest.raises(ValueError):
            KernelSpec((1.0, 0.9), (r1, r2))

    def test_isolation_tolerance(self):
        assert isolated_indices((1.0, 1.0 - 1e-12, 0.5)) == (2,)
        assert isolated_indices((1.0, 0.5, 0.25)) == (0, 1, 2)


class TestQuadrature:
    def test_products_of_polynomials(self):
        assert integrate_product([SQRT3X] * 3) == pytest.approx(3 * math.sqrt(3) / 4, abs=1e-14)
        assert integrate_product([SQRT3X]) == pytest.approx(math.sqrt(3) / 2, abs=1e-14)
        assert integrate_product([SQRT3X] * 4) == pytest.approx(9 / 5, abs=1e-13)

    def test_mixed_piecewise(self):
        r = PiecewiseConstant((0.0, 0.25, 1.0), (2.0, 0.0))
        # int_0^{1/4} 2 * sqrt(3) x dx = sqrt(3)/16
        assert integrate_product([r, SQRT3X]) == pytest.approx(math.sqrt(3) / 16, abs=1e-14)

    def test_tabulated_linear_is_exact(self):
        t = Tabulated((0.0, 0.5, 1.0), (0.0, math.sqrt(3) / 2, math.sqrt(3)))
        assert gram_matrix([t])[0, 0] == pytest.approx(1.0, abs=1e-14)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=5), st.lists(st.floats(-3, 3), min_size=1, max_size=5))
    def test_polynomial_product_matches_closed_form(self, a, b):
        pa, pb = Polynomial(tuple(a)), Polynomial(tuple(b))
        closed = sum(x * y / (i + j + 1) for i, x in enumerate(a) for j, y in enumerate(b))
        assert integrate_product([pa, pb]) == pytest.approx(closed, abs=1e-12 * (1 + abs(closed)))


@st.composite
def sbm_params(draw):
    k = draw(st.integers(1, 4))
    cuts = sorted(set(draw(st.lists(st.floats(0.05, 0.95), min_size=k - 1, max_size=k - 1))))
    if len(cuts) != k - 1 or any(b - a < 0.02 for a, b in zip([0.0, *cuts], [*cuts, 1.0])):
        cuts = list(np.linspace(0, 1, k + 1)[1:-1])
    L = np.tril(np.array(draw(st.lists(st.floats(0.1, 1.0), min_size=k * k, max_size=k * k))).reshape(k, k))
    np.fill_diagonal(L, np.abs(np.diag(L)) + 0.5)
    p = np.abs(L @ L.T)
    return SBMParams(p, (0.0, *cuts, 1.0))


@settings(max_examples=30, deadline=None)
@given(sbm_params())
def test_sbm_properties(params):
    spec = kernel_from_sbm(params)
    th = np.asarray(spec.thetas)
    assert np.all(np.diff(th) <= 0) and th[-1] > 0
    assert np.max(np.abs(gram_matrix(spec.eigenfunctions) - np.eye(spec.rank))) <= 1e-8
    X, Y = np.meshgrid(GRID, GRID)
    F = eval_f(spec, X, Y)
    assert np.max(np.abs(F - params.f(X, Y))) <= 1e-10
    assert np.array_equal(F, eval_f(spec, Y, X))
    assert abs(th.sum() - np.dot(params.block_measures, np.diag(params.p))) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(params=sbm_params())
def test_json_round_trip(tmp_path_factory, params):
    spec = kernel_from_sbm(params)
    path = tmp_path_factory.mktemp("k") / "k.json"
    save_kernel(spec, path)
    back = load_kernel(path)
    assert back == spec and back.kernel_id == spec.kernel_id
    assert kernel_from_dict(json.loads(json.dumps(kernel_to_dict(spec)))).thetas == spec.thetas


def test_json_kinds():
    sbm = kernel_from_dict({"type": "sbm", "p": [[2, 0], [0, 1]], "block_boundaries": [0, 0.5, 1]})
    assert sbm.thetas == pytest.approx((1, 0.5))
    r1 = kernel_from_dict({"type": "rank_one", "theta": 1.0,
                           "eigenfunction": {"kind": "polynomial", "coefficients": [0, math.sqrt(3)]}})
    assert r1.sup_bound == pytest.approx(3.0)
    with pytest.raises(ValueError):
        kernel_from_dict({"type": "graphon"})
