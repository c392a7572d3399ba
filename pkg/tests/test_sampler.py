"""Autoregressive inverse-CDF sampler: exactness and plan machinery."""

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2

from ringdensity.errors import DegenerateConditionalError
from ringdensity.model import DensityQuery, RingDensityModel, random_model
from ringdensity.sampler import SamplePlan, build_plan, sample_batch, sample_one
from ringdensity.splines import BasisGrid
from ringdensity.tensor_ring import TrCores

from test_model import gauss_nodes, messy_model, uniform_model


def philox_uniforms(seed, n, d):
    return np.random.Generator(np.random.Philox(key=seed)).random((n, d))


def grid_cell_probabilities(model, edges):
    """Exact cell masses of a D=2 model from cumulative queries."""
    z = model.partition_function()
    m = len(edges)
    cumulative = np.zeros((m, m))
    for i, a in enumerate(edges):
        for j, b in enumerate(edges):
            q = DensityQuery(upper_limits={0: a, 1: b})
            cumulative[i, j] = model.marginal_density(q) / z
    return (
        cumulative[1:, 1:]
        - cumulative[:-1, 1:]
        - cumulative[1:, :-1]
        + cumulative[:-1, :-1]
    )


def chi_square_pvalue(counts, probs, n):
    """Pearson test with small-expectation cells pooled."""
    expected = probs * n
    keep = expected >= 5.0
    stat = float(np.sum((counts[keep] - expected[keep]) ** 2 / expected[keep]))
    pooled_exp = expected[~keep].sum()
    if pooled_exp > 0:
        pooled_obs = counts[~keep].sum()
        stat += (pooled_obs - pooled_exp) ** 2 / pooled_exp
        dof = int(keep.sum())  # kept cells + pooled cell - 1
    else:
        dof = int(keep.sum()) - 1
    return float(chi2.sf(stat, dof))


class TestBuildPlan:
    def test_right_message_matches_integral_oracle(self):
        # D=2: the first right message is the mass-weighted pair transfer of
        # axis 1; check it against direct quadrature of the slice expansion
        model = messy_model(2, 6, 2, seed=0)
        plan = build_plan(model)
        g = model.coeff.cores[1]
        rp, k, rn = g.shape
        nodes, weights = gauss_nodes(model.grids[1])
        feats = model.grids[1].eval_basis(nodes)  # (n, K)
        slices = np.einsum("nk,rks->nrs", feats, g)
        ref = np.einsum("n,nrs,npq->rpsq", weights, slices, slices).reshape(
            rp * rp, rn * rn
        )
        npt.assert_allclose(plan.right_messages[0], ref, rtol=1e-10, atol=1e-12)

    def test_last_message_is_identity(self):
        model = messy_model(3, 5, 2, seed=1)
        plan = build_plan(model)
        r0sq = model.coeff.cores[0].shape[0] ** 2
        npt.assert_array_equal(plan.right_messages[-1], np.eye(r0sq))

    def test_position_consistency(self):
        model = messy_model(4, 5, 2, seed=2)
        plan = build_plan(model)
        transfers = model.pair_transfers()
        for d in range(model.ndim - 1):
            npt.assert_allclose(
                plan.right_messages[d],
                transfers[d + 1] @ plan.right_messages[d + 1],
                rtol=1e-12,
                atol=1e-14,
            )

    def test_stale_plan_detected(self):
        model = messy_model(2, 5, 2, seed=3)
        plan = build_plan(model)
        model.set_cores(model.coeff.scale(1.1))
        with pytest.raises(ValueError, match="stale"):
            sample_batch(model, plan, 4, seed=0)
        fresh = build_plan(model)
        assert fresh.model_version == model.version
        sample_batch(model, fresh, 4, seed=0)


class TestSampleOne:
    def test_uniform_model_returns_u_exactly(self):
        model = uniform_model(3, k=9)
        plan = build_plan(model)
        for u in np.random.default_rng(0).random((20, 3)):
            x = sample_one(model, plan, u)
            assert np.abs(x - u).max() <= 1e-12

    def test_deterministic_in_u(self):
        model = messy_model(2, 6, 2, seed=4)
        plan = build_plan(model)
        u = np.array([0.3, 0.8])
        npt.assert_array_equal(sample_one(model, plan, u), sample_one(model, plan, u))

    def test_degenerate_conditional_reports_dimension(self):
        k = 5
        grids = [BasisGrid(k)] * 2
        model = RingDensityModel(TrCores([np.zeros((1, k, 1))] * 2), grids)
        plan = build_plan(model)
        with pytest.raises(DegenerateConditionalError) as exc:
            sample_one(model, plan, np.array([0.5, 0.5]))
        assert exc.value.dim == 0


class TestSampleBatch:
    def test_seed_reproducibility(self):
        model = messy_model(3, 6, 2, seed=5)
        plan = build_plan(model)
        a = sample_batch(model, plan, 257, seed=42)
        b = sample_batch(model, plan, 257, seed=42)
        npt.assert_array_equal(a, b)

    def test_workers_do_not_change_results(self):
        model = messy_model(2, 6, 2, seed=6)
        plan = build_plan(model)
        a = sample_batch(model, plan, 300, seed=7, workers=1)
        b = sample_batch(model, plan, 300, seed=7, workers=4)
        npt.assert_array_equal(a, b)

    def test_rejects_nonpositive_counts(self):
        model = uniform_model(2)
        plan = build_plan(model)
        with pytest.raises(ValueError):
            sample_batch(model, plan, 0, seed=0)

    def test_chi_square_against_model_density(self):
        model = messy_model(2, 8, 3, seed=8)
        plan = build_plan(model)
        n = 40_000
        samples = sample_batch(model, plan, n, seed=9)
        edges = np.linspace(0.0, 1.0, 41)
        probs = grid_cell_probabilities(model, edges)
        counts = np.histogram2d(samples[:, 0], samples[:, 1], bins=[edges, edges])[0]
        assert chi_square_pvalue(counts, probs, n) > 0.01

    def test_ks_against_marginal_cdf(self):
        model = messy_model(3, 6, 2, seed=10)
        plan = build_plan(model)
        n = 40_000
        samples = sample_batch(model, plan, n, seed=11)
        grid_x = np.linspace(0.0, 1.0, 2001)
        for dim in range(3):
            f = model.cumulative_marginal(dim, grid_x)
            emp = np.searchsorted(np.sort(samples[:, dim]), grid_x, side="right") / n
            assert np.abs(emp - f).max() <= 0.012


@pytest.mark.property
class TestInvariants:
    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_conditional_cdf_endpoints_and_monotone(self, seed):
        rng = np.random.default_rng(seed)
        ndim = int(rng.integers(1, 4))
        model = messy_model(ndim, 5, 2, seed=seed)
        dim = int(rng.integers(0, ndim))
        xs = np.linspace(0.0, 1.0, 301)
        f = model.cumulative_marginal(dim, xs)
        assert abs(f[0]) <= 1e-10
        assert abs(f[-1] - 1.0) <= 1e-10
        assert np.all(np.diff(f) >= -1e-12)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_uniform_exactness(self, seed):
        model = uniform_model(2, k=7)
        plan = build_plan(model)
        u = np.random.default_rng(seed).random((8, 2))
        for row in u:
            assert np.abs(sample_one(model, plan, row) - row).max() <= 1e-12

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_product_model_independent_dimensions(self, seed):
        # rank-1 ring = independent coordinates; joint sampling must match
        # per-dimension inverse-CDF sampling distributionally
        rng = np.random.default_rng(seed)
        k = 6
        grids = [BasisGrid(k)] * 2
        cores = [rng.uniform(0.3, 1.7, (1, k, 1)) for _ in range(2)]
        model = RingDensityModel(TrCores(cores), grids)
        model.rescale_to_z(1.0)
        plan = build_plan(model)
        n = 20_000
        joint = sample_batch(model, plan, n, seed=seed)
        grid_x = np.linspace(0.0, 1.0, 1001)
        for dim in range(2):
            f = model.cumulative_marginal(dim, grid_x)
            emp = np.searchsorted(np.sort(joint[:, dim]), grid_x, side="right") / n
            assert np.abs(emp - f).max() <= 0.015


class TestPermutationRoundTrip:
    def test_permuted_model_samples_match_base_density(self):
        base = messy_model(2, 7, 2, seed=12)
        perm = (1, 0)
        permuted = RingDensityModel(base.coeff, base.grids, perm)
        plan = build_plan(permuted)
        n = 40_000
        axis_samples = sample_batch(permuted, plan, n, seed=13)
        # un-permute: data coordinate perm[d] came from axis d
        data = np.empty_like(axis_samples)
        data[:, list(perm)] = axis_samples
        edges = np.linspace(0.0, 1.0, 31)
        probs = grid_cell_probabilities(permuted, edges)
        counts = np.histogram2d(data[:, 0], data[:, 1], bins=[edges, edges])[0]
        assert chi_square_pvalue(counts, probs, n) > 0.01


@pytest.mark.slow
class TestThroughputScaling:
    def test_doubling_rank_at_most_eightfold(self):
        # D=2 fast paths: shared first-axis band, rank-1 last axis
        import time

        times = {}
        for rank in (6, 12):
            model = messy_model(2, 32, rank, seed=14)
            plan = build_plan(model)
            sample_batch(model, plan, 2000, seed=0)  # warm-up
            tic = time.perf_counter()
            sample_batch(model, plan, 20_000, seed=1)
            times[rank] = time.perf_counter() - tic
        assert times[12] <= 8.0 * times[6] + 0.5
