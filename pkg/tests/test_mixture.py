"""Permutation enumeration and the adaptive-weight mixture."""

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringdensity.mixture import (
    PermutationSet,
    RingMixtureModel,
    canonical_circular,
    count_circular,
    create_mixture,
    enumerate_circular,
)
from ringdensity.model import DensityQuery, RingDensityModel
from ringdensity.sampler import build_plan, sample_batch
from ringdensity.tensor_ring import TrCores, to_dense

from test_model import messy_model, uniform_model
from test_sampler import chi_square_pvalue


class TestEnumerateCircular:
    @pytest.mark.parametrize("ndim,count", [(2, 1), (3, 1), (4, 3), (5, 12), (6, 60)])
    def test_counts(self, ndim, count):
        assert count_circular(ndim) == count
        assert enumerate_circular(ndim).m == count

    def test_all_canonical_and_distinct(self):
        ps = enumerate_circular(6)
        assert len(set(ps.perms)) == ps.m
        for p in ps.perms:
            assert p == canonical_circular(p)

    def test_limit_draws_uniform_subset(self):
        ps = enumerate_circular(6, limit=10, seed=3)
        assert ps.m == 10
        assert len(set(ps.perms)) == 10
        again = enumerate_circular(6, limit=10, seed=3)
        assert ps.perms == again.perms
        other = enumerate_circular(6, limit=10, seed=4)
        assert other.perms != ps.perms

    def test_large_dimension_sampling_path(self):
        ps = enumerate_circular(12, limit=5, seed=0)
        assert ps.m == 5
        for p in ps.perms:
            assert p == canonical_circular(p)

    def test_rejects_noncanonical_sets(self):
        with pytest.raises(ValueError):
            PermutationSet(((1, 0, 2, 3),))
        with pytest.raises(ValueError):
            PermutationSet(((0, 1, 2, 3), (0, 3, 2, 1)))  # same class reflected


class TestCanonicalization:
    def test_idempotent(self):
        p = canonical_circular((2, 0, 3, 1))
        assert canonical_circular(p) == p

    @pytest.mark.property
    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), ndim=st.integers(3, 7))
    def test_rotations_and_reflections_collapse(self, seed, ndim):
        rng = np.random.default_rng(seed)
        perm = tuple(int(v) for v in rng.permutation(ndim))
        canon = canonical_circular(perm)
        for s in range(ndim):
            rot = perm[s:] + perm[:s]
            assert canonical_circular(rot) == canon
            assert canonical_circular(rot[::-1]) == canon


class TestMixtureDensity:
    def test_single_component_reduces(self, rng):
        comp = messy_model(3, 5, 2, seed=0)
        mix = RingMixtureModel([comp])
        x = rng.random(3)
        assert mix.mixture_unnormalized(x) == comp.unnormalized_density(x)
        batch = rng.random((9, 3))
        assert mix.mixture_log_likelihood(batch) == comp.log_likelihood(batch)

    def test_identical_components_scale_linearly(self, rng):
        comp = messy_model(3, 5, 2, seed=1)
        mix = RingMixtureModel([comp, comp, comp])
        x = rng.random(3)
        assert (
            abs(mix.mixture_unnormalized(x) - 3.0 * comp.unnormalized_density(x))
            <= 1e-12
        )

    def test_matches_sum_of_dense_oracles(self, rng):
        mix = create_mixture(4, 4, 2, 3, seed=2)
        x = rng.random(4)
        total = 0.0
        for comp in mix.components:
            dense = to_dense(comp.coeff)
            feats = [
                comp.grids[d].eval_basis(np.array([x[comp.permutation[d]]]))[0]
                for d in range(4)
            ]
            t = np.einsum("abcd,a,b,c,d->", dense, *feats)
            total += t * t
        assert abs(mix.mixture_unnormalized(x) - total) <= 1e-12 * max(1.0, total)

    def test_uniform_components_give_zero_loglik(self, rng):
        mix = RingMixtureModel([uniform_model(2), uniform_model(2)])
        batch = rng.random((40, 2))
        assert abs(mix.mixture_log_likelihood(batch)) <= 1e-9


class TestMixtureGradient:
    def test_finite_differences(self, rng):
        mix = create_mixture(4, 6, 2, 2, seed=3)
        batch = rng.random((5, 4))
        grads = mix.grad_log_likelihood(batch)
        eps = 1e-5
        worst = 0.0
        for ci, comp in enumerate(mix.components):
            for d in range(4):
                for idx in [(0, 0, 0), (1, 3, 0), (0, 5, 1)]:
                    def ll(delta, ci=ci, d=d, idx=idx):
                        cores = [g.copy() for g in mix.components[ci].coeff.cores]
                        cores[d][idx] += delta
                        comps = list(mix.components)
                        comps[ci] = RingDensityModel(
                            TrCores(cores),
                            mix.components[ci].grids,
                            mix.components[ci].permutation,
                        )
                        return RingMixtureModel(comps).mixture_log_likelihood(batch)

                    fd = (ll(eps) - ll(-eps)) / (2.0 * eps)
                    if abs(fd) >= 1e-8:
                        worst = max(worst, abs(grads[ci][d][idx] - fd) / abs(fd))
        assert worst <= 1e-5


class TestSigmaWeights:
    def test_identical_components_uniform(self):
        comp = messy_model(3, 5, 2, seed=4)
        mix = RingMixtureModel([comp, comp, comp])
        npt.assert_allclose(mix.sigma_weights(), np.ones(3) / 3.0, atol=1e-12)

    def test_sum_to_one(self):
        mix = create_mixture(4, 5, 2, 3, seed=5)
        sigma = mix.sigma_weights()
        assert np.all(sigma > 0.0)
        assert abs(sigma.sum() - 1.0) <= 1e-12

    def test_scaling_one_component_monotone(self):
        mix = create_mixture(4, 5, 2, 3, seed=6)
        before = mix.sigma_weights()
        comp = mix.components[0]
        comp.set_cores(comp.coeff.scale(2.0 ** (1.0 / (2.0 * 4))))  # doubles Z_0
        after = mix.sigma_weights()
        assert after[0] > before[0]
        assert np.all(after[1:] < before[1:])
        ratio = after[1:] / before[1:]
        npt.assert_allclose(ratio, ratio[0], rtol=1e-10)

    def test_matches_quadrature_oracle(self):
        from test_model import quadrature_z

        comps = [messy_model(2, 5, 2, seed=s) for s in (7, 8, 9)]
        for i, c in enumerate(comps):
            c.set_cores(c.coeff.scale(1.0 + 0.3 * i))
        mix = RingMixtureModel(comps)
        zs = np.array([quadrature_z(c) for c in comps])
        npt.assert_allclose(mix.sigma_weights(), zs / zs.sum(), atol=1e-8)

    def test_zero_total_mass_rejected(self):
        from ringdensity.splines import BasisGrid

        comp = RingDensityModel(
            TrCores([np.zeros((1, 5, 1))] * 2), [BasisGrid(5)] * 2
        )
        with pytest.raises(ZeroDivisionError):
            RingMixtureModel([comp]).sigma_weights()


class TestMixtureSampling:
    def test_single_component_distribution_matches_sampler(self):
        comp = messy_model(2, 6, 2, seed=10)
        mix = RingMixtureModel([comp])
        n = 30_000
        mixed = mix.mixture_sample(n, seed=11)
        plan = build_plan(comp)
        direct = sample_batch(comp, plan, n, seed=12)
        for dim in range(2):
            a = np.sort(mixed[:, dim])
            b = np.sort(direct[:, dim])
            grid = np.linspace(0.0, 1.0, 801)
            ks = np.abs(
                np.searchsorted(a, grid) / n - np.searchsorted(b, grid) / n
            ).max()
            assert ks <= 0.02

    def test_degenerate_weights_use_single_component(self):
        c0 = messy_model(3, 5, 2, seed=13)
        c1 = messy_model(3, 5, 2, seed=14)
        c1.set_cores(c1.coeff.scale(1e-8))  # Z_1 ~ 1e-48
        mix = RingMixtureModel([c0, c1])
        only = RingMixtureModel([c0])
        assert mix.sigma_weights()[0] > 1.0 - 1e-12
        a = mix.mixture_sample(500, seed=15)
        # component draw consumes the same stream; outputs must coincide
        b = only.mixture_sample(500, seed=15)
        npt.assert_array_equal(a, b)

    def test_deterministic(self):
        mix = create_mixture(4, 5, 2, 2, seed=16)
        npt.assert_array_equal(
            mix.mixture_sample(64, seed=17), mix.mixture_sample(64, seed=17)
        )

    def test_d4_two_dim_marginal_chi_square(self):
        mix = create_mixture(4, 5, 2, 3, seed=18)
        for comp in mix.components:  # make components genuinely different
            rng = np.random.default_rng(comp.version + id(comp) % 97)
            comp.set_cores(
                TrCores([rng.uniform(0.4, 1.6, g.shape) for g in comp.coeff.cores])
            )
        n = 30_000
        samples = mix.mixture_sample(n, seed=19)
        edges = np.linspace(0.0, 1.0, 16)
        total = mix.sum_z()
        cumulative = np.zeros((16, 16))
        for i, a in enumerate(edges):
            for j, b in enumerate(edges):
                q = DensityQuery(
                    upper_limits={0: a, 1: b}, marginalized=frozenset([2, 3])
                )
                cumulative[i, j] = mix.marginal_density(q) / total
        probs = (
            cumulative[1:, 1:]
            - cumulative[:-1, 1:]
            - cumulative[1:, :-1]
            + cumulative[:-1, :-1]
        )
        counts = np.histogram2d(samples[:, 0], samples[:, 1], bins=[edges, edges])[0]
        assert chi_square_pvalue(counts, probs, n) > 0.01


class TestMixtureInvariants:
    def test_normalization_identity(self):
        mix = create_mixture(4, 5, 2, 3, seed=20)
        q = DensityQuery(marginalized=frozenset(range(4)))
        assert abs(mix.marginal_density(q) / mix.sum_z() - 1.0) <= 1e-12

    def test_joint_rescale_preserves_sigma(self):
        mix = create_mixture(4, 5, 2, 3, seed=21)
        for i, comp in enumerate(mix.components):
            comp.set_cores(comp.coeff.scale(1.0 + 0.2 * i))
        sigma_before = mix.sigma_weights()
        mix.rescale_joint()
        npt.assert_allclose(mix.sigma_weights(), sigma_before, rtol=1e-10)
        assert abs(mix.sum_z() - mix.m) <= 1e-9

    def test_m1_operations_reduce_exactly(self, rng):
        comp = messy_model(2, 6, 2, seed=22)
        mix = RingMixtureModel([comp])
        batch = rng.random((7, 2))
        assert mix.mixture_log_likelihood(batch) == comp.log_likelihood(batch)
        assert mix.sum_z() == comp.partition_function()
        grads_m = mix.grad_log_likelihood(batch)[0]
        grads_c = comp.grad_log_likelihood(batch)
        for a, b in zip(grads_m, grads_c):
            npt.assert_array_equal(a, b)
        q = DensityQuery(marginalized=frozenset([0, 1]))
        assert mix.marginal_density(q) == comp.marginal_density(q)
