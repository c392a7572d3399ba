"""Toy generators, ingestion, standardization, histogram KL."""

import numpy as np
import numpy.testing as npt
import pytest

from ringdensity.datasets import (
    TOY_FAMILIES,
    Dataset,
    ToySpec,
    generate_toy,
    histogram_kl,
    ingest_csv,
    toy_samples,
)


class TestGenerateToy:
    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError, match="unknown toy family"):
            ToySpec("mystery", 100)

    def test_deterministic_under_seed(self):
        a = toy_samples("pinwheel", 5000, seed=7)
        b = toy_samples("pinwheel", 5000, seed=7)
        npt.assert_array_equal(a, b)
        c = toy_samples("pinwheel", 5000, seed=8)
        assert not np.array_equal(a, c)

    def test_checkerboard_marginals_uniform(self):
        x = toy_samples("checkerboard", 100_000, seed=1)
        for dim in range(2):
            v = np.sort(x[:, dim])
            lo, hi = v[0], v[-1]
            grid = np.linspace(lo, hi, 512)
            emp = np.searchsorted(v, grid) / len(v)
            ref = (grid - lo) / (hi - lo)
            assert np.abs(emp - ref).max() <= 0.02

    def test_circles3d_stays_near_manifolds(self):
        noise = 0.05
        x = toy_samples("circles3d", 50_000, noise=noise, seed=2)
        r = np.hypot(x[:, 0], x[:, 1])
        dev = np.minimum(np.abs(r - 1.0), np.abs(r - 0.5))
        assert dev.max() <= 4.0 * noise
        assert np.abs(x[:, 2]).max() <= 4.0 * noise

    @pytest.mark.parametrize("family", TOY_FAMILIES)
    def test_all_families_standardize(self, family):
        ds = generate_toy(ToySpec(family, 2000, seed=3))
        assert ds.data.min() >= 0.0
        assert ds.data.max() <= 1.0
        assert ds.train.min() >= 0.025 - 1e-12
        assert ds.train.max() <= 0.975 + 1e-12
        assert ds.train.shape[0] == 1600

    def test_split_sizes(self):
        ds = generate_toy(ToySpec("rings", 1000, seed=4), (0.7, 0.2, 0.1))
        assert ds.train.shape[0] == 700
        assert ds.validation.shape[0] == 200
        assert ds.test.shape[0] == 100


class TestIngestCsv:
    def test_round_trip_and_jacobian(self, tmp_path, rng):
        raw = rng.standard_normal((500, 3)) * [1.0, 5.0, 0.2] + [0.0, -3.0, 9.0]
        path = tmp_path / "data.csv"
        np.savetxt(path, raw, delimiter=",")
        ds = ingest_csv(path, seed=1)
        # the affine map round-trips exactly; train rows are never clipped
        npt.assert_allclose(ds.to_unit(ds.to_original(ds.data)), ds.data, atol=1e-12)
        order = np.random.default_rng(1).permutation(500)
        npt.assert_allclose(
            ds.to_original(ds.train), raw[order][: ds.train.shape[0]], atol=1e-10
        )
        assert np.isfinite(ds.jacobian)

    def test_zero_variance_column_rejected(self, tmp_path, rng):
        raw = rng.standard_normal((100, 2))
        raw[:, 1] = 4.2
        path = tmp_path / "flat.csv"
        np.savetxt(path, raw, delimiter=",")
        with pytest.raises(ValueError, match="zero variance"):
            ingest_csv(path)

    def test_non_numeric_cell_reported(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1.0,2.0\n3.0,oops\n")
        with pytest.raises(ValueError, match="row 1, column 1"):
            ingest_csv(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(ValueError):
            ingest_csv(path)

    def test_header_flag(self, tmp_path, rng):
        raw = rng.standard_normal((50, 2))
        path = tmp_path / "headered.csv"
        with open(path, "w") as fh:
            fh.write("a,b\n")
            np.savetxt(fh, raw, delimiter=",")
        ds = ingest_csv(path, header=True)
        assert ds.data.shape == (50, 2)

    def test_power_shaped_file(self, tmp_path, rng):
        # six columns, many rows: the UCI POWER layout
        raw = rng.standard_normal((4000, 6))
        path = tmp_path / "power_like.csv"
        np.savetxt(path, raw, delimiter=",")
        ds = ingest_csv(path, seed=0)
        assert ds.ndim == 6
        assert ds.data.shape[0] == 4000


class TestHistogramKl:
    def test_identical_sets_at_floor(self):
        x = toy_samples("rings", 20_000, seed=5)
        assert histogram_kl(x, x) <= 0.01

    def test_disjoint_supports_large(self):
        x = toy_samples("rings", 10_000, seed=6)
        assert histogram_kl(x, x + 50.0) > 1.0

    def test_same_distribution_three_d(self):
        # Monte-Carlo baseline: with 50^3 cells and add-one smoothing the
        # same-distribution value at n=50k sits near 0.066 (the smoothing
        # floor), measured over several seeds
        rng = np.random.default_rng(7)
        a = rng.standard_normal((50_000, 3))
        b = rng.standard_normal((50_000, 3))
        assert histogram_kl(a, b, 50) <= 0.08

    def test_high_dimension_rejected(self):
        x = np.random.default_rng(8).random((100, 4))
        with pytest.raises(ValueError, match="D=4"):
            histogram_kl(x, x)

    def test_nonnegative(self):
        a = toy_samples("two-spirals", 5000, seed=9)
        b = toy_samples("two-spirals", 5000, seed=10)
        assert histogram_kl(a, b) >= 0.0


@pytest.mark.property
class TestInvariants:
    def test_standardization_jacobian_identity(self, rng):
        # NLL in original units = NLL in unit cube + sum(log scale)
        ds = generate_toy(ToySpec("swissroll2d", 3000, seed=11))
        unit_logp = rng.random(50)  # arbitrary unit-cube log densities
        orig_logp = unit_logp - ds.jacobian
        npt.assert_allclose(-orig_logp, -unit_logp + ds.jacobian, atol=1e-12)
        # volume element: a unit cell maps to prod(scale)
        corner = ds.to_original(np.zeros((1, 2)))[0]
        far = ds.to_original(np.ones((1, 2)))[0]
        vol = np.prod(far - corner)
        npt.assert_allclose(np.log(vol), ds.jacobian, atol=1e-12)

    def test_split_disjoint_and_covering(self):
        ds = generate_toy(ToySpec("tree", 999, seed=12))
        n = ds.train.shape[0] + ds.validation.shape[0] + ds.test.shape[0]
        assert n == 999
        stacked = np.vstack([ds.train, ds.validation, ds.test])
        npt.assert_array_equal(stacked, ds.data)

    @pytest.mark.parametrize("family", TOY_FAMILIES)
    def test_moment_stability_across_seeds(self, family):
        a = toy_samples(family, 100_000, seed=13)
        b = toy_samples(family, 100_000, seed=14)
        sd = a.std(axis=0)
        assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) <= 0.02 * sd)
        assert np.all(np.abs(a.std(axis=0) - b.std(axis=0)) <= 0.02 * sd)
