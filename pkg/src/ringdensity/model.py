"""Squared tensor-ring B-spline density component.

The unnormalized density is q(x) = T(x)^2 with
T(x) = Trace(Q_1(x_{p(1)}) ... Q_D(x_{p(D)})), where Q_d sums the three
active basis values against the lateral slices of core d and p is the
model's axis-to-data-dimension permutation.  Squaring guarantees
non-negativity; the partition function, marginals, and cumulative
distributions of the squared model are exact contractions against mass and
pair-integral matrices (no quadrature error).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .splines import BasisGrid
from .tensor_ring import TrCores, inner_product, pair_transfer, point_transfer

#: additive floor inside log(T^2 + floor); survives exact zeros early in
#: training, reported likelihoods exclude samples that hit it.
LOG_FLOOR = 1e-30


@dataclass(frozen=True)
class DensityQuery:
    """A marginal/conditional/cumulative query over data dimensions.

    fixed maps dimensions to point values, marginalized dimensions are
    integrated out entirely, upper_limits maps dimensions to cumulative
    upper bounds.  The three sets must be disjoint and together cover all
    dimensions of the model being queried.
    """

    fixed: dict = field(default_factory=dict)
    marginalized: frozenset = field(default_factory=frozenset)
    upper_limits: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "fixed", dict(self.fixed))
        object.__setattr__(
            self, "marginalized", frozenset(int(d) for d in self.marginalized)
        )
        object.__setattr__(self, "upper_limits", dict(self.upper_limits))
        f = set(self.fixed)
        m = set(self.marginalized)
        u = set(self.upper_limits)
        if (f & m) or (f & u) or (m & u):
            raise ValueError("query dimension sets must be pairwise disjoint")

    def covered(self) -> set:
        return set(self.fixed) | set(self.marginalized) | set(self.upper_limits)


class RingDensityModel:
    """One density component: ring cores, basis grids, and a permutation.

    permutation[d] is the data dimension whose coordinate feeds model axis
    d.  Mutation goes through set_cores(), which bumps the version counter
    used to invalidate caches and detect stale sample plans.
    """

    def __init__(self, coeff: TrCores, grids, permutation=None):
        grids = tuple(grids)
        if len(grids) != coeff.ndim:
            raise ValueError("need one basis grid per core")
        for d, (g, grid) in enumerate(zip(coeff.cores, grids)):
            if g.shape[1] != grid.k_basis:
                raise ValueError(
                    f"core {d} mode size {g.shape[1]} != grid basis count "
                    f"{grid.k_basis}"
                )
        if permutation is None:
            permutation = tuple(range(coeff.ndim))
        permutation = tuple(int(p) for p in permutation)
        if sorted(permutation) != list(range(coeff.ndim)):
            raise ValueError(f"permutation {permutation} is not a bijection")
        self.coeff = coeff
        self.grids = grids
        self.permutation = permutation
        self.version = 0
        self._cache: dict = {}

    # -- structure ---------------------------------------------------------

    @property
    def ndim(self) -> int:
        return self.coeff.ndim

    @property
    def mass(self) -> list[np.ndarray]:
        """Cached per-axis mass matrices (owned by the grids)."""
        return [g._mass_cached for g in self.grids]

    def set_cores(self, coeff: TrCores) -> None:
        if coeff.mode_sizes != self.coeff.mode_sizes:
            raise ValueError("replacement cores change mode sizes")
        self.coeff = coeff
        self.version += 1

    def _cached(self, key, builder):
        hit = self._cache.get(key)
        if hit is not None and hit[0] == self.version:
            return hit[1]
        value = builder()
        self._cache[key] = (self.version, value)
        return value

    def _slice_major_cores(self) -> list[np.ndarray]:
        """Cores reordered to (K, R_prev, R_next) for fast slice gathering."""
        return self._cached(
            "slice_major",
            lambda: [np.ascontiguousarray(np.moveaxis(g, 1, 0)) for g in self.coeff.cores],
        )

    # -- evaluation --------------------------------------------------------

    def phi_factor(self, d: int, x: float) -> np.ndarray:
        """Matrix-valued factor Q_d(x): active basis values against slices."""
        grid = self.grids[d]
        j, vals = grid.eval_active(x)
        g = self.coeff.cores[d]
        return np.einsum("r,rab->ab", vals, np.moveaxis(g, 1, 0)[j : j + 3])

    def _factors(self, x: np.ndarray) -> list[np.ndarray]:
        """Per-axis batched factors Q_d for data-ordered samples x (N, D)."""
        out = []
        for d, grid in enumerate(self.grids):
            xs = x[:, self.permutation[d]]
            j, vals = grid.eval_active_many(xs)
            gk = self._slice_major_cores()[d]
            slices = gk[j[:, None] + np.arange(3)]  # (N, 3, Rp, Rn)
            out.append(np.einsum("nr,nrab->nab", vals, slices, optimize=True))
        return out

    def trans_values(self, x: np.ndarray) -> np.ndarray:
        """T(x_i) for a batch of data-ordered samples (N, D) -> (N,)."""
        x = self._check_batch(x)
        qs = self._factors(x)
        acc = qs[0]
        for q in qs[1:]:
            acc = acc @ q
        return np.trace(acc, axis1=1, axis2=2)

    def unnormalized_density(self, x) -> float:
        """q(x) = T(x)^2 for a single data-ordered point."""
        t = self.trans_values(np.asarray(x, dtype=float)[None, :])[0]
        return float(t * t)

    def density_batch(self, x: np.ndarray) -> np.ndarray:
        t = self.trans_values(x)
        return t * t

    def _check_batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.ndim:
            raise ValueError(f"batch must be (N, {self.ndim}), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite input coordinates")
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise DomainError("coordinates outside the unit cube")
        return x

    # -- partition function and pair transfers ------------------------------

    def partition_function(self) -> float:
        """Z = integral of T(x)^2 over the unit cube, by mass contraction.

        Each core is contracted with its mass matrix along the mode index,
        then the ring inner product with the original cores gives Z exactly.
        """
        return self._cached("z", self._partition_function)

    def _partition_function(self) -> float:
        b_cores = [
            np.tensordot(mass, g, axes=([0], [1])).transpose(1, 0, 2)
            for mass, g in zip(self.mass, self.coeff.cores)
        ]
        return inner_product(self.coeff, TrCores(b_cores))

    def pair_transfers(self) -> list[np.ndarray]:
        """Mass-weighted pair-transfer matrices, one (R^2, R^2) per axis."""
        return self._cached(
            "pair_transfers",
            lambda: [
                pair_transfer(g, mass)
                for g, mass in zip(self.coeff.cores, self.mass)
            ],
        )

    def _transfer_hole_products(self) -> list[np.ndarray]:
        """H_d = E_{d+1}...E_{D-1} E_0...E_{d-1} for every axis d."""

        def build():
            es = self.pair_transfers()
            d = self.ndim
            prefix = [None] * (d + 1)
            suffix = [None] * (d + 1)
            r0sq = es[0].shape[0]
            prefix[0] = np.eye(r0sq)
            for i in range(d):
                prefix[i + 1] = prefix[i] @ es[i]
            suffix[d] = np.eye(es[-1].shape[1])
            for i in range(d - 1, -1, -1):
                suffix[i] = es[i] @ suffix[i + 1]
            return [suffix[i + 1] @ prefix[i] for i in range(d)]

        return self._cached("hole_products", build)

    def partition_gradients(self) -> list[np.ndarray]:
        """dZ/dG_d for every core, via the mass-matrix transfer chain."""
        holes = self._transfer_hole_products()
        grads = []
        for g, mass, hole in zip(self.coeff.cores, self.mass, holes):
            rp, _, rn = g.shape
            h4 = hole.reshape(rn, rn, rp, rp)
            grads.append(
                2.0 * np.einsum("kl,cld,bdac->akb", mass, g, h4, optimize=True)
            )
        return grads

    # -- likelihood ---------------------------------------------------------

    def log_likelihood(self, batch: np.ndarray) -> float:
        """Sum over the batch of log(T^2 + floor) - log Z."""
        batch = self._check_batch(batch)
        if batch.shape[0] == 0:
            raise ValueError("empty batch")
        t = self.trans_values(batch)
        z = self.partition_function()
        return float(np.sum(np.log(t * t + LOG_FLOOR)) - batch.shape[0] * np.log(z))

    def positive_gradients(self, batch: np.ndarray, weights: np.ndarray):
        """Gradients of sum_i weights_i * T(x_i) with respect to each core.

        The derivative of T against factor Q_d is the transposed product of
        the remaining factors; the three active basis values scatter it into
        the core's lateral slices.
        """
        batch = self._check_batch(batch)
        qs = self._factors(batch)
        n = batch.shape[0]
        d = self.ndim
        r0 = qs[0].shape[1]
        prefix = [None] * d
        suffix = [None] * d
        prefix[0] = np.broadcast_to(np.eye(r0), (n, r0, r0))
        for i in range(1, d):
            prefix[i] = prefix[i - 1] @ qs[i - 1]
        suffix[d - 1] = np.broadcast_to(np.eye(qs[-1].shape[2]), (n, r0, r0))
        for i in range(d - 2, -1, -1):
            suffix[i] = qs[i + 1] @ suffix[i + 1]
        grads = []
        offsets = np.arange(3)
        for i, grid in enumerate(self.grids):
            xs = batch[:, self.permutation[i]]
            j, vals = grid.eval_active_many(xs)
            ct = np.matmul(suffix[i], prefix[i]).transpose(0, 2, 1)  # (N, Rp, Rn)
            w = weights[:, None] * vals  # (N, 3)
            contrib = w[:, :, None, None] * ct[:, None, :, :]
            k_first = np.zeros((grid.k_basis,) + ct.shape[1:])
            np.add.at(k_first, (j[:, None] + offsets).ravel(), contrib.reshape(-1, *ct.shape[1:]))
            grads.append(np.moveaxis(k_first, 0, 1))
        return grads

    def grad_log_likelihood(self, batch: np.ndarray) -> list[np.ndarray]:
        """Exact gradient of log_likelihood with respect to each core."""
        batch = self._check_batch(batch)
        t = self.trans_values(batch)
        w = 2.0 * t / (t * t + LOG_FLOOR)
        pos = self.positive_gradients(batch, w)
        z = self.partition_function()
        zg = self.partition_gradients()
        n = batch.shape[0]
        return [p - (n / z) * g for p, g in zip(pos, zg)]

    # -- marginal / cumulative queries ---------------------------------------

    def _query_factor(self, d: int, query: DensityQuery) -> np.ndarray:
        data_dim = self.permutation[d]
        g = self.coeff.cores[d]
        grid = self.grids[d]
        if data_dim in query.marginalized:
            return self.pair_transfers()[d]
        if data_dim in query.upper_limits:
            limit = float(query.upper_limits[data_dim])
            return pair_transfer(g, grid.pair_integral_to(limit))
        value = float(query.fixed[data_dim])
        return point_transfer(self.phi_factor(d, value))

    def marginal_density(self, query: DensityQuery) -> float:
        """Unnormalized marginal/cumulative value of the squared model.

        Marginalized dimensions contract with mass matrices, cumulative
        dimensions with pair integrals up to their limits, fixed dimensions
        evaluate pointwise.  Dividing by partition_function() normalizes;
        conditionals are ratios of two such calls.
        """
        if query.covered() != set(range(self.ndim)):
            raise ValueError(
                "query must assign every dimension to fixed, marginalized, "
                "or upper-limit sets"
            )
        acc = None
        for d in range(self.ndim):
            f = self._query_factor(d, query)
            acc = f if acc is None else acc @ f
        return float(np.trace(acc))

    def conditional_density(self, values: dict, given: dict) -> float:
        """Normalized conditional density p(values | given).

        Dimensions absent from both mappings are marginalized out.
        """
        rest = frozenset(range(self.ndim)) - set(values) - set(given)
        num = self.marginal_density(
            DensityQuery(fixed={**values, **given}, marginalized=rest)
        )
        den = self.marginal_density(
            DensityQuery(fixed=given, marginalized=rest | set(values))
        )
        if den <= 0.0:
            raise ZeroDivisionError("conditioning event has zero density")
        return num / den

    def cumulative_marginal(self, data_dim: int, xs: np.ndarray) -> np.ndarray:
        """Normalized marginal CDF of one data dimension on a vector of points."""
        d = self.permutation.index(int(data_dim))
        es = self.pair_transfers()
        left = None
        for i in range(d):
            left = es[i] if left is None else left @ es[i]
        right = None
        for i in range(d + 1, self.ndim):
            right = es[i] if right is None else right @ es[i]
        g = self.coeff.cores[d]
        rp, _, rn = g.shape
        if left is None:
            left = np.eye(rp * rp)
        if right is None:
            right = np.eye(rn * rn)
        h4 = (right @ left).reshape(rn, rn, rp, rp)
        w = np.einsum("rks,plq,sqrp->kl", g, g, h4, optimize=True)
        return _cdf_from_weight(self.grids[d], w, np.asarray(xs, dtype=float))

    # -- gauge ----------------------------------------------------------------

    def rescale_to_z(self, target: float = 1.0) -> float:
        """Jointly rescale cores so the partition function hits target.

        Multilinearity makes this leave the normalized density unchanged.
        Returns the applied per-core factor.
        """
        z = self.partition_function()
        if not np.isfinite(z) or z <= 0.0:
            raise FloatingPointError(f"cannot rescale from Z={z}")
        factor = (target / z) ** (1.0 / (2.0 * self.ndim))
        self.set_cores(self.coeff.scale(factor))
        return factor


def _cdf_from_weight(grid: BasisGrid, w: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """CDF values <W, pair_integral_to(x)> / <W, mass> for a weight matrix."""
    xs = np.atleast_1d(xs)
    full = grid.pair_full_band()
    nint = grid.n_intervals
    inc = np.empty(nint)
    for j in range(nint):
        inc[j] = np.sum(w[j : j + 3, j : j + 3] * full)
    csum = np.concatenate([[0.0], np.cumsum(inc)])
    den = csum[-1]
    if den <= 0.0:
        raise ZeroDivisionError("zero-mass marginal")
    j, s = grid._locate(grid._check_domain(xs))
    partial = grid.pair_partial_many(j, s)  # (n, 3, 3)
    rows = j[:, None, None] + np.arange(3)[None, :, None]
    cols = j[:, None, None] + np.arange(3)[None, None, :]
    local = np.sum(w[rows, cols] * partial, axis=(1, 2))
    return (csum[j] + local) / den


def random_model(
    ndim: int,
    k_basis: int,
    rank,
    seed: int,
    permutation=None,
    grids=None,
) -> RingDensityModel:
    """Fresh component with near-constant positive cores, gauge-fixed to Z=1.

    Entries i.i.d. uniform in [0.9, 1.1] keep T(x) strictly positive at
    initialization, avoiding sign cancellation.  rank may be a scalar or a
    length-(D+1) vector with matching ends.
    """
    rng = np.random.default_rng(seed)
    if np.isscalar(rank):
        ranks = [int(rank)] * (ndim + 1)
    else:
        ranks = [int(r) for r in rank]
        if len(ranks) != ndim + 1 or ranks[0] != ranks[-1]:
            raise ValueError("rank vector must have length D+1 with matching ends")
    if grids is None:
        grids = [BasisGrid(k_basis) for _ in range(ndim)]
    cores = [
        rng.uniform(0.9, 1.1, size=(ranks[d], grids[d].k_basis, ranks[d + 1]))
        for d in range(ndim)
    ]
    model = RingDensityModel(TrCores(cores), grids, permutation)
    model.rescale_to_z(1.0)
    return model
