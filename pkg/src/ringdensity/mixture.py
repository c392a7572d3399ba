"""Adaptive-weight mixture over circular permutations of the dimensions.

A ring factorization is invariant under rotating its cores and reflecting
their order, so distinct variable arrangements correspond to circular
permutations up to rotation/reflection: (D-1)!/2 classes for D >= 3.  The
mixture sums one unnormalized component per selected permutation; the
component weights are derived quantities sigma_m = Z_m / sum(Z), not free
parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations as _permutations

import numpy as np

from .model import LOG_FLOOR, DensityQuery, RingDensityModel, random_model
from .sampler import build_plan, sample_from_uniforms
from .splines import BasisGrid

_ENUMERATION_CAP = 100_000


def count_circular(ndim: int) -> int:
    """Number of circular permutation classes: max(1, (D-1)!/2)."""
    if ndim < 2:
        raise ValueError(f"need ndim >= 2, got {ndim}")
    return max(1, math.factorial(ndim - 1) // 2)


def canonical_circular(perm) -> tuple[int, ...]:
    """Lexicographically smallest among the 2D rotations/reflections."""
    perm = tuple(int(p) for p in perm)
    i = perm.index(0)
    rot = perm[i:] + perm[:i]
    if len(perm) >= 3:
        rev = (0,) + rot[1:][::-1]
        if rev < rot:
            rot = rev
    return rot


@dataclass(frozen=True)
class PermutationSet:
    """Distinct canonical circular permutations selected for a mixture."""

    perms: tuple

    def __post_init__(self):
        canon = [canonical_circular(p) for p in self.perms]
        if canon != [tuple(p) for p in self.perms]:
            raise ValueError("permutations must be in canonical circular form")
        if len(set(canon)) != len(canon):
            raise ValueError("permutations must be pairwise distinct")
        object.__setattr__(self, "perms", tuple(canon))

    @property
    def m(self) -> int:
        return len(self.perms)


def enumerate_circular(
    ndim: int, limit: int | None = None, seed: int | None = None
) -> PermutationSet:
    """All canonical circular permutations, or a seeded uniform subset.

    When the class count exceeds the limit, a uniform subset without
    replacement of that size is drawn (full enumeration below a cap,
    rejection-dedup above it, both uniform over classes).
    """
    total = count_circular(ndim)
    if limit is not None and limit < 1:
        raise ValueError(f"limit must be >= 1, got {limit}")
    want_all = limit is None or total <= limit
    if ndim <= 3:
        # a single class exists: D=2 has one arrangement, D=3 has (3-1)!/2 = 1
        return PermutationSet((tuple(range(ndim)),))
    if want_all or total <= _ENUMERATION_CAP:
        perms = [
            (0,) + p
            for p in _permutations(range(1, ndim))
            if p[0] < p[-1]
        ]
        if want_all:
            return PermutationSet(tuple(perms))
        rng = np.random.default_rng(seed)
        pick = rng.choice(total, size=limit, replace=False)
        return PermutationSet(tuple(perms[i] for i in sorted(pick)))
    rng = np.random.default_rng(seed)
    seen: dict[tuple, None] = {}
    while len(seen) < limit:
        tail = rng.permutation(np.arange(1, ndim))
        seen.setdefault(canonical_circular((0,) + tuple(int(t) for t in tail)), None)
    return PermutationSet(tuple(seen))


class RingMixtureModel:
    """Sum of unnormalized ring density components with derived weights.

    Components share dimension, basis grids, and ranks but carry distinct
    circular permutations.  All M=1 operations reduce exactly to the single
    component's.
    """

    def __init__(self, components):
        components = list(components)
        if not components:
            raise ValueError("mixture needs at least one component")
        first = components[0]
        for c in components[1:]:
            if c.ndim != first.ndim:
                raise ValueError("components disagree on dimension")
            if tuple(g.k_basis for g in c.grids) != tuple(
                g.k_basis for g in first.grids
            ):
                raise ValueError("components disagree on basis counts")
        self.components = components
        self.version = 0

    @property
    def ndim(self) -> int:
        return self.components[0].ndim

    @property
    def m(self) -> int:
        return len(self.components)

    def bump_version(self) -> None:
        self.version += 1

    # -- densities ----------------------------------------------------------

    def mixture_unnormalized(self, x) -> float:
        """Sum of component unnormalized densities at one data-ordered point."""
        return float(sum(c.unnormalized_density(x) for c in self.components))

    def density_batch(self, x: np.ndarray) -> np.ndarray:
        out = self.components[0].density_batch(x)
        for c in self.components[1:]:
            out = out + c.density_batch(x)
        return out

    def sum_z(self) -> float:
        return float(sum(c.partition_function() for c in self.components))

    def sigma_weights(self) -> np.ndarray:
        """Derived weights Z_m / sum(Z); positive, summing to one."""
        zs = np.array([c.partition_function() for c in self.components])
        total = zs.sum()
        if not np.isfinite(total) or total <= 0.0:
            raise ZeroDivisionError("mixture has zero total mass")
        return zs / total

    def mixture_log_likelihood(self, batch: np.ndarray) -> float:
        """Sum over the batch of log(sum_m q_m) - log(sum_m Z_m)."""
        batch = np.asarray(batch, dtype=float)
        if batch.ndim != 2 or batch.shape[0] == 0:
            raise ValueError("batch must be a nonempty (N, D) matrix")
        q = self.density_batch(batch)
        return float(
            np.sum(np.log(q + LOG_FLOOR)) - batch.shape[0] * np.log(self.sum_z())
        )

    def grad_log_likelihood(self, batch: np.ndarray) -> list[list[np.ndarray]]:
        """Per-component core gradients of mixture_log_likelihood."""
        batch = np.asarray(batch, dtype=float)
        ts = [c.trans_values(batch) for c in self.components]
        q = sum(t * t for t in ts)
        total_z = self.sum_z()
        n = batch.shape[0]
        grads = []
        for c, t in zip(self.components, ts):
            w = 2.0 * t / (q + LOG_FLOOR)
            pos = c.positive_gradients(batch, w)
            zg = c.partition_gradients()
            grads.append([p - (n / total_z) * g for p, g in zip(pos, zg)])
        return grads

    # -- queries --------------------------------------------------------------

    def marginal_density(self, query: DensityQuery) -> float:
        """Unnormalized mixture marginal: sum of component marginals."""
        return float(sum(c.marginal_density(query) for c in self.components))

    def cumulative_marginal(self, data_dim: int, xs: np.ndarray) -> np.ndarray:
        """Mixture marginal CDF of one data dimension: sigma-weighted blend."""
        sigma = self.sigma_weights()
        out = None
        for s, c in zip(sigma, self.components):
            f = s * c.cumulative_marginal(data_dim, xs)
            out = f if out is None else out + f
        return out

    # -- sampling ---------------------------------------------------------------

    def mixture_sample(self, n: int, seed: int, workers: int = 1) -> np.ndarray:
        """Exact mixture samples in data-dimension order.

        Draws a component per row from Categorical(sigma), runs the
        autoregressive sampler on it, then inverts the component's
        permutation.  Deterministic under the seed regardless of grouping.
        """
        if n < 1:
            raise ValueError(f"sample count must be >= 1, got {n}")
        gen = np.random.Generator(np.random.Philox(key=int(seed)))
        sigma = self.sigma_weights()
        comp_idx = np.searchsorted(np.cumsum(sigma), gen.random(n), side="right")
        comp_idx = np.minimum(comp_idx, self.m - 1)
        u = gen.random((n, self.ndim))
        out = np.empty((n, self.ndim))
        for mi, comp in enumerate(self.components):
            rows = np.nonzero(comp_idx == mi)[0]
            if rows.size == 0:
                continue
            plan = build_plan(comp, rng_seed=seed)
            axis_vals = sample_from_uniforms(comp, plan, u[rows], workers=workers)
            out[rows.reshape(-1, 1), np.asarray(comp.permutation)] = axis_vals
        return out

    # -- gauge ---------------------------------------------------------------------

    def rescale_joint(self, target_total: float | None = None) -> float:
        """Rescale all cores so sum(Z) hits the target (default M).

        A shared factor preserves the Z ratios, hence the sigma weights;
        per-component gauge fixing would force them uniform.
        """
        if target_total is None:
            target_total = float(self.m)
        total = self.sum_z()
        if not np.isfinite(total) or total <= 0.0:
            raise FloatingPointError(f"cannot rescale from sum Z = {total}")
        factor = (target_total / total) ** (1.0 / (2.0 * self.ndim))
        for c in self.components:
            c.set_cores(c.coeff.scale(factor))
        self.bump_version()
        return factor


def create_mixture(
    ndim: int,
    k_basis: int,
    rank,
    n_components: int,
    seed: int,
    permutations: PermutationSet | None = None,
) -> RingMixtureModel:
    """Components on distinct circular permutations, each gauge-fixed to Z=1.

    Requests beyond the (D-1)!/2 candidate pool are clamped to the pool
    size.  Components share grid objects and draw cores from split seeds.
    """
    if permutations is None:
        limit = min(n_components, count_circular(ndim))
        permutations = enumerate_circular(ndim, limit=limit, seed=seed)
    grids = [BasisGrid(k_basis) for _ in range(ndim)]
    seeds = np.random.SeedSequence(seed).spawn(permutations.m)
    comps = [
        random_model(
            ndim,
            k_basis,
            rank,
            seed=int(s.generate_state(1)[0]),
            permutation=perm,
            grids=grids,
        )
        for s, perm in zip(seeds, permutations.perms)
    ]
    return RingMixtureModel(comps)
