"""Tensor-ring container and contraction kernels.

A tensor in ring format is a list of D order-3 cores; core d has shape
(R_{d-1}, I_d, R_d) with R_D = R_0 closing the ring.  An element is the
trace of the product of one lateral slice per core.  The inner product of
two ring tensors is computed as a chain of merged-rank matrix products
without ever materializing a dense tensor.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatchError

DENSE_SIZE_LIMIT = 1_000_000


class TrCores:
    """Immutable list of tensor-ring cores.

    Parameters
    ----------
    cores : sequence of ndarray
        Core d must have shape (R_{d-1}, I_d, R_d); the last rank must
        close the ring (R_D == R_0).  Arrays are copied and frozen.
    """

    def __init__(self, cores):
        arrays = []
        for d, c in enumerate(cores):
            a = np.array(c, dtype=float)
            if a.ndim != 3:
                raise ShapeMismatchError(
                    f"core {d} must be order-3, got shape {a.shape}"
                )
            a.flags.writeable = False
            arrays.append(a)
        if not arrays:
            raise ShapeMismatchError("need at least one core")
        for d in range(len(arrays)):
            if arrays[d].shape[2] != arrays[(d + 1) % len(arrays)].shape[0]:
                raise ShapeMismatchError(
                    f"rank mismatch between cores {d} and {(d + 1) % len(arrays)}"
                )
        self.cores = tuple(arrays)

    @property
    def ndim(self) -> int:
        return len(self.cores)

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        # (R_0, ..., R_D) with R_D == R_0
        return tuple(c.shape[0] for c in self.cores) + (self.cores[0].shape[0],)

    def scale(self, factor: float) -> "TrCores":
        """Every core multiplied by factor (element scales by factor**D)."""
        return TrCores([c * factor for c in self.cores])

    def __repr__(self):
        return f"TrCores(D={self.ndim}, modes={self.mode_sizes}, ranks={self.ranks})"


def element(cores: TrCores, index) -> float:
    """Single entry: Trace(G_1(:, i_1, :) ... G_D(:, i_D, :))."""
    index = np.asarray(index, dtype=int)
    if index.shape != (cores.ndim,):
        raise IndexError(f"index must have length {cores.ndim}")
    for d, (i, size) in enumerate(zip(index, cores.mode_sizes)):
        if not 0 <= i < size:
            raise IndexError(f"index {i} out of bounds for mode {d} (size {size})")
    mat = cores.cores[0][:, index[0], :]
    for d in range(1, cores.ndim):
        mat = mat @ cores.cores[d][:, index[d], :]
    return float(np.trace(mat))


def inner_product(a: TrCores, b: TrCores) -> float:
    """Inner product of the two represented dense tensors.

    Left-to-right chain over merged rank pairs: the running state is the
    (R^a_0 R^b_0, R^a_d R^b_d) matrix obtained by merging the two open rank
    indices on each side, and each step is one matrix product.
    """
    if a.mode_sizes != b.mode_sizes:
        raise ShapeMismatchError(
            f"mode sizes differ: {a.mode_sizes} vs {b.mode_sizes}"
        )
    res = None
    for ga, gb in zip(a.cores, b.cores):
        t = np.einsum("ikj,xky->ixjy", ga, gb, optimize=True)
        t = t.reshape(ga.shape[0] * gb.shape[0], ga.shape[2] * gb.shape[2])
        res = t if res is None else res @ t
    return float(np.trace(res))


def marginalize(cores: TrCores, marginal_set, weights="sum") -> TrCores:
    """Collapse the modes in marginal_set to size 1 by weighted slice sums.

    weights is either the string "sum" (plain summation, all-ones weights)
    or a mapping {dim: vector of length I_d}.  Dimensions outside
    marginal_set are untouched.
    """
    marginal_set = set(int(d) for d in marginal_set)
    for d in marginal_set:
        if not 0 <= d < cores.ndim:
            raise ShapeMismatchError(f"marginal dimension {d} out of range")
    new = []
    for d, g in enumerate(cores.cores):
        if d not in marginal_set:
            new.append(g)
            continue
        if weights == "sum":
            w = np.ones(g.shape[1])
        else:
            w = np.asarray(weights[d], dtype=float)
            if w.shape != (g.shape[1],):
                raise ShapeMismatchError(
                    f"weight vector for dim {d} has length {w.shape}, "
                    f"expected {g.shape[1]}"
                )
        new.append(np.einsum("k,akb->ab", w, g)[:, None, :])
    return TrCores(new)


def kron_square(cores: TrCores) -> TrCores:
    """Ring representation of the elementwise-squared tensor map.

    Output core d has shape (R_{d-1}^2, I_d^2, R_d^2); the lateral slice at
    paired index (k, l) (flattened row-major) is the Kronecker product of
    slices k and l, so element((k_1,l_1),...) = element(k)*element(l).
    """
    new = []
    for g in cores.cores:
        rp, K, rn = g.shape
        sq = np.einsum("akb,cld->acklbd", g, g).reshape(rp * rp, K * K, rn * rn)
        new.append(sq)
    return TrCores(new)


def to_dense(cores: TrCores) -> np.ndarray:
    """Dense tensor with entries element(i); oracle support for small sizes."""
    total = int(np.prod(cores.mode_sizes, dtype=object))
    if total > DENSE_SIZE_LIMIT:
        raise ShapeMismatchError(
            f"dense reconstruction of {total} entries exceeds the "
            f"{DENSE_SIZE_LIMIT} limit"
        )
    state = cores.cores[0]
    for g in cores.cores[1:]:
        state = np.tensordot(state, g, axes=([-1], [0]))
    # close the ring: trace over (R_0, ..., R_0)
    return np.trace(state, axis1=0, axis2=-1)


def pair_transfer(core: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Weighted pair contraction of one core with itself.

    Returns the (R_{d-1}^2, R_d^2) matrix whose ((r,r'),(s,s')) entry is
    sum_{k,l} weight[k,l] * G[r,k,s] * G[r',l,s'].  Equals the
    mass/cumulative-weighted slice sum of kron_square without materializing
    the I^2 paired slices.
    """
    rp, K, rn = core.shape
    if weight.shape != (K, K):
        raise ShapeMismatchError(
            f"weight matrix shape {weight.shape} does not match mode size {K}"
        )
    t = np.einsum("kl,akb,cld->acbd", weight, core, core, optimize=True)
    return t.reshape(rp * rp, rn * rn)


def point_transfer(q: np.ndarray) -> np.ndarray:
    """Kronecker square of a point-evaluation factor matrix."""
    return np.kron(q, q)
