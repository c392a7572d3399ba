"""Uniform quadratic B-spline basis on the unit interval.

A grid with K basis functions places knots every h = 1/(K-2) from -2h to
1+2h, so the whole of [0, 1] lies in the full-support region: exactly three
basis functions are nonzero at any point and they sum to one there.  Basis k
is supported on [(k-2)h, (k+1)h].

All one-dimensional integrals use per-interval Gauss-Legendre rules: 2-point
for single basis functions (exact for quadratics) and 3-point for products
(exact for quartics), so integrals and mass matrices carry no quadrature
error.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .errors import DomainError

DEGREE = 2

# Gauss-Legendre nodes/weights mapped to [0, 1].
_G2_NODES = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_G2_WEIGHTS = np.array([0.5, 0.5])
_G3_NODES = np.array(
    [0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)]
)
_G3_WEIGHTS = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


def cox_de_boor(knots: np.ndarray, k: int, degree: int, x: float) -> float:
    """Value of basis function k at x by the Cox-de Boor recursion.

    Reference implementation: used once at grid construction to compile the
    per-interval polynomial table, and by tests as an independent oracle.
    """
    if degree == 0:
        return 1.0 if knots[k] <= x < knots[k + 1] else 0.0
    left = 0.0
    den = knots[k + degree] - knots[k]
    if den > 0.0:
        left = (x - knots[k]) / den * cox_de_boor(knots, k, degree - 1, x)
    right = 0.0
    den = knots[k + degree + 1] - knots[k + 1]
    if den > 0.0:
        right = (knots[k + degree + 1] - x) / den * cox_de_boor(
            knots, k + 1, degree - 1, x
        )
    return left + right


class BasisGrid:
    """Immutable quadratic B-spline system with K basis functions on [0, 1].

    Attributes
    ----------
    k_basis : int
        Number of basis functions K (>= 4).
    knot_step : float
        Uniform knot spacing h = 1/(K-2).
    knots : ndarray, shape (K+3,)
        Strictly increasing uniform knots from -2h to 1+2h.
    domain : tuple
        The closed interval (0.0, 1.0).
    """

    def __init__(self, k_basis: int):
        if k_basis < 4:
            raise ValueError(f"k_basis must be >= 4, got {k_basis}")
        self.k_basis = int(k_basis)
        self.n_intervals = self.k_basis - 2
        self.knot_step = 1.0 / self.n_intervals
        self.knots = (np.arange(self.k_basis + 3) - 2.0) * self.knot_step
        self.knots.flags.writeable = False
        self.domain = (0.0, 1.0)
        # Per-interval quadratic coefficients in the local coordinate
        # s = x/h - j: coef[j, r] gives (c0, c1, c2) of the basis with
        # role r in interval j, i.e. basis k = j + r.
        self._coef = self._compile_interval_polynomials()
        self._coef.flags.writeable = False

    def _compile_interval_polynomials(self) -> np.ndarray:
        coef = np.empty((self.n_intervals, 3, 3))
        h = self.knot_step
        for j in range(self.n_intervals):
            x0 = j * h
            for r in range(3):
                k = j + r
                # Sample the quadratic restriction at s = 0, 1/2, 1 and
                # solve the 3x3 Vandermonde exactly.  Quadratic B-splines
                # are continuous, so knot-point values from the half-open
                # recursion are the correct two-sided values.
                v = np.array(
                    [
                        cox_de_boor(self.knots, k, DEGREE, x0 + s * h)
                        for s in (0.0, 0.5, 1.0)
                    ]
                )
                c0 = v[0]
                c1 = -3.0 * v[0] + 4.0 * v[1] - v[2]
                c2 = 2.0 * v[0] - 4.0 * v[1] + 2.0 * v[2]
                coef[j, r] = (c0, c1, c2)
        return coef

    # -- evaluation --------------------------------------------------------

    def _locate(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Interval index and local coordinate for points in [0, 1]."""
        t = np.asarray(x, dtype=float) * self.n_intervals
        j = np.minimum(t.astype(int), self.n_intervals - 1)
        return j, t - j

    def _check_domain(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise DomainError(f"coordinate outside [0, 1]: {x}")
        return x

    def eval_active(self, x: float) -> tuple[int, np.ndarray]:
        """First active basis index and the three nonzero values at x."""
        idx, vals = self.eval_active_many(np.array([float(x)]))
        return int(idx[0]), vals[0]

    def eval_active_many(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized eval_active: returns (indices (n,), values (n, 3)).

        At a point in interval j the active bases are j, j+1, j+2.
        """
        x = self._check_domain(x)
        j, s = self._locate(x)
        c = self._coef[j]  # (n, 3, 3)
        vals = c[..., 0] + s[:, None] * (c[..., 1] + s[:, None] * c[..., 2])
        return j, vals

    def eval_basis(self, x: np.ndarray) -> np.ndarray:
        """Dense (n, K) matrix of all basis values (zeros off the band)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        j, vals = self.eval_active_many(x)
        out = np.zeros((x.size, self.k_basis))
        rows = np.arange(x.size)[:, None]
        out[rows, j[:, None] + np.arange(3)] = vals
        return out

    # -- integrals ---------------------------------------------------------

    @cached_property
    def _role_full_int(self) -> np.ndarray:
        """h * integral over one interval of each role polynomial."""
        vals = self._role_values_at(_G2_NODES)  # (3 roles, 2 nodes)
        return self.knot_step * (vals @ _G2_WEIGHTS)

    @cached_property
    def _role_pair_full_int(self) -> np.ndarray:
        """h * integral over one interval of role_a * role_b products."""
        vals = self._role_values_at(_G3_NODES)  # (3, 3 nodes)
        prod = vals[:, None, :] * vals[None, :, :]
        return self.knot_step * (prod @ _G3_WEIGHTS)

    def _role_values_at(self, s: np.ndarray) -> np.ndarray:
        """Role polynomials evaluated at local coordinates s (interior table).

        All intervals share the same three polynomials on this uniform
        extension; interval 0's row is representative.
        """
        c = self._coef[0]  # (3, 3)
        return c[:, [0]] + s[None, :] * (c[:, [1]] + s[None, :] * c[:, [2]])

    @cached_property
    def _knot_cumulative(self) -> np.ndarray:
        """cum[j, k] = integral of basis k from 0 to knot j*h."""
        cum = np.zeros((self.n_intervals + 1, self.k_basis))
        full = self._role_full_int
        for j in range(self.n_intervals):
            cum[j + 1] = cum[j]
            cum[j + 1, j : j + 3] += full
        cum.flags.writeable = False
        return cum

    def integral_to(self, x: float) -> np.ndarray:
        """Vector of first antiderivatives: component k is int_0^x f_k."""
        x = self._check_domain(np.asarray(float(x)))
        j, s = self._locate(x[None])
        j, s = int(j[0]), float(s[0])
        out = self._knot_cumulative[j].copy()
        # partial interval [jh, x]: 2-point Gauss on [0, s] in local coords
        nodes = s * _G2_NODES
        vals = self._role_values_at(nodes)  # (3, 2)
        out[j : j + 3] += self.knot_step * s * (vals @ _G2_WEIGHTS)
        return out

    def basis_integrals(self) -> np.ndarray:
        """Full integrals int_0^1 f_k, k = 0..K-1."""
        return self._knot_cumulative[-1].copy()

    def mass_matrix(self) -> np.ndarray:
        """Gram matrix M[k, l] = int_0^1 f_k f_l: symmetric, five-diagonal."""
        return self._mass_cached.copy()

    @cached_property
    def _mass_cached(self) -> np.ndarray:
        m = self.pair_integral_to(1.0)
        m.flags.writeable = False
        return m

    def pair_integral_to(self, x: float) -> np.ndarray:
        """Banded matrix of pair integrals: entry (k, l) is int_0^x f_k f_l."""
        x = float(self._check_domain(np.asarray(float(x))))
        j, s = self._locate(np.asarray([x]))
        j, s = int(j[0]), float(s[0])
        out = np.zeros((self.k_basis, self.k_basis))
        full = self._role_pair_full_int
        for jj in range(j):
            out[jj : jj + 3, jj : jj + 3] += full
        out[j : j + 3, j : j + 3] += self.pair_partial_many(
            np.array([j]), np.array([s])
        )[0]
        return out

    def pair_partial_many(self, j: np.ndarray, s: np.ndarray) -> np.ndarray:
        """(n, 3, 3) partial pair integrals over [jh, jh + s*h].

        3-point Gauss on [0, s], exact for the quartic products.
        """
        nodes = s[:, None] * _G3_NODES[None, :]  # (n, 3)
        c = self._coef[j]  # (n, 3, 3)
        vals = c[:, :, None, 0] + nodes[:, None, :] * (
            c[:, :, None, 1] + nodes[:, None, :] * c[:, :, None, 2]
        )  # (n, role, node)
        prod = vals[:, :, None, :] * vals[:, None, :, :]  # (n, 3, 3, node)
        return self.knot_step * s[:, None, None] * (prod @ _G3_WEIGHTS)

    def pair_full_band(self) -> np.ndarray:
        """The 3x3 per-interval pair-integral block (shared by all intervals)."""
        return self._role_pair_full_int.copy()
