"""Toy generators, CSV ingestion, unit-cube standardization, histogram KL.

Every dataset is standardized per dimension by an affine map into [0, 1]
computed from the training split (2.5% margin on each side so boundary
spline support never clips evaluation data).  The log-Jacobian sum(log
scale) converts unit-cube likelihoods back to original data units.

Generator parametric forms are documented inline; they follow the de facto
standard constructions for these families.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.datasets import make_s_curve, make_swiss_roll

MARGIN = 0.025

TOY_FAMILIES = (
    "two-spirals",
    "checkerboard",
    "rings",
    "swissroll2d",
    "pinwheel",
    "tree",
    "sierpinski",
    "swissroll3d",
    "circles3d",
    "s-curve",
)

_DEFAULT_NOISE = {
    "two-spirals": 0.05,
    "checkerboard": 0.0,
    "rings": 0.02,
    "swissroll2d": 0.25,
    "pinwheel": 0.0,
    "tree": 0.01,
    "sierpinski": 0.002,
    "swissroll3d": 0.25,
    "circles3d": 0.02,
    "s-curve": 0.05,
}


@dataclass(frozen=True)
class ToySpec:
    family: str
    n: int
    noise: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in TOY_FAMILIES:
            raise ValueError(
                f"unknown toy family {self.family!r}; choose from {TOY_FAMILIES}"
            )
        if self.n < 1:
            raise ValueError("sample count must be >= 1")
        if self.noise is not None and self.noise < 0:
            raise ValueError("noise must be non-negative")

    @property
    def effective_noise(self) -> float:
        return _DEFAULT_NOISE[self.family] if self.noise is None else self.noise


@dataclass
class Dataset:
    """Standardized samples with the affine map back to original units.

    Rows are shuffled once at construction and stored split-ordered:
    train, then validation, then test.
    """

    data: np.ndarray
    offset: np.ndarray
    scale: np.ndarray
    n_train: int
    n_val: int
    name: str = ""

    @property
    def ndim(self) -> int:
        return self.data.shape[1]

    @property
    def train(self) -> np.ndarray:
        return self.data[: self.n_train]

    @property
    def validation(self) -> np.ndarray:
        return self.data[self.n_train : self.n_train + self.n_val]

    @property
    def test(self) -> np.ndarray:
        return self.data[self.n_train + self.n_val :]

    def split(self, name: str) -> np.ndarray:
        try:
            return {
                "train": self.train,
                "validation": self.validation,
                "val": self.validation,
                "test": self.test,
            }[name]
        except KeyError:
            raise ValueError(f"unknown split {name!r}") from None

    @property
    def jacobian(self) -> float:
        """Log-volume correction sum(log scale_d) for original-unit NLLs."""
        return float(np.sum(np.log(self.scale)))

    def to_original(self, unit: np.ndarray) -> np.ndarray:
        return unit * self.scale + self.offset

    def to_unit(self, original: np.ndarray) -> np.ndarray:
        return (original - self.offset) / self.scale

    def with_affine(self, offset, scale) -> "Dataset":
        """The same samples re-expressed in another unit-cube frame."""
        offset = np.asarray(offset, dtype=float)
        scale = np.asarray(scale, dtype=float)
        data = np.clip((self.to_original(self.data) - offset) / scale, 0.0, 1.0)
        return Dataset(data, offset, scale, self.n_train, self.n_val, self.name)


def _standardize(
    raw: np.ndarray,
    split_fractions,
    seed: int,
    name: str,
    zscore: bool = False,
) -> Dataset:
    n, _ = raw.shape
    f_train, f_val = split_fractions[0], split_fractions[1]
    n_train = int(round(f_train * n))
    n_val = int(round(f_val * n))
    if n_train < 1 or n_train + n_val > n:
        raise ValueError(f"split fractions {split_fractions} leave no usable splits")
    order = np.random.default_rng(seed).permutation(n)
    raw = raw[order]
    train = raw[:n_train]
    offset = np.zeros(raw.shape[1])
    scale = np.ones(raw.shape[1])
    if zscore:
        mu = train.mean(axis=0)
        sd = train.std(axis=0)
        bad = np.nonzero(sd == 0.0)[0]
        if bad.size:
            raise ValueError(f"zero variance in column {bad[0]}")
        offset, scale = mu, sd
        raw = (raw - mu) / sd
        train = raw[:n_train]
    lo = train.min(axis=0)
    hi = train.max(axis=0)
    span = hi - lo
    bad = np.nonzero(span == 0.0)[0]
    if bad.size:
        raise ValueError(f"zero variance in column {bad[0]}")
    mm_scale = span / (1.0 - 2.0 * MARGIN)
    mm_offset = lo - MARGIN * mm_scale
    data = np.clip((raw - mm_offset) / mm_scale, 0.0, 1.0)
    return Dataset(
        data=data,
        offset=offset + scale * mm_offset,
        scale=scale * mm_scale,
        n_train=n_train,
        n_val=n_val,
        name=name,
    )


def generate_toy(spec: ToySpec, split_fractions=(0.8, 0.1, 0.1)) -> Dataset:
    """Seeded toy dataset standardized into the unit cube."""
    raw = toy_samples(spec.family, spec.n, spec.effective_noise, spec.seed)
    return _standardize(raw, split_fractions, spec.seed, spec.family)


def ingest_csv(
    path, split_fractions=(0.8, 0.1, 0.1), seed: int = 0, header: bool = False
) -> Dataset:
    """Numeric CSV -> z-scored, margin-mapped Dataset.

    z-score uses train-split statistics, then the train min/max maps to
    [margin, 1-margin]; validation/test are clipped into [0, 1].
    """
    raw = _read_numeric_csv(path, header)
    name = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return _standardize(raw, split_fractions, seed, name, zscore=True)


def _read_numeric_csv(path, header: bool) -> np.ndarray:
    skip = 1 if header else 0
    try:
        raw = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    except ValueError:
        _locate_bad_cell(path, skip)
        raise
    if raw.size == 0:
        raise ValueError(f"empty file: {path}")
    return raw


def _locate_bad_cell(path, skip: int) -> None:
    with open(path) as fh:
        for row, line in enumerate(fh):
            if row < skip or not line.strip():
                continue
            for col, cell in enumerate(line.strip().split(",")):
                try:
                    float(cell)
                except ValueError:
                    raise ValueError(
                        f"non-numeric cell at row {row}, column {col}: {cell!r}"
                    ) from None


def histogram_kl(samples_p, samples_q, bins_per_dim: int | None = None) -> float:
    """KL(p_hat || q_hat) over a shared regular grid with add-one smoothing.

    Reliable only in low dimension; rejects D > 3.  Defaults: 100 bins/dim
    for D <= 2, 50 for D = 3.
    """
    p = np.asarray(samples_p, dtype=float)
    q = np.asarray(samples_q, dtype=float)
    if p.ndim != 2 or q.ndim != 2 or p.shape[1] != q.shape[1]:
        raise ValueError("sample sets must be (N, D) with matching D")
    if p.shape[0] == 0 or q.shape[0] == 0:
        raise ValueError("sample sets must be nonempty")
    d = p.shape[1]
    if d > 3:
        raise ValueError(f"histogram KL unreliable for D={d} > 3")
    if bins_per_dim is None:
        bins_per_dim = 100 if d <= 2 else 50
    lo = np.minimum(p.min(axis=0), q.min(axis=0))
    hi = np.maximum(p.max(axis=0), q.max(axis=0))
    edges = [np.linspace(lo[i], hi[i], bins_per_dim + 1) for i in range(d)]
    cp = np.histogramdd(p, bins=edges)[0] + 1.0
    cq = np.histogramdd(q, bins=edges)[0] + 1.0
    cp /= cp.sum()
    cq /= cq.sum()
    return float(np.sum(cp * np.log(cp / cq)))


# -- generators ------------------------------------------------------------------


def toy_samples(family: str, n: int, noise: float | None = None, seed: int = 0):
    """Raw (unstandardized) samples from one toy family."""
    spec = ToySpec(family, n, noise, seed)
    rng = np.random.default_rng(seed)
    gen = _GENERATORS[spec.family]
    return gen(rng, n, spec.effective_noise)


def _two_spirals(rng, n, noise):
    # radius sweep t ~ 3*pi*sqrt(U) over 1.5 turns; the second arm is the
    # point reflection of the first; Gaussian jitter of scale `noise`
    t = 3.0 * np.pi * np.sqrt(rng.random(n))
    arm = rng.integers(0, 2, n) * 2 - 1
    x = np.stack([-t * np.cos(t), t * np.sin(t)], axis=1) / 3.0
    x *= arm[:, None]
    return x + noise * rng.standard_normal((n, 2))


def _checkerboard(rng, n, noise):
    # x1 uniform on [-2, 2); x2 uniform on two unit strips whose offset
    # alternates with floor(x1); scaled by 2 to the usual [-4, 4] board
    x1 = rng.random(n) * 4.0 - 2.0
    x2 = rng.random(n) - rng.integers(0, 2, n) * 2.0 + np.floor(x1) % 2
    x = np.stack([x1, x2], axis=1) * 2.0
    if noise:
        x += noise * rng.standard_normal((n, 2))
    return x


def _rings(rng, n, noise):
    # four concentric circles, radii k/4, sampled proportional to
    # circumference, with Gaussian radial jitter
    radii = np.array([0.25, 0.5, 0.75, 1.0])
    level = rng.choice(4, size=n, p=radii / radii.sum())
    theta = rng.random(n) * 2.0 * np.pi
    r = radii[level] + noise * rng.standard_normal(n)
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def _swissroll2d(rng, n, noise):
    # the (x, z) face of the classic swiss roll, shrunk by 5
    pts = make_swiss_roll(n, noise=noise, random_state=_child_seed(rng))[0]
    return pts[:, [0, 2]] / 5.0


def _pinwheel(rng, n, noise):
    # five Gaussian blades (radial std 0.3, tangential std 0.1) swept by an
    # angle growing with radius at rate 0.25; doubled for scale
    n_classes, rate = 5, 0.25
    rads = np.linspace(0, 2.0 * np.pi, n_classes, endpoint=False)
    labels = rng.integers(0, n_classes, n)
    feats = rng.standard_normal((n, 2)) * np.array([0.3, 0.1]) + np.array([1.0, 0.0])
    angles = rads[labels] + rate * np.exp(feats[:, 0])
    c, s = np.cos(angles), np.sin(angles)
    x = np.stack(
        [feats[:, 0] * c - feats[:, 1] * s, feats[:, 0] * s + feats[:, 1] * c],
        axis=1,
    )
    x = 2.0 * x
    if noise:
        x += noise * rng.standard_normal((n, 2))
    return x


def _tree_segments(depth: int = 7):
    segs = []

    def grow(x, y, ang, length, d):
        x2 = x + length * np.sin(ang)
        y2 = y + length * np.cos(ang)
        segs.append((x, y, x2, y2))
        if d > 0:
            grow(x2, y2, ang + 0.45, 0.7 * length, d - 1)
            grow(x2, y2, ang - 0.45, 0.7 * length, d - 1)

    grow(0.0, 0.0, 0.0, 1.0, depth)
    return np.array(segs)


def _tree(rng, n, noise):
    # points uniform along the branches of a binary fractal tree
    # (branch angle 0.45 rad, length decay 0.7, depth 7)
    segs = _tree_segments()
    lengths = np.hypot(segs[:, 2] - segs[:, 0], segs[:, 3] - segs[:, 1])
    pick = rng.choice(len(segs), size=n, p=lengths / lengths.sum())
    t = rng.random(n)
    x = segs[pick, 0] + t * (segs[pick, 2] - segs[pick, 0])
    y = segs[pick, 1] + t * (segs[pick, 3] - segs[pick, 1])
    return np.stack([x, y], axis=1) + noise * rng.standard_normal((n, 2))


def _sierpinski(rng, n, noise):
    # chaos game on the Sierpinski carpet: the eight outer cells of the
    # 3x3 subdivision, iterated to contraction below double precision
    cells = np.array(
        [(i, j) for i in range(3) for j in range(3) if not (i == 1 and j == 1)],
        dtype=float,
    )
    pts = rng.random((n, 2))
    for _ in range(26):
        pick = cells[rng.integers(0, 8, n)]
        pts = (pts + pick) / 3.0
    pts = pts * 2.0 - 1.0
    if noise:
        pts = pts + noise * rng.standard_normal((n, 2))
    return pts


def _swissroll3d(rng, n, noise):
    return make_swiss_roll(n, noise=noise, random_state=_child_seed(rng))[0]


def _circles3d(rng, n, noise):
    # two coplanar rings (radii 1.0 and 0.5, circumference-weighted) with
    # 3-sigma-clipped Gaussian jitter radially and along z
    outer = rng.random(n) < 2.0 / 3.0
    base = np.where(outer, 1.0, 0.5)
    theta = rng.random(n) * 2.0 * np.pi
    cap = 3.0 * noise
    dr = np.clip(noise * rng.standard_normal(n), -cap, cap)
    z = np.clip(noise * rng.standard_normal(n), -cap, cap)
    r = base + dr
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)


def _s_curve(rng, n, noise):
    return make_s_curve(n, noise=noise, random_state=_child_seed(rng))[0]


def _child_seed(rng) -> int:
    return int(rng.integers(0, 2**31 - 1))


_GENERATORS = {
    "two-spirals": _two_spirals,
    "checkerboard": _checkerboard,
    "rings": _rings,
    "swissroll2d": _swissroll2d,
    "pinwheel": _pinwheel,
    "tree": _tree,
    "sierpinski": _sierpinski,
    "swissroll3d": _swissroll3d,
    "circles3d": _circles3d,
    "s-curve": _s_curve,
}
