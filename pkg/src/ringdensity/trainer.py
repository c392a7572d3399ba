"""Maximum-likelihood training for single components and mixtures.

Minibatch gradient ascent on the exact log-likelihood: the positive phase
is the batch term, the negative phase is the analytically computed
partition function (once per step, it is sample-independent).  After every
optimizer step the cores are jointly rescaled so the total mass returns to
its gauge target, which leaves the normalized density unchanged but keeps
the ring contraction numerically bounded.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset
from .mixture import RingMixtureModel
from .model import LOG_FLOOR, RingDensityModel

logger = logging.getLogger(__name__)

_OPTIMIZERS = ("adaptive-moment", "plain-sgd")
_AUTO_CLIP_NORM = 10.0


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 512
    max_epochs: int = 50
    patience: int = 20
    seed: int = 0
    optimizer: str = "adaptive-moment"
    grad_clip: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        for name in ("batch_size", "max_epochs", "patience"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.optimizer not in _OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {_OPTIMIZERS}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive when set")


@dataclass
class TrainReport:
    train_nll: list = field(default_factory=list)
    val_nll: list = field(default_factory=list)
    sum_z: list = field(default_factory=list)
    sigmas: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    best_epoch: int = -1
    diverged: bool = False
    message: str = ""

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,train_nll,val_nll,sum_z,seconds\n")
            for e, (tr, va, sz, sec) in enumerate(
                zip(self.train_nll, self.val_nll, self.sum_z, self.seconds)
            ):
                fh.write(f"{e},{tr:.12g},{va:.12g},{sz:.12g},{sec:.6g}\n")


def _as_mixture(target) -> RingMixtureModel:
    if isinstance(target, RingMixtureModel):
        return target
    if isinstance(target, RingDensityModel):
        return RingMixtureModel([target])
    raise TypeError(f"cannot train object of type {type(target)!r}")


def nll_per_sample(target, dataset: Dataset, split: str = "validation") -> np.ndarray:
    """Per-sample negative log-likelihoods in original data units.

    Adds the standardization Jacobian sum(log scale) so values are
    comparable across preprocessing choices.  Samples whose unnormalized
    density hits the log floor are excluded (count logged).
    """
    mix = _as_mixture(target)
    data = dataset.split(split)
    if data.shape[0] == 0:
        raise ValueError(f"split {split!r} is empty")
    q = mix.density_batch(data)
    keep = q > LOG_FLOOR
    dropped = int(np.size(keep) - np.count_nonzero(keep))
    if dropped:
        logger.warning("%d samples at the density floor excluded from NLL", dropped)
    if not np.any(keep):
        return np.array([np.inf])
    nll = -(np.log(q[keep]) - np.log(mix.sum_z()))
    return nll + dataset.jacobian


def evaluate_nll(target, dataset: Dataset, split: str = "validation") -> float:
    """Mean per-sample negative log-likelihood in original data units."""
    return float(np.mean(nll_per_sample(target, dataset, split)))


def gaussian_baseline_nll(dataset: Dataset, split: str = "validation") -> float:
    """Mean NLL of a full-covariance Gaussian MLE fit, original units."""
    x = dataset.to_original(dataset.train)
    mu = x.mean(axis=0)
    cov = np.cov(x, rowvar=False, bias=True)
    cov = np.atleast_2d(cov) + 1e-9 * np.eye(x.shape[1])
    y = dataset.to_original(dataset.split(split)) - mu
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise FloatingPointError("covariance not positive definite")
    maha = np.einsum("ni,ij,nj->n", y, np.linalg.inv(cov), y)
    d = x.shape[1]
    return float(0.5 * (d * np.log(2.0 * np.pi) + logdet + maha.mean()))


class _Optimizer:
    """Adam or plain SGD over a flat list of core arrays (minimizes)."""

    def __init__(self, shapes, config: TrainConfig):
        self.kind = config.optimizer
        self.lr = config.learning_rate
        self.t = 0
        if self.kind == "adaptive-moment":
            self.m = [np.zeros(s) for s in shapes]
            self.v = [np.zeros(s) for s in shapes]

    def step(self, params, grads):
        self.t += 1
        if self.kind == "plain-sgd":
            return [p - self.lr * g for p, g in zip(params, grads)]
        b1, b2, eps = 0.9, 0.999, 1e-8
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            mhat = self.m[i] / (1 - b1**self.t)
            vhat = self.v[i] / (1 - b2**self.t)
            out.append(p - self.lr * mhat / (np.sqrt(vhat) + eps))
        return out


def _get_cores(mix: RingMixtureModel) -> list[np.ndarray]:
    return [g for c in mix.components for g in c.coeff.cores]


def _set_cores(mix: RingMixtureModel, flat) -> None:
    from .tensor_ring import TrCores

    i = 0
    for c in mix.components:
        d = c.ndim
        c.set_cores(TrCores(flat[i : i + d]))
        i += d
    mix.bump_version()


def _clip_global_norm(grads, max_norm: float):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        factor = max_norm / total
        return [g * factor for g in grads]
    return grads


def fit(target, dataset: Dataset, config: TrainConfig) -> TrainReport:
    """Minibatch maximum-likelihood ascent with validation early stopping.

    Deterministic under config.seed.  The best-validation parameters are
    restored at exit; on divergence (non-finite likelihood) the last finite
    epoch state is restored and the report carries a diagnostic.
    """
    mix = _as_mixture(target)
    train = dataset.train
    if train.shape[0] == 0 or dataset.validation.shape[0] == 0:
        raise ValueError("dataset needs nonempty train and validation splits")
    rng = np.random.default_rng(config.seed)
    opt = _Optimizer([g.shape for g in _get_cores(mix)], config)
    report = TrainReport()
    clip = config.grad_clip
    best_state = [g.copy() for g in _get_cores(mix)]
    best_val = np.inf
    since_best = 0
    n = train.shape[0]
    for epoch in range(config.max_epochs):
        tic = time.perf_counter()
        last_finite = [g.copy() for g in _get_cores(mix)]
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = train[order[start : start + config.batch_size]]
            grads_nested = mix.grad_log_likelihood(batch)
            # mean-ascent step expressed as loss minimization
            scale = -1.0 / batch.shape[0]
            grads = [scale * g for comp in grads_nested for g in comp]
            if not all(np.all(np.isfinite(g)) for g in grads):
                if clip is None:
                    clip = _AUTO_CLIP_NORM
                    logger.warning(
                        "non-finite gradient at epoch %d: enabling clip norm %.1f",
                        epoch,
                        clip,
                    )
                continue
            if clip is not None:
                grads = _clip_global_norm(grads, clip)
            stepped = opt.step(_get_cores(mix), grads)
            try:
                _set_cores(mix, stepped)
                mix.rescale_joint()
            except FloatingPointError as e:
                _set_cores(mix, last_finite)
                report.diverged = True
                report.message = f"parameters diverged at epoch {epoch}: {e}"
                logger.error(report.message)
                break
        if report.diverged:
            break
        train_nll = evaluate_nll(mix, dataset, "train")
        val_nll = evaluate_nll(mix, dataset, "validation")
        report.seconds.append(time.perf_counter() - tic)
        report.train_nll.append(train_nll)
        report.val_nll.append(val_nll)
        report.sum_z.append(mix.sum_z())
        report.sigmas.append(mix.sigma_weights().copy())
        if not (np.isfinite(train_nll) and np.isfinite(val_nll)):
            _set_cores(mix, last_finite)
            report.diverged = True
            report.message = f"non-finite NLL at epoch {epoch}; restored previous state"
            logger.error(report.message)
            break
        # improvement must clear ulp-level drift from the gauge rescale
        threshold = best_val
        if np.isfinite(best_val):
            threshold = best_val - 1e-9 * max(1.0, abs(best_val))
        if val_nll < threshold:
            best_val = val_nll
            report.best_epoch = epoch
            best_state = [g.copy() for g in _get_cores(mix)]
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    if report.best_epoch >= 0:
        _set_cores(mix, best_state)
    return report
