"""Command-line surface: fit, sample, eval, marginal, perms, bench, gen-toy.

Every randomized command takes an explicit --seed (no wall-clock seeding).
Exit codes: 0 success, 1 runtime/numeric failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import time

import numpy as np

from .checkpoint import export_json, load_checkpoint, save_checkpoint
from .datasets import TOY_FAMILIES, Dataset, ToySpec, generate_toy, histogram_kl, ingest_csv, toy_samples
from .errors import CheckpointError, ConfigError
from .mixture import RingMixtureModel, count_circular, create_mixture, enumerate_circular
from .model import DensityQuery
from .trainer import TrainConfig, evaluate_nll, fit, nll_per_sample

_CONFIG_SCHEMA = {
    "dataset": {"source", "family", "path", "header", "n", "noise", "seed", "split"},
    "model": {"k", "rank", "components"},
    "train": {
        "learning_rate",
        "batch_size",
        "max_epochs",
        "patience",
        "seed",
        "optimizer",
        "grad_clip",
    },
}


def load_run_config(path) -> dict:
    """JSON run config; rejects unknown keys anywhere (typo safety)."""
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON in {path}: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    for section, body in cfg.items():
        if section not in _CONFIG_SCHEMA:
            raise ConfigError(f"unknown config key: {section}")
        if not isinstance(body, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        for key in body:
            if key not in _CONFIG_SCHEMA[section]:
                raise ConfigError(f"unknown config key: {section}.{key}")
    return cfg


def _dataset_from(cfg: dict, args) -> Dataset:
    body = dict(cfg.get("dataset", {}))
    for flag, key in (
        ("toy", "family"),
        ("csv", "path"),
        ("n", "n"),
        ("noise", "noise"),
        ("data_seed", "seed"),
    ):
        val = getattr(args, flag, None)
        if val is not None:
            body[key] = val
    if getattr(args, "header", False):
        body["header"] = True
    split = tuple(body.get("split", (0.8, 0.1, 0.1)))
    if len(split) != 3 or abs(sum(split) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be 3 values summing to 1: {split}")
    source = body.get("source")
    if source is None:
        source = "csv" if "path" in body else "toy"
    if source == "toy":
        if "family" not in body:
            raise ConfigError("dataset needs a toy family (--toy or config)")
        spec = ToySpec(
            family=body["family"],
            n=int(body.get("n", 62500)),
            noise=body.get("noise"),
            seed=int(body.get("seed", 0)),
        )
        return generate_toy(spec, split)
    if source == "csv":
        if "path" not in body:
            raise ConfigError("dataset needs a csv path (--csv or config)")
        return ingest_csv(
            body["path"],
            split,
            seed=int(body.get("seed", 0)),
            header=bool(body.get("header", False)),
        )
    raise ConfigError(f"unknown dataset source {source!r}")


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        return max(1, args.threads)
    env = os.environ.get("TRD_THREADS")
    return max(1, int(env)) if env else 1


# -- commands --------------------------------------------------------------------


def cmd_fit(args) -> int:
    cfg = load_run_config(args.config) if args.config else {}
    model_cfg = dict(cfg.get("model", {}))
    train_cfg = dict(cfg.get("train", {}))
    for flag, section, key in (
        ("k", model_cfg, "k"),
        ("rank", model_cfg, "rank"),
        ("components", model_cfg, "components"),
        ("learning_rate", train_cfg, "learning_rate"),
        ("batch_size", train_cfg, "batch_size"),
        ("max_epochs", train_cfg, "max_epochs"),
        ("patience", train_cfg, "patience"),
        ("seed", train_cfg, "seed"),
        ("optimizer", train_cfg, "optimizer"),
        ("grad_clip", train_cfg, "grad_clip"),
    ):
        val = getattr(args, flag, None)
        if val is not None:
            section[key] = val
    if "seed" not in train_cfg:
        raise ConfigError("fit requires an explicit seed (--seed or train.seed)")
    if "k" not in model_cfg or "rank" not in model_cfg:
        raise ConfigError("fit requires model k and rank (--k/--rank or config)")
    dataset = _dataset_from(cfg, args)
    config = TrainConfig(**train_cfg)
    m = int(model_cfg.get("components", 1))
    mix = create_mixture(
        dataset.ndim,
        int(model_cfg["k"]),
        int(model_cfg["rank"]),
        m,
        seed=config.seed,
    )
    report = fit(mix, dataset, config)
    save_checkpoint(
        args.out, mix, dataset.offset, dataset.scale, dataset.name, config.seed
    )
    if args.report:
        report.write_csv(args.report)
    if report.diverged:
        print(f"fit diverged: {report.message}", file=sys.stderr)
        return 1
    best = report.val_nll[report.best_epoch]
    print(
        f"fit {dataset.name}: {len(report.val_nll)} epochs, "
        f"best val NLL {best:.4f} at epoch {report.best_epoch}"
    )
    return 0


def cmd_sample(args) -> int:
    mix, offset, scale, _, _ = load_checkpoint(args.checkpoint)
    unit = mix.mixture_sample(args.n, seed=args.seed, workers=_threads(args))
    original = unit * scale + offset
    np.savetxt(args.out, original, fmt="%.17g", delimiter=",")
    print(f"wrote {args.n} samples to {args.out}")
    return 0


def cmd_eval(args) -> int:
    if args.split not in ("train", "validation", "val", "test"):
        raise ConfigError(f"unknown split {args.split!r}")
    mix, offset, scale, _, _ = load_checkpoint(args.checkpoint)
    cfg = load_run_config(args.config) if args.config else {}
    dataset = _dataset_from(cfg, args)
    if dataset.ndim != mix.ndim:
        raise ConfigError(
            f"dataset dimension {dataset.ndim} != checkpoint dimension {mix.ndim}"
        )
    dataset = dataset.with_affine(offset, scale)
    nll = nll_per_sample(mix, dataset, args.split)
    mean = float(np.mean(nll))
    stderr = float(np.std(nll) / np.sqrt(len(nll)))
    print(f"NLL ({args.split}): {mean:.6f} +/- {stderr:.6f}  [n={len(nll)}]")
    if args.kl_ref:
        if mix.ndim > 3:
            raise ConfigError("KL comparison requires dimension <= 3")
        if args.seed is None:
            raise ConfigError("--seed is required with --kl-ref")
        ref = np.loadtxt(args.kl_ref, delimiter=",", ndmin=2)
        unit = mix.mixture_sample(args.kl_samples, seed=args.seed, workers=_threads(args))
        model_samples = unit * scale + offset
        kl = histogram_kl(model_samples, ref, args.kl_bins)
        print(f"KL(model || reference): {kl:.6f}  [{args.kl_samples} model samples]")
    return 0


def _parse_assignments(pairs) -> dict:
    out = {}
    for item in pairs or []:
        try:
            dim, val = item.split("=")
            out[int(dim)] = float(val)
        except ValueError:
            raise ConfigError(f"bad assignment {item!r}; expected DIM=VALUE") from None
    return out


def cmd_marginal(args) -> int:
    mix, _, _, _, _ = load_checkpoint(args.checkpoint)
    fixed = _parse_assignments(args.fix)
    marg = set()
    if args.marginalize:
        marg = {int(s) for s in args.marginalize.split(",") if s != ""}
    grid_dims = sorted(set(range(mix.ndim)) - set(fixed) - marg)
    res = args.resolution
    if not grid_dims:
        den = mix.marginal_density(
            DensityQuery(fixed=fixed, marginalized=frozenset(marg))
        )
        total = mix.marginal_density(
            DensityQuery(marginalized=frozenset(range(mix.ndim)))
        ) if not fixed else None
        with open(args.out, "w") as fh:
            fh.write("1.0\n" if total is None else f"{den / total:.17g}\n")
        print("fully reduced query; wrote single normalized row")
        return 0
    centers = (np.arange(res) + 0.5) / res
    mesh = np.meshgrid(*([centers] * len(grid_dims)), indexing="ij")
    points = np.stack([g.ravel() for g in mesh], axis=1)
    denom = mix.marginal_density(
        DensityQuery(
            fixed=fixed, marginalized=frozenset(marg) | frozenset(grid_dims)
        )
    )
    if denom <= 0:
        print("conditioning event has zero mass", file=sys.stderr)
        return 1
    values = np.empty(len(points))
    for i, pt in enumerate(points):
        q = DensityQuery(
            fixed={**fixed, **{d: float(v) for d, v in zip(grid_dims, pt)}},
            marginalized=frozenset(marg),
        )
        values[i] = mix.marginal_density(q) / denom
    cell = (1.0 / res) ** len(grid_dims)
    integral = float(values.sum() * cell)
    with open(args.out, "w") as fh:
        fh.write(",".join(f"x{d}" for d in grid_dims) + ",density\n")
        for pt, v in zip(points, values):
            fh.write(",".join(f"{c:.17g}" for c in pt) + f",{v:.17g}\n")
    print(
        f"wrote {len(points)} rows over dims {grid_dims}; "
        f"grid integral of density = {integral:.6f}"
    )
    return 0


def cmd_perms(args) -> int:
    total = count_circular(args.dim)
    if args.limit is not None and args.limit < total and args.seed is None:
        raise ConfigError("--seed is required when sampling a permutation subset")
    ps = enumerate_circular(args.dim, limit=args.limit, seed=args.seed)
    shown = "all" if ps.m == total else f"sampled {ps.m} of"
    print(f"D={args.dim}: {total} circular permutation classes ({shown} listed)")
    for p in ps.perms:
        print(" ".join(str(i) for i in p))
    return 0


def cmd_bench(args) -> int:
    cfg = load_run_config(args.config) if args.config else {}
    matrix = json.load(open(args.matrix)) if args.matrix else {}
    for key in matrix:
        if key not in ("k", "rank", "components"):
            raise ConfigError(f"unknown bench matrix key: {key}")
    ks = [int(v) for v in matrix.get("k", [16])]
    ranks = [int(v) for v in matrix.get("rank", [4])]
    comps = [int(v) for v in matrix.get("components", [1])]
    dataset = _dataset_from(cfg, args)
    train_cfg = dict(cfg.get("train", {}))
    if args.seed is not None:
        train_cfg["seed"] = args.seed
    if "seed" not in train_cfg:
        raise ConfigError("bench requires a seed (--seed or train.seed)")
    train_cfg.setdefault("max_epochs", 10)
    rows = []
    for k, r, m in itertools.product(ks, ranks, comps):
        params = m * dataset.ndim * k * r * r
        try:
            config = TrainConfig(**train_cfg)
            mix = create_mixture(dataset.ndim, k, r, m, seed=config.seed)
            t0 = time.perf_counter()
            fit(mix, dataset, config)
            t_train = time.perf_counter() - t0
            nll = evaluate_nll(mix, dataset, "validation")
            t0 = time.perf_counter()
            mix.mixture_sample(args.sample_n, seed=config.seed)
            t_sample = time.perf_counter() - t0
            rows.append((k, r, m, nll, params, t_train, t_sample))
            print(
                f"k={k} rank={r} m={m}: nll={nll:.4f} params={params} "
                f"train={t_train:.1f}s sample={t_sample:.2f}s"
            )
        except Exception as e:  # noqa: BLE001 - sweep continues per spec
            print(f"k={k} rank={r} m={m} failed: {e}", file=sys.stderr)
    with open(args.out, "w") as fh:
        fh.write("k,rank,components,val_nll,params,train_seconds,sample_seconds\n")
        for row in rows:
            fh.write(
                f"{row[0]},{row[1]},{row[2]},{row[3]:.12g},{row[4]},"
                f"{row[5]:.6g},{row[6]:.6g}\n"
            )
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_gen_toy(args) -> int:
    raw = toy_samples(args.family, args.n, args.noise, args.seed)
    np.savetxt(args.out, raw, fmt="%.17g", delimiter=",")
    print(f"wrote {args.n} {args.family} samples to {args.out}")
    return 0


def cmd_export_json(args) -> int:
    export_json(args.checkpoint, args.out)
    print(f"wrote JSON view to {args.out}")
    return 0


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ringdensity",
        description="Tensor-ring B-spline density estimation toolkit",
    )
    parser.add_argument("--threads", type=int, help="cap worker threads (env TRD_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_dataset_flags(p):
        p.add_argument("--toy", choices=TOY_FAMILIES, help="toy family")
        p.add_argument("--csv", help="CSV dataset path")
        p.add_argument("--header", action="store_true", help="skip one CSV header line")
        p.add_argument("--n", type=int, help="toy sample count")
        p.add_argument("--noise", type=float, help="toy noise level")
        p.add_argument("--data-seed", dest="data_seed", type=int, help="dataset seed")

    p = sub.add_parser("fit", help="train a model and write a checkpoint")
    p.add_argument("--config", help="JSON run config")
    add_dataset_flags(p)
    p.add_argument("--k", type=int, help="basis functions per dimension")
    p.add_argument("--rank", type=int, help="ring rank")
    p.add_argument("--components", type=int, help="mixture components")
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--seed", type=int, help="training seed")
    p.add_argument("--optimizer", choices=("adaptive-moment", "plain-sgd"))
    p.add_argument("--grad-clip", dest="grad_clip", type=float)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--report", help="per-epoch CSV output path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sample", help="draw samples from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="report NLL (and optional KL) on a dataset")
    p.add_argument("checkpoint")
    p.add_argument("--config", help="JSON run config providing the dataset")
    add_dataset_flags(p)
    p.add_argument("--split", default="test")
    p.add_argument("--kl-ref", dest="kl_ref", help="reference sample CSV (D <= 3)")
    p.add_argument("--kl-samples", dest="kl_samples", type=int, default=20000)
    p.add_argument("--kl-bins", dest="kl_bins", type=int)
    p.add_argument("--seed", type=int, help="sampling seed for the KL block")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("marginal", help="grid CSV of marginal/conditional density")
    p.add_argument("checkpoint")
    p.add_argument("--fix", action="append", metavar="DIM=VALUE")
    p.add_argument("--marginalize", help="comma-separated dims to integrate out")
    p.add_argument("--resolution", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_marginal)

    p = sub.add_parser("perms", help="list canonical circular permutations")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_perms)

    p = sub.add_parser("bench", help="sweep (K, rank, M) and record a CSV")
    p.add_argument("--config", help="JSON run config (dataset + train)")
    p.add_argument("--matrix", help="JSON file with k/rank/components lists")
    add_dataset_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--sample-n", dest="sample_n", type=int, default=10000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-toy", help="write raw toy samples to CSV")
    p.add_argument("--family", choices=TOY_FAMILIES, required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--noise", type=float)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_toy)

    p = sub.add_parser("export-json", help="lossy JSON view of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_json)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.func(args)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        code = 2 if isinstance(e, ConfigError) else 1
    except (CheckpointError, OSError, FloatingPointError, ZeroDivisionError) as e:
        print(f"error: {e}", file=sys.stderr)
        code = 1
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
