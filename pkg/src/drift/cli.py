"""Command-line interface.

Commands: train, evaluate, predict, simulate, gradcheck, probe-init.
Exit codes: 0 success, 2 configuration/usage error, 3 data error,
4 training divergence.  ``DRIFT_THREADS`` caps the fold worker pool.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import diffcore as dc, evaldiag, likelihood, training
from .config import AppConfig, ConfigError, parse_config
from .dataio import (DataError, Dataset, DatasetSchema, apply_transforms,
                     gen_example2, kfold, load_csv, oracle_logscore)
from .likelihood import CompatibilityError, Discrete, Exact, Interval
from .model import (DriftModel, ModelSpec, build_from_dataset, load_model,
                    model_from_dict, model_to_dict, save_model)
from .training import (INIT_SCHEMES, DivergenceError, TrainConfig, fit,
                       init_model, saturation_probe)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, CompatibilityError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 4


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="drift",
        description="Distributional regression with inverse conditional "
                    "flows: fit, score and inspect models.")
    sub = p.add_subparsers(required=True)

    t = sub.add_parser("train", help="fit a model from a config and a CSV")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=None,
                   help="override the training seed from the config")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate",
                       help="score a fitted model; --folds K refits "
                            "fold-wise for cross-validated scores")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--folds", type=int, default=1)
    e.add_argument("--out", default=None, help="CSV path (default stdout)")
    e.set_defaults(func=cmd_evaluate)

    pr = sub.add_parser("predict", help="prediction surfaces as CSV")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--what", required=True,
                    choices=["cdf", "density", "quantile", "partial"])
    pr.add_argument("--q", default="0.1,0.5,0.9",
                    help="comma-separated quantile levels")
    pr.add_argument("--term", default=None,
                    help="feature name of the term for --what partial")
    pr.add_argument("--grid-points", type=int, default=None)
    pr.add_argument("--out", default=None)
    pr.set_defaults(func=cmd_predict)

    s = sub.add_parser("simulate", help="draw from a synthetic generator")
    s.add_argument("--generator", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("gradcheck",
                       help="compare backward gradients of the configured "
                            "model against central finite differences")
    g.add_argument("--config", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)

    pi = sub.add_parser("probe-init",
                        help="per-layer activation summaries of a freshly "
                             "initialized positive-weight tanh network")
    pi.add_argument("--scheme", required=True)
    pi.add_argument("--widths", default="100,100,20",
                    help="hidden widths, comma-separated")
    pi.add_argument("--n", type=int, default=10_000)
    pi.add_argument("--seed", type=int, default=0)
    pi.set_defaults(func=cmd_probe_init)
    return p


def _load_dataset(cfg: AppConfig, path) -> Dataset:
    dataset = load_csv(path, cfg.data.schema)
    if cfg.data.transforms:
        dataset = apply_transforms(dataset, cfg.data.transforms)
    return dataset


def cmd_train(args) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg.training = replace(cfg.training, seed=args.seed)
    dataset = _load_dataset(cfg, args.data)
    if dataset.n == 0:
        raise DataError(f"no rows in {args.data}")
    model = build_from_dataset(cfg.model, dataset)
    model.train_config = cfg.training
    likelihood.check_compatible(model, dataset)
    report = fit(model, dataset, cfg.training)
    save_model(model, args.out)
    with open(f"{args.out}.report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(include_wall=True), fh, indent=1)
        fh.write("\n")
    best = report.val_nll[report.best_epoch - 1] if report.val_nll \
        else report.train_nll[-1]
    print(f"trained {len(report.train_nll)} epochs "
          f"({report.stopping_reason}); nll {best:.6f}; wrote {args.out}")
    return 0


def _fit_fold(payload) -> tuple[int, dict]:
    (fold, spec_d, cfg_d, schema_d, x, outcomes, train_idx, test_idx,
     seed, quartiles) = payload
    dataset = Dataset(DatasetSchema.from_dict(schema_d),
                      np.asarray(x, dtype=float), list(outcomes))
    spec = ModelSpec.from_dict(spec_d)
    cfg = replace(TrainConfig.from_dict(cfg_d), seed=seed)
    train = dataset.subset(train_idx)
    test = dataset.subset(test_idx)
    model = build_from_dataset(spec, train)
    fit(model, train, cfg)
    row = {"fold": fold, "n_test": test.n,
           "log_score": evaldiag.log_score(model, test)}
    if quartiles is not None:
        res = evaldiag.brier_ipcw(model, test, quartiles)
        for q, s in zip(("q25", "q50", "q75"), res.scores):
            row[f"brier_{q}"] = float(s)
        row["ibs"] = res.ibs()
    return fold, row


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    dataset = load_csv(args.data, model.schema)
    likelihood.check_compatible(model, dataset)
    survival = model.schema.outcome.kind == "survival"
    quartiles = evaldiag.follow_up_quartiles(dataset) if survival else None

    rows: list[dict] = []
    if args.folds <= 1:
        row = {"fold": 0, "n_test": dataset.n,
               "log_score": evaldiag.log_score(model, dataset)}
        if survival:
            res = evaldiag.brier_ipcw(model, dataset, quartiles)
            for q, s in zip(("q25", "q50", "q75"), res.scores):
                row[f"brier_{q}"] = float(s)
            row["ibs"] = res.ibs()
        rows.append(row)
    else:
        if model.train_config is None:
            raise ConfigError("model file has no training config; "
                              "cross-validated evaluation needs one")
        cfg = model.train_config
        folds = kfold(dataset, args.folds, cfg.seed)
        seeds = np.random.SeedSequence(cfg.seed).generate_state(args.folds)
        payloads = [
            (i, model.spec.to_dict(), cfg.to_dict(),
             model.schema.to_dict(), dataset.x.tolist(), dataset.outcomes,
             tr.tolist(), te.tolist(), int(seeds[i]),
             None if quartiles is None else list(quartiles))
            for i, (tr, te) in enumerate(folds)]
        results = dict(_run_pool(_fit_fold, payloads))
        rows = [results[i] for i in range(args.folds)]

    _write_score_csv(rows, args.out)
    return 0


def _run_pool(fn, payloads):
    workers = min(len(payloads), _worker_cap())
    if workers <= 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, payloads))


def _worker_cap() -> int:
    env = os.environ.get("DRIFT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"DRIFT_THREADS={env!r} is not an integer") \
                from None
    return os.cpu_count() or 1


def _write_score_csv(rows: list[dict], out_path) -> None:
    cols = list(rows[0].keys())
    scores = [r["log_score"] for r in rows]
    report = evaldiag.ScoreReport.from_folds(scores)
    fh = open(out_path, "w", encoding="utf-8", newline="") if out_path \
        else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])
        summary = {c: "" for c in cols}
        summary["fold"] = "mean"
        summary["log_score"] = _fmt(report.mean)
        w.writerow([summary[c] for c in cols])
        summary["fold"] = "std"
        summary["log_score"] = "" if math.isnan(report.std) \
            else _fmt(report.std)
        w.writerow([summary[c] for c in cols])
    finally:
        if out_path:
            fh.close()


def _fmt(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def cmd_predict(args) -> int:
    model = load_model(args.model)
    dataset = load_csv(args.data, model.schema)
    fh = open(args.out, "w", encoding="utf-8", newline="") if args.out \
        else sys.stdout
    try:
        w = csv.writer(fh)
        if args.what in ("cdf", "density"):
            points = args.grid_points or evaldiag.DEFAULT_GRID_POINTS
            grid = evaldiag.default_grid(model, points)
            w.writerow(["row", "y", args.what])
            fn = evaldiag.predict_cdf if args.what == "cdf" \
                else evaldiag.predict_density
            for i in range(dataset.n):
                _, vals = fn(model, dataset.x[i], grid)
                for y, v in zip(grid, vals):
                    w.writerow([i, _fmt(float(y)), _fmt(float(v))])
        elif args.what == "quantile":
            qs = _parse_qs(args.q)
            w.writerow(["row", "q", "y"])
            for i in range(dataset.n):
                ys = evaldiag.predict_quantile(model, dataset.x[i], qs)
                for q, y in zip(qs, ys):
                    w.writerow([i, _fmt(q), _fmt(float(y))])
        else:
            _write_partial(w, model, dataset, args)
    finally:
        if args.out:
            fh.close()
    return 0


def _parse_qs(text: str) -> list[float]:
    try:
        qs = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse quantile list {text!r}") from None
    if not qs or any(not 0.0 < q < 1.0 for q in qs):
        raise ConfigError("quantile levels must lie in (0, 1)")
    return qs


def _write_partial(w, model: DriftModel, dataset, args) -> None:
    from .predictors import partial_effect

    if not args.term:
        raise ConfigError("--what partial needs --term <feature>")
    location = model.cif.location
    candidates = [(i, t) for i, t in enumerate(location.terms)
                  if t.kind in ("linear", "nbf")]
    matches = [(i, t) for i, t in candidates
               if model.schema.features[t.features[0]] == args.term]
    if not matches:
        raise ConfigError(
            f"no univariate location term on feature {args.term!r}; "
            f"have {[model.schema.features[t.features[0]] for _, t in candidates]}")
    index, term = matches[0]
    j = term.features[0]
    points = args.grid_points or 100
    raw_grid = np.linspace(dataset.x[:, j].min(), dataset.x[:, j].max(),
                           points)
    std_grid = (raw_grid - model.standardizer.mean[j]) \
        / model.standardizer.std[j]
    params = [float(v) for v in model.params]
    effects = partial_effect(location, params, index, std_grid)
    w.writerow([args.term, "effect"])
    for g, e in zip(raw_grid, effects):
        w.writerow([_fmt(float(g)), _fmt(float(e))])


def cmd_simulate(args) -> int:
    if args.generator != "example2":
        raise ConfigError(f"unknown generator {args.generator!r}")
    if args.n < 1:
        raise ConfigError("simulate needs --n >= 1")
    dataset = gen_example2(args.n, args.seed)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        for row, o in zip(dataset.x, dataset.outcomes):
            w.writerow([repr(float(row[0])), repr(o.y)])
    sidecar = {"generator": "example2", "n": args.n, "seed": args.seed,
               "oracle_logscore": oracle_logscore(dataset)}
    with open(f"{args.out}.oracle.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")
    print(f"wrote {args.out} (oracle log-score "
          f"{sidecar['oracle_logscore']:.6f})")
    return 0


def _synthetic_dataset(schema: DatasetSchema, levels: int, n: int,
                       seed: int) -> Dataset:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, len(schema.features)))
    kind = schema.outcome.kind
    outcomes = []
    for i in range(n):
        if kind == "ordinal":
            outcomes.append(Discrete(int(rng.integers(1, levels + 1))))
        elif kind == "survival":
            t = float(rng.exponential(1.0) + 0.05)
            outcomes.append(Exact(t) if rng.random() > 0.3
                            else Interval(t, math.inf))
        elif kind == "interval":
            a, b = sorted(rng.standard_normal(2))
            outcomes.append(Interval(float(a), float(b) + 0.1))
        else:
            outcomes.append(Exact(float(rng.standard_normal())))
    return Dataset(schema, x, outcomes)


def cmd_gradcheck(args) -> int:
    cfg = parse_config(args.config)
    levels = cfg.model.flow.levels or cfg.data.schema.outcome.levels
    dataset = _synthetic_dataset(cfg.data.schema, levels, n=6, seed=args.seed)
    model = build_from_dataset(cfg.model, dataset)
    init_model(model, cfg.training.init, args.seed)

    tape = dc.Tape()
    bound = model.bind(tape)
    loss = likelihood.nll(model, dataset, bound=bound)
    grads = np.asarray(dc.gradient(loss, bound.params))

    step = 1e-6
    worst = 0.0
    for i in range(model.n_params):
        saved = model.params[i]
        model.params[i] = saved + step
        up = dc.value_of(likelihood.nll(model, dataset))
        model.params[i] = saved - step
        down = dc.value_of(likelihood.nll(model, dataset))
        model.params[i] = saved
        fd = (up - down) / (2.0 * step)
        denom = max(abs(grads[i]), abs(fd))
        err = abs(grads[i] - fd) if denom < 1e-8 \
            else abs(grads[i] - fd) / denom
        worst = max(worst, err)
    print(f"max relative gradient error: {worst:.3e} "
          f"({model.n_params} parameters)")
    return 0 if worst <= 1e-4 else 1


def cmd_probe_init(args) -> int:
    if args.scheme not in INIT_SCHEMES:
        raise ConfigError(f"unknown init scheme {args.scheme!r}; "
                          f"choose one of {INIT_SCHEMES}")
    try:
        widths = tuple(int(w) for w in args.widths.split(","))
    except ValueError:
        raise ConfigError(f"cannot parse --widths {args.widths!r}") from None
    stats = saturation_probe(widths, args.scheme, args.n, args.seed)
    print(f"{'layer':>5} {'width':>5} {'q01':>9} {'q50':>9} {'q99':>9} "
          f"{'saturated':>10}")
    for s in stats:
        print(f"{s.layer:>5} {s.width:>5} {s.quantiles['q01']:>9.4f} "
              f"{s.quantiles['q50']:>9.4f} {s.quantiles['q99']:>9.4f} "
              f"{s.saturated_fraction:>10.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
