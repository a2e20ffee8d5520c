"""Command-line interface.

Subcommands: train, eval, benchmark, ablate, toy-demo, rates. Config comes
from an optional JSON file plus flag overrides; every run directory gets
the fully-resolved config and a content hash of the input data.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import data as D
from . import metrics as MT
from . import model as M
from . import pipeline as P
from . import theory
from .gbdt import GbdtConfig, GbdtModel
from .nncore import ParamStore
from .training import DivergenceError, TrainConfig


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _hash_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_config_file(path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ImportError as exc:
            raise UsageError("TOML config requires Python >= 3.11; use JSON") from exc
        return tomllib.loads(text)
    return json.loads(text)


def _build_pipeline_config(file_cfg: dict, args) -> P.PipelineConfig:
    moe = M.MoeConfig(**file_cfg.get("moe", {}))
    train = TrainConfig(**file_cfg.get("train", {}))
    gbdt = GbdtConfig(**file_cfg.get("gbdt", {}))
    fractions = D.SplitFractions(**file_cfg.get("fractions", {}))
    if getattr(args, "epochs", None):
        train = replace(train, max_epochs=args.epochs)
    if getattr(args, "learning_rate", None):
        train = replace(train, learning_rate=args.learning_rate)
    subsample = getattr(args, "subsample", None) or file_cfg.get("dataset", {}).get("subsample", 0)
    return P.PipelineConfig(moe=moe, train=train, gbdt=gbdt, fractions=fractions, subsample=subsample)


def _load_table(file_cfg: dict, args) -> tuple[D.Table, str, str]:
    ds = dict(file_cfg.get("dataset", {}))
    path = getattr(args, "data", None) or ds.get("path")
    target = getattr(args, "target", None) or ds.get("target")
    if not path or target is None:
        raise UsageError("dataset path and target column required (--data/--target or config)")
    schema = {}
    if ds.get("one_hot"):
        schema["one_hot"] = ds["one_hot"]
    table = D.load_csv(path, target, schema or None)
    return table, str(path), _hash_file(path)


def _resolve_outdir(args, tag: str) -> Path:
    root = getattr(args, "output", None) or os.environ.get("ANCHORMOE_OUT", "runs")
    stamp = time.strftime("%Y%m%d-%H%M%S")
    out = Path(root) / f"{tag}_{stamp}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(outdir: Path, cfg: P.PipelineConfig, extra: dict) -> None:
    payload = {
        "moe": asdict(cfg.moe),
        "train": asdict(cfg.train),
        "gbdt": asdict(cfg.gbdt),
        "fractions": asdict(cfg.fractions),
        "subsample": cfg.subsample,
    }
    payload.update(extra)
    (outdir / "config.json").write_text(json.dumps(payload, indent=2) + "\n")


def _print_report(report: MT.RunReport) -> None:
    print(
        f"seed={report.seed} rmse={report.rmse:.4f} nll={report.nll:.4f} "
        f"crps={report.crps:.4f} stages={report.anchor_stages} epoch={report.best_epoch}"
    )


def _ablation_from_flags(args) -> str:
    flags = [
        name
        for name, on in (
            ("no_anchor", getattr(args, "no_anchor", False)),
            ("no_router", getattr(args, "no_router", False)),
            ("no_cal", getattr(args, "no_cal", False)),
        )
        if on
    ]
    if len(flags) > 1:
        raise UsageError("at most one ablation flag per run")
    return flags[0] if flags else "full"


# ---------------------------------------------------------------- commands


def cmd_train(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    cfg = _build_pipeline_config(file_cfg, args)
    table, path, data_hash = _load_table(file_cfg, args)
    ablation = _ablation_from_flags(args)
    outdir = _resolve_outdir(args, f"train_{Path(path).stem}")
    _echo_config(outdir, cfg, {"dataset": {"path": path, "sha256": data_hash}, "seed": args.seed, "ablation": ablation})

    result = P.run_single(table, args.seed, cfg, ablation)
    _print_report(result.report)

    (outdir / "params.json").write_text(result.params.to_json())
    (outdir / "model.json").write_text(
        json.dumps(
            {
                "moe": asdict(result.moe_config),
                "calibration": {"a": result.calibration.a, "b": result.calibration.b},
                "target_scaler": {"mu": result.target_scaler.mu, "sigma": result.target_scaler.sigma},
                "column_scaler": {
                    "means": result.column_scaler.means.tolist(),
                    "stds": result.column_scaler.stds.tolist(),
                },
                "has_anchor": result.anchor is not None,
            },
            indent=2,
        )
        + "\n"
    )
    if result.anchor is not None:
        (outdir / "anchor.json").write_text(result.anchor.to_json())
    (outdir / "report.json").write_text(json.dumps(asdict(result.report), indent=2) + "\n")
    (outdir / "split_plan.json").write_text(result.plan.to_json())
    print(f"artifacts written to {outdir}")
    return 0


def _load_model_dir(model_dir: Path):
    from .calibration import AffineCalibration

    meta = json.loads((model_dir / "model.json").read_text())
    params = ParamStore.from_json((model_dir / "params.json").read_text())
    anchor = None
    if meta["has_anchor"]:
        anchor = GbdtModel.from_json((model_dir / "anchor.json").read_text())
    result = P.RunResult(
        report=None,
        plan=None,
        params=params,
        calibration=AffineCalibration(**meta["calibration"]),
        target_scaler=D.ZScaler(**meta["target_scaler"]),
        column_scaler=D.ColumnScaler(
            np.array(meta["column_scaler"]["means"]), np.array(meta["column_scaler"]["stds"])
        ),
        anchor=anchor,
        trace=None,
        moe_config=M.MoeConfig(**meta["moe"]),
    )
    return result


def cmd_eval(args) -> int:
    model_dir = Path(args.model)
    if not (model_dir / "model.json").exists():
        raise UsageError(f"no trained model at {model_dir}")
    result = _load_model_dir(model_dir)
    table, path, _ = _load_table({}, args)
    mix, mean_orig = P.predict_on(result, table.features)
    z = result.target_scaler.apply(table.target)
    print(
        f"n={table.n} rmse={MT.rmse(table.target, mean_orig):.6f} "
        f"nll={MT.mean_nll(mix, z):.6f} crps={MT.mean_crps(mix, z):.6f}"
    )
    return 0


def _write_benchmark_outputs(outdir: Path, reports, agg, failures) -> None:
    (outdir / "runs.csv").write_text(MT.runs_to_csv(reports))
    (outdir / "aggregate.csv").write_text(MT.aggregate_to_csv(agg))
    (outdir / "aggregate.json").write_text(json.dumps(asdict(agg), indent=2) + "\n")
    if failures:
        lines = [f"seed {seed}: {msg}" for seed, msg in failures]
        (outdir / "failures.txt").write_text("\n".join(lines) + "\n")
        print(f"warning: {len(failures)} run(s) failed and were excluded", file=sys.stderr)


def cmd_benchmark(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    cfg = _build_pipeline_config(file_cfg, args)
    table, path, data_hash = _load_table(file_cfg, args)
    ablation = _ablation_from_flags(args)
    seeds = [args.seed_base + i for i in range(args.n_runs)]
    outdir = _resolve_outdir(args, f"benchmark_{Path(path).stem}")
    _echo_config(
        outdir,
        cfg,
        {
            "dataset": {"path": path, "sha256": data_hash},
            "n_runs": args.n_runs,
            "seed_base": args.seed_base,
            "ablation": ablation,
        },
    )
    reports, agg, failures = P.run_benchmark(
        table, seeds, cfg, ablation=ablation, progress=_print_report, n_workers=args.workers
    )
    _write_benchmark_outputs(outdir, reports, agg, failures)
    print(
        f"aggregate over {agg.n_runs} runs: rmse={agg.rmse_mean:.4f}±{agg.rmse_stderr:.4f} "
        f"nll={agg.nll_mean:.4f}±{agg.nll_stderr:.4f}"
    )
    print(f"artifacts written to {outdir}")
    return 0


def cmd_ablate(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    cfg = _build_pipeline_config(file_cfg, args)
    table, path, data_hash = _load_table(file_cfg, args)
    seeds = [args.seed_base + i for i in range(args.n_runs)]
    outdir = _resolve_outdir(args, f"ablate_{Path(path).stem}")
    _echo_config(
        outdir,
        cfg,
        {
            "dataset": {"path": path, "sha256": data_hash},
            "n_runs": args.n_runs,
            "seed_base": args.seed_base,
            "arms": list(P.ABLATIONS),
        },
    )
    results = P.run_ablations(table, seeds, cfg, n_workers=args.workers)
    lines = ["arm,rmse_mean,rmse_stderr,nll_mean,nll_stderr,crps_mean,crps_stderr"]
    for arm, res in results.items():
        a = res["aggregate"]
        arm_dir = outdir / arm
        arm_dir.mkdir(exist_ok=True)
        _write_benchmark_outputs(arm_dir, res["reports"], a, res["failures"])
        lines.append(
            f"{arm},{a.rmse_mean:.12g},{a.rmse_stderr:.12g},{a.nll_mean:.12g},"
            f"{a.nll_stderr:.12g},{a.crps_mean:.12g},{a.crps_stderr:.12g}"
        )
        print(f"{arm}: rmse={a.rmse_mean:.4f}±{a.rmse_stderr:.4f} nll={a.nll_mean:.4f}±{a.nll_stderr:.4f}")
    (outdir / "ablation.csv").write_text("\n".join(lines) + "\n")
    print(f"artifacts written to {outdir}")
    return 0


def make_toy_table(n: int = 500, seed: int = 0) -> D.Table:
    """Heteroscedastic 1-D synthetic data: y = sin(x)*x/2 + eps(x)."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-4.0, 4.0, size=n)
    sigma = 0.1 + 0.2 * np.abs(x) / 4.0
    y = np.sin(x) * x / 2.0 + sigma * rng.standard_normal(n)
    return D.Table(x[:, None], y, ["x"])


def cmd_toy_demo(args) -> int:
    cfg = P.PipelineConfig(train=TrainConfig(max_epochs=args.epochs))
    outdir = _resolve_outdir(args, "toy")
    table = make_toy_table(n=args.n_points, seed=args.seed)
    _echo_config(outdir, cfg, {"dataset": "synthetic-1d", "seed": args.seed, "n_points": args.n_points})

    arms = ("full", "no_anchor") if args.dynamics else ("full",)
    for arm in arms:
        result = P.run_single(table, args.seed, cfg, arm)
        grid = np.linspace(-4.0, 4.0, 201)[:, None]
        mix, mean = P.predict_on(result, grid)
        q_lo = result.target_scaler.invert(mix.quantile(0.025))
        q_hi = result.target_scaler.invert(mix.quantile(0.975))
        lines = ["x,mean,q2.5,q97.5"]
        for i in range(grid.shape[0]):
            lines.append(f"{grid[i, 0]:.6f},{mean[i]:.6f},{q_lo[i]:.6f},{q_hi[i]:.6f}")
        name = "curve.csv" if arm == "full" else f"curve_{arm}.csv"
        (outdir / name).write_text("\n".join(lines) + "\n")
        if arm == "full":
            pts = ["x,y"] + [f"{table.features[i, 0]:.6f},{table.target[i]:.6f}" for i in range(table.n)]
            (outdir / "train_points.csv").write_text("\n".join(pts) + "\n")
            _print_report(result.report)
    print(f"artifacts written to {outdir}")
    return 0


def cmd_rates(args) -> int:
    if args.alpha <= 0:
        raise UsageError("--alpha must be positive")
    if args.alpha > 1:
        raise UsageError("--alpha above 1 is out of scope for the hat-weight family")
    outdir = _resolve_outdir(args, "rates")
    m_list = [2, 3, 5, 8, 12, 18, 27, 40] if args.d == 1 else [2, 3, 5, 8, 12, 18]
    rows = ["experiment,d,alpha,k,sq_error"]

    def emit(tag, d, res):
        for k, e in zip(res["k_list"], res["errors"]):
            rows.append(f"{tag},{d},{args.alpha},{k:.0f},{e:.12g}")
        print(f"{tag}: slope={res['slope']:.4f}")
        return res["slope"]

    slopes = {}
    if args.sparse:
        if args.s is None or args.s >= args.d:
            raise UsageError("--sparse requires --s < --d")
        sub = theory.sparse_rate_experiment(args.d, args.s, args.alpha, m_list, seed=args.seed)
        slopes["subspace"] = emit("sparse_subspace", args.d, sub)
        control_m = [2, 3, 4] if args.d >= 4 else m_list
        full = theory.sparse_rate_experiment(
            args.d, args.s, args.alpha, control_m, seed=args.seed, use_full_lattice=True
        )
        slopes["ambient"] = emit("sparse_ambient", args.d, full)
    elif args.manifold:
        res = theory.manifold_rate_experiment(1, args.alpha, m_list, seed=args.seed)
        slopes["manifold"] = emit("manifold_helix", args.d, res)
    elif args.balance:
        res = theory.balance_experiment(args.d, args.alpha, args.n_list, seed=args.seed)
        print(f"balance: exponent={res['exponent']:.4f}")
        rows = ["n,log_k_star"] + [
            f"{n},{lk:.12g}" for n, lk in zip(res["n_list"], res["log_k_star"])
        ]
        slopes["exponent"] = res["exponent"]
    else:
        res = theory.rate_experiment(args.d, args.alpha, m_list, seed=args.seed)
        slopes["rate"] = emit("rate", args.d, res)
    (outdir / "rates.csv").write_text("\n".join(rows) + "\n")
    (outdir / "slopes.json").write_text(json.dumps(slopes, indent=2) + "\n")
    print(f"artifacts written to {outdir}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> _Parser:
    parser = _Parser(prog="anchormoe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, runs=False):
        p.add_argument("--config", help="JSON config file (flags override)")
        p.add_argument("--data", help="CSV dataset path")
        p.add_argument("--target", help="target column name or index")
        p.add_argument("--output", help="output root directory")
        p.add_argument("--epochs", type=int, help="override max training epochs")
        p.add_argument("--learning-rate", type=float, dest="learning_rate")
        p.add_argument("--subsample", type=int, help="subsample this many rows before splitting")
        if runs:
            p.add_argument("--n-runs", type=int, default=20, dest="n_runs")
            p.add_argument("--seed-base", type=int, default=0, dest="seed_base")
            p.add_argument("--workers", type=int, default=max(1, (os.cpu_count() or 1)))

    p_train = sub.add_parser("train", help="single seeded run; saves model artifacts")
    common(p_train)
    p_train.add_argument("--seed", type=int, default=0)
    for flag in ("--no-anchor", "--no-router", "--no-cal"):
        p_train.add_argument(flag, action="store_true", dest=flag[2:].replace("-", "_"))
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate saved artifacts on a CSV")
    p_eval.add_argument("--model", required=True, help="directory written by `train`")
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--target", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_bench = sub.add_parser("benchmark", help="multi-seed benchmark with aggregation")
    common(p_bench, runs=True)
    for flag in ("--no-anchor", "--no-router", "--no-cal"):
        p_bench.add_argument(flag, action="store_true", dest=flag[2:].replace("-", "_"))
    p_bench.set_defaults(func=cmd_benchmark)

    p_abl = sub.add_parser("ablate", help="benchmark all ablation arms on shared splits")
    common(p_abl, runs=True)
    p_abl.set_defaults(func=cmd_ablate)

    p_toy = sub.add_parser("toy-demo", help="1-D heteroscedastic demo; emits curve CSVs")
    p_toy.add_argument("--seed", type=int, default=0)
    p_toy.add_argument("--n-points", type=int, default=500, dest="n_points")
    p_toy.add_argument("--epochs", type=int, default=400)
    p_toy.add_argument("--output")
    p_toy.add_argument("--dynamics", action="store_true", help="also dump a no-anchor curve")
    p_toy.set_defaults(func=cmd_toy_demo)

    p_rates = sub.add_parser("rates", help="approximation-rate experiments; emits slope CSVs")
    p_rates.add_argument("--d", type=int, default=1)
    p_rates.add_argument("--alpha", type=float, default=1.0)
    p_rates.add_argument("--s", type=int, help="active coordinates for --sparse")
    p_rates.add_argument("--sparse", action="store_true")
    p_rates.add_argument("--manifold", action="store_true")
    p_rates.add_argument("--balance", action="store_true")
    p_rates.add_argument("--n-list", type=int, nargs="+", default=[200, 500, 1200, 3000, 8000], dest="n_list")
    p_rates.add_argument("--seed", type=int, default=0)
    p_rates.add_argument("--output")
    p_rates.set_defaults(func=cmd_rates)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except D.DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, FloatingPointError) as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
