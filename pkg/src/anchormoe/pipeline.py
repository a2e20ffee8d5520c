"""End-to-end two-phase training pipeline and multi-seed benchmarking.

One run: nested seeded split -> anchor fit with held-out stage selection
-> Phase-1 early-epoch selection on TR/VA -> Phase-2 refit on TV for the
selected epoch count -> affine mean calibration on CAL -> test metrics
(RMSE on calibrated original-unit means, NLL and CRPS in z-space).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import data as D
from . import gbdt as G
from . import metrics as MT
from . import model as M
from . import training as T

ABLATIONS = ("full", "no_anchor", "no_router", "no_cal")


@dataclass(frozen=True)
class PipelineConfig:
    moe: M.MoeConfig = field(default_factory=M.MoeConfig)
    train: T.TrainConfig = field(default_factory=T.TrainConfig)
    gbdt: G.GbdtConfig = field(default_factory=G.GbdtConfig)
    fractions: D.SplitFractions = field(default_factory=D.SplitFractions)
    subsample: int = 0  # 0 = use all rows; otherwise draw this many first


@dataclass
class RunResult:
    report: MT.RunReport
    plan: D.SplitPlan
    params: object
    calibration: object
    target_scaler: D.ZScaler
    column_scaler: D.ColumnScaler
    anchor: object  # GbdtModel or None
    trace: T.TrainTrace
    moe_config: M.MoeConfig


def _apply_ablation(cfg: PipelineConfig, ablation: str) -> PipelineConfig:
    if ablation not in ABLATIONS:
        raise ValueError(f"unknown ablation '{ablation}', expected one of {ABLATIONS}")
    if ablation == "no_anchor":
        return replace(cfg, moe=replace(cfg.moe, mean_mode="free"))
    if ablation == "no_router":
        return replace(cfg, moe=replace(cfg.moe, use_router=False))
    return cfg


def run_single(table: D.Table, seed: int, cfg: PipelineConfig, ablation: str = "full") -> RunResult:
    """Execute one seeded run of the full two-phase pipeline."""
    cfg = _apply_ablation(cfg, ablation)
    cfg.moe.validate()
    use_anchor = ablation != "no_anchor"

    if cfg.subsample and cfg.subsample < table.n:
        table = D.subsample(table, cfg.subsample, seed)

    plan = D.make_split_plan(table.n, seed, cfg.fractions)
    plan.validate(table.n)
    x, y = table.features, table.target
    folds = {
        name: (x[idx], y[idx])
        for name, idx in (
            ("tr", plan.tr_idx),
            ("va", plan.va_idx),
            ("tv", plan.tv_idx),
            ("cal", plan.cal_idx),
            ("test", plan.test_idx),
        )
    }

    # ---- anchor: stage selection on TR->VA, refit on TV ----
    if use_anchor:
        anchor_sub = G.fit_gbdt(folds["tr"][0], folds["tr"][1], cfg.gbdt)
        t_gbdt = G.select_stages(anchor_sub, folds["va"][0], folds["va"][1])
        refit_cfg = replace(cfg.gbdt, max_stages=t_gbdt)
        anchor = G.fit_gbdt(folds["tv"][0], folds["tv"][1], refit_cfg)
    else:
        anchor_sub = anchor = None
        t_gbdt = 0

    def anchor_z(model, xs, scaler):
        if model is None:
            return np.zeros(xs.shape[0])
        return scaler.apply(model.predict(xs, t_gbdt if model is anchor_sub else None))

    # ---- phase 1: TR statistics, early-epoch selection on VA ----
    tr_scaler = D.fit_zscaler(folds["tr"][1])
    z_tr = tr_scaler.apply(folds["tr"][1])
    z_va = tr_scaler.apply(folds["va"][1])
    a_tr = anchor_z(anchor_sub, folds["tr"][0], tr_scaler)
    a_va = anchor_z(anchor_sub, folds["va"][0], tr_scaler)
    if use_anchor:
        xt_tr = D.augment_with_anchor(folds["tr"][0], a_tr)
        xt_va = D.augment_with_anchor(folds["va"][0], a_va)
    else:
        xt_tr, xt_va = folds["tr"][0], folds["va"][0]
    col1 = D.fit_column_scaler(xt_tr)
    xb_tr, xb_va = col1.apply(xt_tr), col1.apply(xt_va)

    init_rng = np.random.default_rng([seed, 1])
    params = M.init_parameters(xb_tr.shape[1], cfg.moe, init_rng, x_init=xb_tr)
    train_cfg = replace(cfg.train, seed=seed)
    trace, best_params = T.train(
        params,
        xb_tr,
        a_tr,
        z_tr,
        cfg.moe,
        train_cfg,
        n_epochs=train_cfg.max_epochs,
        x_val=xb_va,
        anchor_val=a_va,
        y_val=z_va,
    )
    t_moe = trace.best_epoch

    # ---- phase 2: TV statistics, continue from the selected snapshot ----
    tv_scaler = D.fit_zscaler(folds["tv"][1])
    z_tv = tv_scaler.apply(folds["tv"][1])
    a_tv = anchor_z(anchor, folds["tv"][0], tv_scaler)
    a_cal = anchor_z(anchor, folds["cal"][0], tv_scaler)
    a_test = anchor_z(anchor, folds["test"][0], tv_scaler)
    if use_anchor:
        xt_tv = D.augment_with_anchor(folds["tv"][0], a_tv)
        xt_cal = D.augment_with_anchor(folds["cal"][0], a_cal)
        xt_test = D.augment_with_anchor(folds["test"][0], a_test)
    else:
        xt_tv, xt_cal, xt_test = folds["tv"][0], folds["cal"][0], folds["test"][0]
    col2 = D.fit_column_scaler(xt_tv)
    xb_tv, xb_cal, xb_test = col2.apply(xt_tv), col2.apply(xt_cal), col2.apply(xt_test)

    params = best_params
    T.train(params, xb_tv, a_tv, z_tv, cfg.moe, train_cfg, n_epochs=t_moe)

    # ---- calibration on CAL, metrics on TEST ----
    from .calibration import AffineCalibration, fit_calibration

    mix_cal = M.predict(params, xb_cal, a_cal, cfg.moe)
    mu_cal_orig = tv_scaler.invert(mix_cal.mean())
    if ablation == "no_cal":
        cal = AffineCalibration(1.0, 0.0)
    else:
        cal = fit_calibration(mu_cal_orig, folds["cal"][1])

    mix_test = M.predict(params, xb_test, a_test, cfg.moe)
    mu_test_orig = cal.apply(tv_scaler.invert(mix_test.mean()))
    z_test = tv_scaler.apply(folds["test"][1])

    report = MT.RunReport(
        seed=seed,
        rmse=MT.rmse(folds["test"][1], mu_test_orig),
        nll=MT.mean_nll(mix_test, z_test),
        crps=MT.mean_crps(mix_test, z_test),
        anchor_stages=t_gbdt,
        best_epoch=t_moe,
    )
    return RunResult(
        report=report,
        plan=plan,
        params=params,
        calibration=cal,
        target_scaler=tv_scaler,
        column_scaler=col2,
        anchor=anchor,
        trace=trace,
        moe_config=cfg.moe,
    )


def predict_on(result: RunResult, x: np.ndarray):
    """Predict with a finished run's artifacts on new raw feature rows.

    Returns (mixture in z-space, calibrated means in original units).
    """
    x = np.asarray(x, dtype=np.float64)
    if result.anchor is not None:
        a_z = result.target_scaler.apply(result.anchor.predict(x))
        xt = D.augment_with_anchor(x, a_z)
    else:
        a_z = np.zeros(x.shape[0])
        xt = x
    xb = result.column_scaler.apply(xt)
    mix = M.predict(result.params, xb, a_z, result.moe_config)
    mean_orig = result.calibration.apply(result.target_scaler.invert(mix.mean()))
    return mix, mean_orig


def _run_report(args):
    table, seed, cfg, ablation = args
    return run_single(table, seed, cfg, ablation).report


def run_benchmark(
    table: D.Table,
    seeds: list,
    cfg: PipelineConfig,
    ablation: str = "full",
    progress=None,
    n_workers: int = 1,
) -> tuple[list, MT.AggregateReport, list]:
    """Run the pipeline once per seed; aggregate mean +/- stderr.

    A failed run is recorded as (seed, message) and excluded from the
    aggregate; remaining runs continue. Returns (reports, aggregate,
    failures).
    """
    reports, failures = [], []
    if n_workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        jobs = [(table, seed, cfg, ablation) for seed in seeds]
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = {pool.submit(_run_report, job): job[1] for job in jobs}
            by_seed = {}
            for fut, seed in futures.items():
                try:
                    by_seed[seed] = fut.result()
                except Exception as exc:  # noqa: BLE001 - recorded, run continues
                    failures.append((seed, f"{type(exc).__name__}: {exc}"))
            for seed in seeds:
                if seed in by_seed:
                    reports.append(by_seed[seed])
                    if progress is not None:
                        progress(by_seed[seed])
    else:
        for seed in seeds:
            try:
                report = run_single(table, seed, cfg, ablation).report
            except Exception as exc:  # noqa: BLE001 - recorded, run continues
                failures.append((seed, f"{type(exc).__name__}: {exc}"))
                continue
            reports.append(report)
            if progress is not None:
                progress(report)
    if not reports:
        raise RuntimeError(f"all {len(seeds)} runs failed; first: {failures[0][1]}")
    return reports, MT.aggregate(reports), failures


def run_ablations(
    table: D.Table,
    seeds: list,
    cfg: PipelineConfig,
    arms=ABLATIONS,
    progress=None,
    n_workers: int = 1,
) -> dict:
    """Run every ablation arm over the same seeds (splits are seed-derived,
    so all arms see identical fold assignments)."""
    out = {}
    for arm in arms:
        reports, agg, failures = run_benchmark(
            table, seeds, cfg, ablation=arm, progress=progress, n_workers=n_workers
        )
        out[arm] = {"reports": reports, "aggregate": agg, "failures": failures}
    return out
