"""Replicated simulation experiments: configuration, per-replication
workers, aggregation, and report files.

A run draws ``replications`` seeded datasets from one design, applies the
configured estimators to each, scores them on a fresh test set, and
aggregates median test error (with a bootstrap standard error), mean
correct/incorrect selection counts, and the exact-recovery proportion.

Replications execute independently (optionally across processes); every
random stream is derived from ``(master_seed, replication index)`` so the
outputs are byte-identical for any worker count.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import fit_ols, fit_ridge_gcv
from .em import VARIANTS, fit_em
from .errors import AdaRidgeError
from .evidence import (
    DEFAULT_ETA_GRID,
    DEFAULT_K_SWEEP,
    EVIDENCE_MU,
    box_log_volume,
    select_eta,
)
from .metrics import (
    ReplicationResult,
    median_and_bootstrap_se,
    path_contains_truth,
    support_metrics,
    test_mse,
)
from .model import FitOptions, Hyper, destandardize_beta, standardize
from .simulate import DgpSpec, draw_dataset, draw_test_set
from .solver import fit_joint_mode

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "ReportRow",
    "parse_config",
    "run_experiment",
    "ExperimentFailure",
]

ESTIMATORS = ("aris-eb", "aris-eta0", "ols", "ridge-gcv", "em", "aris-path")
EVIDENCE_METHODS = ("laplace", "mc", "eta0-only")

JOBS_ENV_VAR = "ADARIDGE_JOBS"


class ExperimentFailure(AdaRidgeError):
    """A replication failed and failures were not allowed."""


@dataclass(frozen=True)
class ExperimentConfig:
    model_id: int
    n: int
    sigma: float
    replications: int
    test_size: int = 10_000
    eta_grid: tuple[float, ...] = DEFAULT_ETA_GRID
    evidence_method: str = "laplace"
    k_sweep: tuple[float, ...] = DEFAULT_K_SWEEP
    mc_draws: int = 1000
    master_seed: int = 0
    estimators: tuple[str, ...] = ("aris-eb", "aris-eta0", "ols", "ridge-gcv")
    em_eta: float = -1.0
    em_variant: str = "independent-prior"
    n_boot: int = 500

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.test_size < 1:
            raise ValueError("test_size must be >= 1")
        if self.evidence_method not in EVIDENCE_METHODS:
            raise ValueError(f"evidence_method must be one of {EVIDENCE_METHODS}")
        if not self.estimators:
            raise ValueError("estimators must be non-empty")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}")
        if "aris-eb" in self.estimators and self.evidence_method == "eta0-only":
            raise ValueError("aris-eb needs evidence_method 'laplace' or 'mc'")
        if self.em_variant not in VARIANTS:
            raise ValueError(f"em_variant must be one of {VARIANTS}")
        if not self.eta_grid:
            raise ValueError("eta_grid must be non-empty")
        if any(g <= -1 for g in self.eta_grid):
            raise ValueError("eta_grid entries must exceed -1")
        object.__setattr__(self, "eta_grid", tuple(float(g) for g in self.eta_grid))
        object.__setattr__(self, "k_sweep", tuple(float(k) for k in self.k_sweep))
        object.__setattr__(self, "estimators", tuple(self.estimators))


_INT_KEYS = {"model_id", "n", "replications", "test_size", "mc_draws",
             "master_seed", "n_boot"}
_FLOAT_KEYS = {"sigma", "em_eta"}
_LIST_KEYS = {"eta_grid", "k_sweep", "estimators"}
_STR_KEYS = {"evidence_method", "em_variant"}


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat ``key = value`` experiment-configuration grammar.

    One assignment per line; ``#`` starts a comment; list values are
    comma-separated.  Unknown keys are rejected.
    """

    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key in _INT_KEYS:
            values[key] = int(val)
        elif key in _FLOAT_KEYS:
            values[key] = float(val)
        elif key in _STR_KEYS:
            values[key] = val
        elif key in _LIST_KEYS:
            items = [s.strip() for s in val.split(",") if s.strip()]
            values[key] = tuple(items) if key == "estimators" else tuple(
                float(s) for s in items)
        else:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
    missing = {"model_id", "n", "sigma", "replications"} - values.keys()
    if missing:
        raise ValueError(f"config missing required keys: {sorted(missing)}")
    return ExperimentConfig(**values)


@dataclass(frozen=True)
class ReportRow:
    estimator: str
    median_mse: float | None
    boot_se: float | None
    mean_c: float | None
    mean_i: float | None
    cm: float


@dataclass(frozen=True)
class ExperimentReport:
    rows: tuple[ReportRow, ...]
    per_replication: tuple[dict, ...]
    provenance: dict = field(repr=False, default_factory=dict)


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


def _result_record(rep: int, name: str, res: ReplicationResult | None,
                   detail: str = "") -> dict:
    return {
        "replication": rep,
        "estimator": name,
        "mse": None if res is None else res.mse,
        "c_count": None if res is None else res.c_count,
        "i_count": None if res is None else res.i_count,
        "correct_model": None if res is None else res.correct_model,
        "detail": detail,
    }


def run_replication(config: ExperimentConfig, rep: int) -> list[dict]:
    """Fit every configured estimator on replication ``rep`` and score it.

    Returns one record per report row (the Monte-Carlo sweep produces one
    row per box width plus a best-by-evidence row).
    """

    spec = DgpSpec(config.model_id, config.n, config.sigma,
                   seed=_derive_seed(config.master_seed, rep))
    raw_train, truth = draw_dataset(spec)
    test = draw_test_set(spec, truth, config.test_size)
    data, std = standardize(raw_train.x, raw_train.y)
    support = truth.support_true
    opts = FitOptions()

    def score(beta_std, active) -> ReplicationResult:
        beta_raw = destandardize_beta(beta_std, std)
        mse = test_mse(beta_raw, std.y_mean, test)
        c, i, cm = support_metrics(active, support)
        return ReplicationResult(mse=mse, c_count=c, i_count=i, correct_model=cm)

    records: list[dict] = []
    all_true = np.ones(data.p, dtype=bool)
    grid_fits = None

    for name in config.estimators:
        if name == "ols":
            beta = fit_ols(data)
            records.append(_result_record(rep, "ols", score(beta, all_true)))
        elif name == "ridge-gcv":
            rf = fit_ridge_gcv(data)
            records.append(_result_record(
                rep, "ridge-gcv", score(rf.beta, all_true),
                detail=f"lambda={rf.lam:g}"))
        elif name == "aris-eta0":
            fit = fit_joint_mode(data, Hyper(0.0), opts)
            records.append(_result_record(
                rep, "aris-eta0", score(fit.state.beta, fit.state.active)))
        elif name == "em":
            emf = fit_em(data, Hyper(config.em_eta), opts, config.em_variant)
            active = emf.active if emf.active is not None else emf.beta != 0
            records.append(_result_record(
                rep, "em", score(emf.beta, active),
                detail=f"eta={config.em_eta:g};{config.em_variant}"))
        elif name == "aris-eb":
            if config.evidence_method == "laplace":
                sel = select_eta(data, config.eta_grid, "laplace", opts)
                grid_fits = sel.fits
                records.append(_result_record(
                    rep, "aris-eb",
                    score(sel.refit.state.beta, sel.refit.state.active),
                    detail=f"eta={sel.best_eta:g}"))
            else:
                best = None
                for kk in config.k_sweep:
                    sel = select_eta(
                        data, config.eta_grid, "mc", opts, k=kk,
                        draws=config.mc_draws,
                        seed=_derive_seed(config.master_seed, rep, 2),
                    )
                    res = score(sel.refit.state.beta, sel.refit.state.active)
                    records.append(_result_record(
                        rep, f"aris-eb-k{kk:g}", res,
                        detail=f"eta={sel.best_eta:g}"))
                    idx = sel.grid.index(sel.best_eta)
                    total = sel.estimates[idx].log_value + box_log_volume(
                        sel.refit, data, Hyper(sel.best_eta, mu=EVIDENCE_MU), kk)
                    if best is None or total > best[0] + 1e-12:
                        best = (total, kk, sel, res)
                _, kk, sel, res = best
                records.append(_result_record(
                    rep, "aris-eb-best", res,
                    detail=f"k={kk:g};eta={sel.best_eta:g}"))
        elif name == "aris-path":
            if grid_fits is None:
                grid_fits = tuple(
                    fit_joint_mode(data, Hyper(eta), opts)
                    for eta in config.eta_grid)
            masks = [f.state.active for f in grid_fits if f is not None]
            hit = path_contains_truth(masks, support)
            records.append(_result_record(
                rep, "aris-path",
                ReplicationResult(mse=float("nan"), c_count=0, i_count=0,
                                  correct_model=hit),
                detail="path"))
    return records


def _worker(args) -> tuple[int, list[dict] | None, str]:
    config, rep = args
    try:
        return rep, run_replication(config, rep), ""
    except Exception as exc:  # recorded; aborts later unless allowed
        return rep, None, f"{type(exc).__name__}: {exc}"


def _row_order(config: ExperimentConfig) -> list[str]:
    order = []
    for name in config.estimators:
        if name == "aris-eb" and config.evidence_method == "mc":
            order.extend(f"aris-eb-k{k:g}" for k in config.k_sweep)
            order.append("aris-eb-best")
        else:
            order.append(name)
    return order


def aggregate(config: ExperimentConfig, per_replication: list[dict]) -> tuple[ReportRow, ...]:
    """Collapse per-replication records into one report row per estimator."""

    rows = []
    boot_seed = _derive_seed(config.master_seed, 999_983)
    for name in _row_order(config):
        recs = [r for r in per_replication if r["estimator"] == name]
        if not recs:
            continue
        cm = float(np.mean([bool(r["correct_model"]) for r in recs]))
        if name == "aris-path":
            rows.append(ReportRow(name, None, None, None, None, cm))
            continue
        mses = [r["mse"] for r in recs]
        med, se = median_and_bootstrap_se(mses, n_boot=config.n_boot, seed=boot_seed)
        rows.append(ReportRow(
            estimator=name,
            median_mse=med,
            boot_se=se,
            mean_c=float(np.mean([r["c_count"] for r in recs])),
            mean_i=float(np.mean([r["i_count"] for r in recs])),
            cm=cm,
        ))
    return tuple(rows)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if value != value:  # NaN
            return ""
        return repr(value)
    return str(value)


def _write_report_csv(path: Path, rows: tuple[ReportRow, ...]) -> None:
    lines = ["estimator,median_mse,boot_se,mean_c,mean_i,cm"]
    for r in rows:
        lines.append(",".join([
            r.estimator, _fmt(r.median_mse), _fmt(r.boot_se),
            _fmt(r.mean_c), _fmt(r.mean_i), _fmt(r.cm),
        ]))
    path.write_text("\n".join(lines) + "\n")


def _write_replications_csv(path: Path, records: list[dict]) -> None:
    lines = ["replication,estimator,mse,c_count,i_count,correct_model,detail"]
    for r in records:
        lines.append(",".join([
            str(r["replication"]), r["estimator"], _fmt(r["mse"]),
            _fmt(r["c_count"]), _fmt(r["i_count"]),
            "" if r["correct_model"] is None else str(int(r["correct_model"])),
            r["detail"],
        ]))
    path.write_text("\n".join(lines) + "\n")


def _write_report_txt(path: Path, config: ExperimentConfig,
                      rows: tuple[ReportRow, ...]) -> None:
    out = [
        f"model {config.model_id}  n={config.n}  sigma={config.sigma:g}  "
        f"replications={config.replications}  seed={config.master_seed}",
        "",
        f"{'estimator':<16} {'MSE (Sd)':>22} {'C':>6} {'I':>6} {'CM':>6}",
    ]
    for r in rows:
        if r.median_mse is None:
            out.append(f"{r.estimator:<16} {'-':>22} {'-':>6} {'-':>6} {r.cm:>6.2f}")
        else:
            mse = f"{r.median_mse:.4f} ({r.boot_se:.4f})"
            out.append(
                f"{r.estimator:<16} {mse:>22} {r.mean_c:>6.2f} "
                f"{r.mean_i:>6.2f} {r.cm:>6.2f}")
    path.write_text("\n".join(out) + "\n")


def default_jobs() -> int:
    env = os.environ.get(JOBS_ENV_VAR)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | Path,
    jobs: int | None = None,
    allow_failures: bool = False,
) -> ExperimentReport:
    """Run all replications (possibly in parallel), aggregate, and write
    ``report.csv``, ``replications.csv``, ``report.txt`` and
    ``provenance.json`` under ``out_dir``.

    A failed replication aborts the run unless ``allow_failures`` is set,
    in which case it is recorded and excluded from the aggregates.
    Results are byte-identical for any ``jobs`` value.
    """

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = default_jobs() if jobs is None else max(1, jobs)

    tasks = [(config, rep) for rep in range(config.replications)]
    results: dict[int, tuple[list[dict] | None, str]] = {}
    if jobs == 1 or config.replications == 1:
        for task in tasks:
            rep, recs, err = _worker(task)
            results[rep] = (recs, err)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for rep, recs, err in pool.map(_worker, tasks):
                results[rep] = (recs, err)

    records: list[dict] = []
    failures: list[tuple[int, str]] = []
    for rep in range(config.replications):
        recs, err = results[rep]
        if recs is None:
            failures.append((rep, err))
            records.append(_result_record(rep, "__error__", None, detail=err))
        else:
            records.extend(recs)
    if failures and not allow_failures:
        rep, err = failures[0]
        raise ExperimentFailure(f"replication {rep} failed: {err}")

    rows = aggregate(config, records)
    provenance = {
        "config": {k: list(v) if isinstance(v, tuple) else v
                   for k, v in asdict(config).items()},
        "package_version": __version__,
        "failures": [{"replication": r, "error": e} for r, e in failures],
    }
    _write_report_csv(out / "report.csv", rows)
    _write_replications_csv(out / "replications.csv", records)
    _write_report_txt(out / "report.txt", config, rows)
    (out / "provenance.json").write_text(
        json.dumps(provenance, indent=2, sort_keys=True) + "\n")
    return ExperimentReport(rows=rows, per_replication=tuple(records),
                            provenance=provenance)
