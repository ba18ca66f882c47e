"""Target-model evaluation, method comparison and the ACF-gap verifier."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import distill as D
from . import forecaster as fc
from . import spectral
from .data import TimeSeries
from .errors import ConfigError, SeriesTooShort

METHODS = ("random", "window_gm", "hdt", "full_data")
REPORT_COLUMNS = ("method", "dataset", "eval_model", "mse_mean", "mse_std", "runtime_s")
SIG_DIGITS = 6


def round_sig(x: float, digits: int = SIG_DIGITS) -> float:
    return float(f"{float(x):.{digits}g}")


@dataclass
class EvalRow:
    method: str
    dataset: str
    eval_model: str
    mse_mean: float
    mse_std: float
    runtime_s: float = 0.0
    mses: list = field(default_factory=list)

    def as_record(self) -> dict:
        return {k: getattr(self, k) for k in REPORT_COLUMNS}


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def row(self, method: str, eval_model: str | None = None) -> EvalRow:
        for r in self.rows:
            if r.method == method and (eval_model is None or r.eval_model == eval_model):
                return r
        raise KeyError((method, eval_model))


@dataclass
class TheoremReport:
    epsilons: list
    gaps: list
    slope: float
    spearman: float
    K: int
    trials: int = 1

    def within_bound(self, factor: float = 1.05) -> bool:
        return all(g <= factor * self.slope * e for e, g in zip(self.epsilons, self.gaps))


# ------------------------------------------------------------ evaluation


def evaluate_distilled(
    synthetic: TimeSeries,
    test: TimeSeries,
    val: TimeSeries,
    model_kind: str = "linear",
    repeats: int = 3,
    cfg: D.DistillConfig | None = None,
    seeds=None,
    method: str = "",
    dataset: str = "",
) -> EvalRow:
    """Train ``model_kind`` on the windows of ``synthetic`` once per repeat and
    score it on the test windows.

    Repeats differ only in the training seed (mini-batch order); models start
    from zero.
    """
    cfg = cfg or D.DistillConfig()
    l, t = cfg.lookback, cfg.horizon
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    for name, ts in (("synthetic", synthetic), ("test", test), ("validation", val)):
        if ts.n < l + t:
            raise SeriesTooShort(ts.n, l, t)
    seeds = list(seeds) if seeds is not None else [cfg.seed + r for r in range(repeats)]
    if len(seeds) != repeats:
        raise ConfigError("need one seed per repeat")
    X, Y = fc.series_matrices(synthetic.values, l, t)
    Xv, Yv = fc.series_matrices(val.values, l, t)
    Xt, Yt = fc.series_matrices(test.values, l, t)
    mses = []
    for s in seeds:
        model = fc.make_model(model_kind, l, t, kernel_size=cfg.kernel_size)
        model = fc.train_to_convergence(model, (X, Y), (Xv, Yv), cfg.early_stop(seed=s))
        mses.append(fc.mse_matrix(model, Xt, Yt))
    arr = np.asarray(mses)
    std = float(arr.std()) if repeats > 1 else 0.0
    return EvalRow(method, dataset, model_kind, float(arr.mean()), std, 0.0, mses)


def distill_method(method: str, train: TimeSeries, val: TimeSeries, cfg: D.DistillConfig):
    """Synthetic series for one method, plus the run result when iterative."""
    if method == "full_data":
        return train, None
    if method == "random":
        D._check_lengths(train, val, cfg)
        return D.baseline_random(train, cfg.M, np.random.default_rng(cfg.seed)), None
    if method == "hdt":
        res = D.distill(train, val, cfg)
        return res.synthetic, res
    if method == "window_gm":
        res = D.baseline_window_gm(train, val, cfg)
        return res.synthetic, res
    if method == "hdt_decomp":
        res = D.baseline_decomp(train, val, cfg)
        return res.synthetic, res
    raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def run_comparison(
    train: TimeSeries,
    val: TimeSeries,
    test: TimeSeries,
    methods,
    cfg: D.DistillConfig,
    eval_models=("linear",),
    repeats: int = 3,
    dataset: str = "",
    timing: bool = False,
) -> EvalReport:
    """One row per (method, eval model). ``runtime_s`` stays 0 unless
    ``timing`` is set, so reports are reproducible byte for byte."""
    methods = list(methods)
    for m in methods:
        if m not in METHODS and m != "hdt_decomp":
            raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    report = EvalReport(config={**cfg.to_dict(), "repeats": repeats, "eval_models": list(eval_models)})
    for m in methods:
        t0 = time.perf_counter()
        synthetic, _ = distill_method(m, train, val, cfg)
        for kind in eval_models:
            row = evaluate_distilled(synthetic, test, val, kind, repeats, cfg, method=m, dataset=dataset)
            if timing:
                row.runtime_s = time.perf_counter() - t0
            report.rows.append(row)
    return report


# ------------------------------------------------------------- reporting


def _report_records(report: EvalReport) -> list[dict]:
    out = []
    for r in report.rows:
        rec = r.as_record()
        for k in ("mse_mean", "mse_std", "runtime_s"):
            rec[k] = round_sig(rec[k])
        out.append(rec)
    return out


def format_report(report: EvalReport, fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for rec in _report_records(report):
            w.writerow([rec[k] if isinstance(rec[k], str) else f"{rec[k]:.{SIG_DIGITS}g}" for k in REPORT_COLUMNS])
        return buf.getvalue()
    if fmt == "json":
        doc = {"columns": list(REPORT_COLUMNS), "rows": _report_records(report), "config": report.config}
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"
    raise ConfigError(f"unknown report format {fmt!r}")


def emit_report(report: EvalReport, path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".") or "csv"
    text = format_report(report, fmt)
    path.write_text(text, encoding="utf-8")
    return path


def parse_report(path) -> EvalReport:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        doc = json.loads(text)
        rows = [EvalRow(**{k: r[k] for k in REPORT_COLUMNS}) for r in doc["rows"]]
        return EvalReport(rows, doc.get("config", {}))
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
        raise ConfigError(f"unexpected report columns {reader.fieldnames}")
    rows = []
    for r in reader:
        rows.append(
            EvalRow(r["method"], r["dataset"], r["eval_model"], float(r["mse_mean"]), float(r["mse_std"]), float(r["runtime_s"]))
        )
    return EvalReport(rows)


# ------------------------------------------------------- ACF-gap verifier


def perturb_amplitudes(base: np.ndarray, eps: float, signs: np.ndarray) -> np.ndarray:
    """Shift every non-DC one-sided amplitude of ``base`` by ``eps * sign``
    (clamped at zero) while keeping phases; returns the new series."""
    m = base.shape[0]
    f = spectral.rfft(base).coeffs
    amp, phase = np.abs(f), np.angle(f)
    new_amp = amp.copy()
    new_amp[1:] = np.maximum(amp[1:] + eps * signs, 0.0)
    return spectral.irfft_coeffs(new_amp * np.exp(1j * phase), m)


def acf_gap(a: np.ndarray, b: np.ndarray, K: int) -> float:
    ra = spectral.acf_circular(a, K).values
    rb = spectral.acf_circular(b, K).values
    return float(np.max(np.abs(ra - rb)))


def fit_slope(epsilons, gaps) -> float:
    """Least-squares slope of ``gap = C * eps`` through the origin."""
    e = np.asarray(epsilons, dtype=np.float64)
    g = np.asarray(gaps, dtype=np.float64)
    den = float(e @ e)
    return float(e @ g / den) if den > 0 else 0.0


def verify_theorem1(base, epsilons, K: int, trials: int = 20, seed: int = 0) -> TheoremReport:
    """Sweep amplitude perturbations of size ``eps`` and record the largest
    ACF gap over lags ``0..K`` and over trials.

    Each trial draws one random sign pattern and reuses it for every ``eps``,
    so the sweep isolates the effect of the perturbation size.
    """
    base = np.asarray(base, dtype=np.float64)
    eps = [float(e) for e in epsilons]
    if not eps:
        raise ConfigError("need at least one epsilon")
    if any(e < 0 for e in eps) or any(b <= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("epsilons must be nonnegative and strictly increasing")
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    m = base.shape[0]
    base = base - base.mean()
    rng = np.random.default_rng(seed)
    signs = rng.choice([-1.0, 1.0], size=(trials, spectral.n_bins(m) - 1))
    gaps = []
    for e in eps:
        if e == 0:
            gaps.append(0.0)
            continue
        gaps.append(max(acf_gap(base, perturb_amplitudes(base, e, s), K) for s in signs))
    slope = fit_slope(eps, gaps)
    if len(eps) > 1 and np.ptp(gaps) > 0:
        rho = float(spearmanr(eps, gaps).statistic)
    else:
        rho = float("nan")
    return TheoremReport(eps, gaps, slope, rho, K, trials)


def theorem_report_dict(rep: TheoremReport) -> dict:
    return {
        "K": rep.K,
        "trials": rep.trials,
        "epsilons": rep.epsilons,
        "gaps": [round_sig(g, 12) for g in rep.gaps],
        "slope": round_sig(rep.slope, 12),
        "spearman": None if np.isnan(rep.spearman) else round_sig(rep.spearman, 12),
    }
