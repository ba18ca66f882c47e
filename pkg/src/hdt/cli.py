"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 input/output error,
3 numerical failure. Per-field overrides also read ``HDT_<NAME>``
environment variables (``HDT_M``, ``HDT_K``, ``HDT_LAMBDA``, ``HDT_ETA``,
``HDT_P``, ``HDT_INNER_STEPS``, ``HDT_OUTER_ITERS``, ``HDT_SEED``,
``HDT_OUT``, ``HDT_THREADS``, ``HDT_DATA``, ``HDT_METHOD``).
"""

from __future__ import annotations

import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__, artifacts, data, distill, evaluate, gradcheck, synth
from .config import RunConfig, apply_overrides, load_config
from .errors import (
    BrokenHermitianSymmetry,
    ConfigError,
    DegenerateChannel,
    EmptySeries,
    InvalidSpec,
    LengthTooSmall,
    LagOutOfRange,
    NonFiniteLoss,
    NonNumericCell,
    SeriesTooShort,
)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("hdt")


class CheckFailed(Exception):
    """A numerical self-check did not meet its threshold."""


CONFIG_ERRORS = (ConfigError, InvalidSpec, SeriesTooShort, LengthTooSmall, LagOutOfRange, click.UsageError)
IO_ERRORS = (OSError, NonNumericCell, EmptySeries, DegenerateChannel)
NUMERIC_ERRORS = (NonFiniteLoss, BrokenHermitianSymmetry, FloatingPointError, CheckFailed)


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, CONFIG_ERRORS):
        return EXIT_CONFIG
    if isinstance(exc, IO_ERRORS):
        return EXIT_IO
    if isinstance(exc, NUMERIC_ERRORS):
        return EXIT_NUMERIC
    return EXIT_NUMERIC


def _common(f):
    opts = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="YAML run config."),
        click.option("--out", envvar="HDT_OUT", default=None, help="Output directory."),
        click.option("--seed", envvar="HDT_SEED", type=click.IntRange(0, 2**64 - 1), default=None),
        click.option("--threads", envvar="HDT_THREADS", type=click.IntRange(1), default=None, help="Parallelism cap."),
        click.option("-v", "--verbose", is_flag=True, help="Log progress lines."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def _hyper(f):
    opts = [
        click.option("--data", envvar="HDT_DATA", default=None, help="Dataset CSV."),
        click.option("--M", "M", envvar="HDT_M", type=int, default=None, help="Synthetic length."),
        click.option("--k", envvar="HDT_K", type=int, default=None, help="Harmonic count."),
        click.option("--lambda", "lambda_", envvar="HDT_LAMBDA", type=float, default=None),
        click.option("--eta", envvar="HDT_ETA", type=float, default=None),
        click.option("--p", envvar="HDT_P", type=int, default=None),
        click.option("--inner-steps", envvar="HDT_INNER_STEPS", type=int, default=None),
        click.option("--outer-iters", envvar="HDT_OUTER_ITERS", type=int, default=None),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def _resolve(config_path, **values) -> RunConfig:
    cfg = load_config(config_path)
    if "lambda_" in values:
        values["lambda"] = values.pop("lambda_")
    return apply_overrides(cfg, values)


def _setup(verbose: bool, threads) -> None:
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(name)s: %(message)s", stream=sys.stderr)


def _load_splits(cfg: RunConfig):
    if not cfg.data.path:
        raise ConfigError("no dataset path; set data.path, --data or HDT_DATA")
    opts = data.CsvOptions(cfg.data.timestamp_column, cfg.data.delimiter)
    raw = data.load_csv(cfg.data.path, opts)
    train, val, test = data.split(raw, data.SplitSpec(*cfg.data.split))
    stats = data.fit_norm(train)
    train, val, test = (data.apply_norm(x, stats) for x in (train, val, test))
    return raw, train, val, test


def _manifest(cfg: RunConfig, raw, command: str) -> dict:
    return {
        "command": command,
        "version": __version__,
        "seed": cfg.distill.seed,
        "config": json.loads(json.dumps(cfg.to_dict(), default=str)),
        "resolved_distill": cfg.distill.to_dict(),
        "dataset": cfg.data.dataset_name,
        "dataset_sha256": artifacts.dataset_hash(raw) if raw is not None else None,
    }


@click.group()
@click.version_option(__version__, prog_name="hdt")
def cli():
    """Harmonic dataset distillation for time-series forecasting."""


@cli.command("distill")
@_common
@_hyper
@click.option("--method", envvar="HDT_METHOD", type=click.Choice(["hdt", "hdt_decomp", "window_gm", "random"]), default=None)
def cmd_distill(config_path, verbose, **values):
    """Distill a training split into a short synthetic series."""
    _setup(verbose, values.get("threads"))
    cfg = _resolve(config_path, **values)
    cfg.distill.validate()
    raw, train, val, _ = _load_splits(cfg)
    dcfg = cfg.distill
    method = cfg.method
    if method == "random":
        synthetic = distill.baseline_random(train, dcfg.M, np.random.default_rng(dcfg.seed))
        result = distill.DistillResult(synthetic, None, distill.score_synthetic(synthetic.values, val, dcfg))
    else:
        fn = {"hdt": distill.distill, "hdt_decomp": distill.baseline_decomp, "window_gm": distill.baseline_window_gm}[method]
        result = fn(train, val, dcfg)
    stem = artifacts.run_stem(cfg.data.dataset_name, method, dcfg.M, dcfg.seed)
    paths = artifacts.save_distill_result(result, cfg.out, stem, _manifest(cfg, raw, "distill"))
    click.echo(f"wrote {paths['synthetic']}")
    return EXIT_OK


@cli.command("eval")
@_common
@_hyper
@click.option("--methods", default=None, help="Comma-separated subset of random,window_gm,hdt,full_data.")
@click.option("--repeats", type=click.IntRange(1), default=None)
@click.option("--timing", is_flag=True, default=False, help="Record wall-clock runtime in the report.")
def cmd_eval(config_path, verbose, methods, repeats, timing, **values):
    """Distill with each method and score target models on the test split."""
    _setup(verbose, values.get("threads"))
    cfg = _resolve(config_path, **values)
    cfg.distill.validate()
    ev = cfg.eval
    if methods:
        ev = replace(ev, methods=[m.strip() for m in methods.split(",") if m.strip()])
    if repeats:
        ev = replace(ev, repeats=repeats)
    ev = replace(ev, timing=ev.timing or timing)
    raw, train, val, test = _load_splits(cfg)
    report = evaluate.run_comparison(
        train, val, test, ev.methods, cfg.distill, ev.models, ev.repeats, cfg.data.dataset_name, ev.timing
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = artifacts.run_stem(cfg.data.dataset_name, "+".join(ev.methods), cfg.distill.M, cfg.distill.seed)
    evaluate.emit_report(report, out / f"{stem}_report.csv", "csv")
    evaluate.emit_report(report, out / f"{stem}_report.json", "json")
    artifacts.write_json(_manifest(replace(cfg, eval=ev), raw, "eval"), out / f"{stem}_manifest.json")
    click.echo(evaluate.format_report(report, "csv"), nl=False)
    return EXIT_OK


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse epsilon list {text!r}") from None


@cli.command("verify-theorem")
@_common
@click.option("--epsilons", default=None, help="Comma-separated increasing perturbation sizes.")
@click.option("--K", "K", type=int, default=None, help="Largest ACF lag compared.")
@click.option("--trials", type=int, default=None)
@click.option("--base", "base_path", type=click.Path(dir_okay=False), default=None, help="CSV whose first column is the base series.")
def cmd_verify_theorem(config_path, verbose, epsilons, K, trials, base_path, **values):
    """Check that the ACF gap grows at most linearly in the amplitude gap."""
    _setup(verbose, values.get("threads"))
    cfg = _resolve(config_path, **values)
    th = cfg.theorem
    if epsilons is not None:
        th = replace(th, epsilons=_float_list(epsilons))
    if K is not None:
        th = replace(th, K=K)
    if trials is not None:
        th = replace(th, trials=trials)
    if base_path:
        base = data.load_csv(base_path).values[:, 0]
    else:
        spec = synth.SineMixSpec(th.M, 1, [], "ar1", th.noise_scale, th.ar_phi, seed=th.seed)
        base = synth.generate(spec).values[:, 0]
    rep = evaluate.verify_theorem1(base, th.epsilons, th.K, th.trials, th.seed)
    doc = evaluate.theorem_report_dict(rep)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts.write_json(doc, out / f"theorem_M{len(base)}_s{th.seed}.json")
    click.echo(f"slope {rep.slope:.6g} spearman {rep.spearman:.6g} K {rep.K}")
    if len(rep.epsilons) > 1 and not rep.spearman > th.min_spearman:
        raise CheckFailed(f"spearman {rep.spearman:.4g} not above {th.min_spearman}")
    if not rep.within_bound(th.bound_factor):
        raise CheckFailed("a measured gap exceeds the fitted linear bound")
    return EXIT_OK


@cli.command("gen")
@_common
@click.option("--length", type=int, default=None)
@click.option("--channels", type=int, default=None)
def cmd_gen(config_path, verbose, length, channels, **values):
    """Write a sine-mixture series in the ingestion CSV format."""
    _setup(verbose, values.get("threads"))
    cfg = _resolve(config_path, **values)
    doc = dict(cfg.gen)
    if length is not None:
        doc["length"] = length
    if channels is not None:
        doc["channels"] = channels
    spec = synth.SineMixSpec.from_dict(doc)
    ts = synth.generate(spec)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"sinemix_N{spec.length}_s{spec.seed}.csv"
    data.write_csv(ts, path)
    click.echo(f"wrote {path}")
    return EXIT_OK


@cli.command("gradcheck")
@_common
@click.option("--instances", type=click.IntRange(1), default=None)
@click.option("--eps", type=float, default=None, help="Finite-difference step.")
@click.option("--tol", type=float, default=1e-4, show_default=True)
@click.option("--corrupt", default=None, hidden=True, help="Test hook: break one primitive's backward pass.")
def cmd_gradcheck(config_path, verbose, instances, eps, tol, corrupt, **values):
    """Compare autodiff and finite-difference gradients of the full loss."""
    _setup(verbose, values.get("threads"))
    cfg = _resolve(config_path, **values)
    gc = cfg.gradcheck
    if instances is not None:
        gc = replace(gc, instances=instances)
    if eps is not None:
        gc = replace(gc, eps=eps)
    if gc.eps >= 1e-2:
        click.echo(f"warning: eps={gc.eps} is large; truncation error will dominate", err=True)
    errs = gradcheck.objective_errors(gc, corrupt=corrupt or os.environ.get("HDT_CORRUPT_PRIMITIVE"))
    worst = max(errs)
    click.echo(f"max relative error {worst:.3e} over {len(errs)} instances")
    if not worst < tol:
        raise CheckFailed(f"gradient check failed: {worst:.3e} >= {tol:g}")
    return EXIT_OK


def run(argv=None) -> int:
    """Invoke the CLI and map exceptions to exit codes."""
    try:
        rv = cli.main(args=argv, prog_name="hdt", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_CONFIG
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - one-line diagnostic, mapped code
        code = exit_code_for(exc)
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return code
    return rv if isinstance(rv, int) else EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
