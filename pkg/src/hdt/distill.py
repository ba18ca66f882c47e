"""Harmonic dataset distillation and the baselines it is compared with.

The synthetic series is parameterized by its one-sided spectrum. Each outer
step samples a real subsequence of the same length, picks its top-k
amplitude bins, and descends the sum of two losses w.r.t. the synthetic
coefficients on those bins:

* an Lp distance between the amplitudes of the two filtered spectra, and
* a normalized distance between the parameters reached by training a fresh
  model for a few SGD steps on each harmonic reconstruction.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import forecaster as fc
from . import spectral
from .data import TimeSeries, sample_subsequence
from .errors import ConfigError, LengthMismatch, NonFiniteLoss, SeriesTooShort

log = logging.getLogger(__name__)

DENOM_GUARD = 1e-12


@dataclass
class DistillConfig:
    M: int = 384
    k: int | None = None  # None -> M // 4
    lam: float = 1e-2
    p: int = 1
    eta: float = 0.01
    expert_steps: int = 20
    student_steps: int = 20
    inner_lr: float = 0.01
    outer_max_iters: int = 1000
    eval_every: int = 50
    patience: int = 5
    seed: int = 0
    exclude_dc: bool = False
    penalize_offharmonics: bool = False
    lookback: int = 96
    horizon: int = 96
    backbone: str = "dlinear"
    kernel_size: int = fc.DEFAULT_KERNEL
    theta_std: float = 0.01
    # window-based baseline
    base_eta: float = 0.01
    base_batch: int = 32
    # validation scoring during distillation
    eval_lr: float = 0.005
    eval_max_epochs: int = 200
    eval_patience: int = 10
    eval_batch: int = 32
    eval_min_steps: int = 100

    @property
    def harmonics(self) -> int:
        """Effective ``k``: the configured value, or ``M // 4`` when unset."""
        return self.k if self.k is not None else max(self.M // 4, 1)

    def validate(self) -> None:
        l, t = self.lookback, self.horizon
        if l < 1 or t < 1:
            raise ConfigError("lookback and horizon must be positive")
        if self.M < l + t:
            raise ConfigError(f"M={self.M} is shorter than one window ({l}+{t})")
        if not 1 <= self.harmonics <= spectral.n_bins(self.M):
            raise ConfigError(f"k={self.harmonics} outside [1, {spectral.n_bins(self.M)}]")
        if self.lam < 0:
            raise ConfigError("lambda must be nonnegative")
        if self.p not in (1, 2):
            raise ConfigError("p must be 1 or 2")
        if self.eta < 0 or self.base_eta < 0:
            raise ConfigError("learning rates must be nonnegative")
        if self.expert_steps < 1 or self.student_steps < 1:
            raise ConfigError("expert and student step counts must be >= 1")
        if self.inner_lr < 0:
            raise ConfigError("inner_lr must be nonnegative")
        if self.outer_max_iters < 0 or self.eval_every < 1 or self.patience < 1:
            raise ConfigError("outer_max_iters >= 0, eval_every >= 1 and patience >= 1 required")
        if self.backbone not in fc.MODEL_KINDS:
            raise ConfigError(f"unknown backbone {self.backbone!r}")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["k"] = self.harmonics
        return doc

    def early_stop(self, seed=None) -> fc.EarlyStopConfig:
        return fc.EarlyStopConfig(
            learning_rate=self.eval_lr,
            max_epochs=self.eval_max_epochs,
            patience=self.eval_patience,
            batch_size=self.eval_batch,
            min_steps_per_epoch=self.eval_min_steps,
            seed=self.seed if seed is None else seed,
        )


@dataclass
class DistillResult:
    synthetic: TimeSeries
    spectrum: spectral.Spectrum | None
    best_val_mse: float
    history: list = field(default_factory=list)
    snapshot_iteration: int = 0
    iterations_run: int = 0
    warnings: dict = field(default_factory=dict)


# ------------------------------------------------------------ conversions


def to_pairs(coeffs: np.ndarray) -> np.ndarray:
    return np.stack([coeffs.real, coeffs.imag], axis=-1)


def from_pairs(pairs: np.ndarray) -> np.ndarray:
    return pairs[..., 0] + 1j * pairs[..., 1]


def project_hermitian(coeffs: np.ndarray, m: int) -> np.ndarray:
    out = np.array(coeffs, dtype=np.complex128)
    out[0] = out[0].real
    if m % 2 == 0:
        out[m // 2] = out[m // 2].real
    return out


def init_synthetic(train: TimeSeries, m: int, rng) -> spectral.Spectrum:
    """Spectrum of a randomly drawn length-``m`` slice of ``train``."""
    if train.n < m:
        raise SeriesTooShort(train.n, m)
    return spectral.rfft(sample_subsequence(train, m, rng).values)


def synthetic_series(spec: spectral.Spectrum, names=()) -> TimeSeries:
    return TimeSeries(spectral.irfft(spec), names)


# ------------------------------------------------------------------ losses


def _magnitudes(pairs) -> ad.Variable:
    return ad.complex_magnitude(pairs)


def harmonic_loss(fx_filtered, fs_filtered, p: int = 1, mask=None, penalize_offharmonics=False):
    """Lp distance between amplitude spectra, per channel, summed over channels.

    Both arguments are filtered spectra of the same length: either
    :class:`Spectrum` objects or ``(F, ..., 2)`` coefficient pairs (the
    synthetic side may be a Variable). With ``penalize_offharmonics`` and a
    ``mask``, synthetic amplitude outside the mask is also pushed to zero.
    """
    fx = _as_pairs(fx_filtered)
    fs = _as_pairs(fs_filtered)
    if fx.shape != fs.shape:
        raise LengthMismatch(f"spectra of shapes {fx.shape} and {fs.shape}")
    amp_x = _magnitudes(ad.as_variable(fx).detach())
    amp_s = _magnitudes(fs)
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        amp_x = ad.mul(amp_x, mask)
        diff = ad.sub(amp_x, ad.mul(amp_s, mask))
        if penalize_offharmonics:
            diff = ad.sub(diff, ad.mul(amp_s, 1.0 - mask))
    else:
        # unmasked: bins that are exactly zero on both sides contribute 0
        both_zero = (np.abs(_value(fx)).sum(-1) == 0) & (np.abs(_value(fs)).sum(-1) == 0)
        keep = (~both_zero).astype(np.float64)
        diff = ad.mul(ad.sub(amp_x, amp_s), keep)
    if p == 1:
        return ad.l1_norm(diff)
    if p == 2:
        per_channel = ad.vsum(ad.square(diff), axis=0)
        return ad.vsum(ad.sqrt_guarded(per_channel))
    raise ConfigError("p must be 1 or 2")


def _value(x):
    return x.value if isinstance(x, ad.Variable) else np.asarray(x)


def _as_pairs(x):
    if isinstance(x, spectral.Spectrum):
        return to_pairs(x.coeffs)
    return x


def _window_index(m: int, l: int, t: int):
    starts = np.arange(m - (l + t) + 1)
    return starts[:, None] + np.arange(l)[None, :], starts[:, None] + l + np.arange(t)[None, :]


def window_matrices_var(series, l: int, t: int):
    """Column matrices ``(X, Y)`` of all windows of an ``M x C`` Variable."""
    series = ad.as_variable(series)
    m, c = series.shape
    if m < l + t:
        raise SeriesTooShort(m, l, t)
    ix, iy = _window_index(m, l, t)
    w = ix.shape[0]
    X = ad.reshape(ad.transpose(ad.getitem(series, ix), (1, 0, 2)), (l, w * c))
    Y = ad.reshape(ad.transpose(ad.getitem(series, iy), (1, 0, 2)), (t, w * c))
    return X, Y


def param_distance_sq(a: dict, b: dict):
    """Squared Euclidean distance between two parameter dicts; Variable if
    either side holds Variables."""
    total = None
    for k in a:
        d = ad.l2_norm_squared(ad.sub(a[k], b[k]))
        total = d if total is None else ad.add(total, d)
    return total


def grad_match_loss(theta0, xh_windows, sh_windows, i: int, j: int, inner_lr: float, student_lr=None, counters=None):
    """Normalized parameter-matching loss between ``j`` student steps on the
    synthetic windows and ``i`` expert steps on the real ones.

    ``sh_windows`` may hold Variables (record the student on the active tape);
    the expert branch is always a constant.
    """
    student_lr = inner_lr if student_lr is None else student_lr
    expert = fc.sgd_train(theta0, xh_windows, fc.TrainConfig(inner_lr, i))
    X, Y = sh_windows if isinstance(sh_windows, tuple) else fc.windows_to_matrices(sh_windows)
    taped = isinstance(X, ad.Variable) and X.requires_grad
    if taped:
        student = fc.sgd_train(theta0, (X, Y), fc.TrainConfig(student_lr, j), record_on_tape=True)
    else:
        student = fc.sgd_train(theta0, (_value(X), _value(Y)), fc.TrainConfig(student_lr, j))
    target = expert.params()
    num = param_distance_sq(student.params(), target)
    den = float(param_distance_sq(theta0.params(), target).value)
    if den < DENOM_GUARD:
        den += DENOM_GUARD
        if counters is not None:
            counters["degenerate_denominator"] = counters.get("degenerate_denominator", 0) + 1
    return ad.scale(num, 1.0 / den)


# ---------------------------------------------------------------- outer step


@dataclass
class StepStats:
    harm: float
    grad: float
    total: float
    harmonics: np.ndarray | None = None


def hdt_objective(fs_pairs, fx: np.ndarray, mask: np.ndarray, theta0, cfg: DistillConfig, counters=None):
    """Combined loss ``L_grad + lam * L_harm`` as a Variable of ``fs_pairs``.

    ``fx`` are the real subsequence's complex coefficients ``(F, C)`` and
    ``mask`` the ``(F, C)`` harmonic selection.
    """
    m = cfg.M
    fmask = mask.astype(np.float64)
    fx_f = fx * fmask
    fs_f = ad.mul(fs_pairs, fmask[..., None])
    if cfg.penalize_offharmonics:
        l_harm = harmonic_loss(to_pairs(fx_f), fs_pairs, cfg.p, mask=mask, penalize_offharmonics=True)
    else:
        l_harm = harmonic_loss(to_pairs(fx_f), fs_f, cfg.p, mask=mask)
    x_h = spectral.irfft_coeffs(fx_f, m)
    s_h = ad.irfft_map(fs_f, m)
    xw = fc.series_matrices(x_h, cfg.lookback, cfg.horizon)
    sw = window_matrices_var(s_h, cfg.lookback, cfg.horizon)
    l_grad = grad_match_loss(
        theta0, xw, sw, cfg.expert_steps, cfg.student_steps, cfg.inner_lr, counters=counters
    )
    total = ad.add(l_grad, ad.scale(l_harm, cfg.lam))
    return total, l_harm, l_grad


def hdt_step(fs: spectral.Spectrum, train: TimeSeries, cfg: DistillConfig, rng, counters=None):
    """One outer iteration; returns the updated spectrum and its loss values."""
    m = cfg.M
    theta0 = fc.make_model(cfg.backbone, cfg.lookback, cfg.horizon, rng, cfg.theta_std, cfg.kernel_size)
    x_sub = sample_subsequence(train, m, rng)
    fx = spectral.rfft(x_sub.values).coeffs
    mask = spectral.harmonic_mask(np.abs(fx), cfg.harmonics, cfg.exclude_dc)
    pairs = to_pairs(fs.coeffs)
    with ad.Tape() as tape:
        leaf = tape.leaf(pairs, name="F_S")
        total, l_harm, l_grad = hdt_objective(leaf, fx, mask, theta0, cfg, counters)
        if not np.isfinite(total.value):
            raise NonFiniteLoss(f"distillation loss became {total.value}")
        g = ad.grad(total, leaf)
    new = pairs - cfg.eta * g
    coeffs = project_hermitian(from_pairs(new), m)
    stats = StepStats(float(l_harm.value), float(l_grad.value), float(total.value), mask)
    return spectral.Spectrum(coeffs, m), stats


# ----------------------------------------------------------- outer loops


def score_synthetic(values: np.ndarray, val: TimeSeries, cfg: DistillConfig) -> float:
    """Validation MSE of a plain linear model trained on the synthetic series."""
    X, Y = fc.series_matrices(values, cfg.lookback, cfg.horizon)
    Xv, Yv = fc.series_matrices(val.values, cfg.lookback, cfg.horizon)
    model = fc.make_model("linear", cfg.lookback, cfg.horizon)
    model = fc.train_to_convergence(model, (X, Y), (Xv, Yv), cfg.early_stop())
    return fc.mse_matrix(model, Xv, Yv)


class _Snapshots:
    """Best-validation bookkeeping shared by all iterative methods."""

    def __init__(self, val, cfg):
        self.val = val
        self.cfg = cfg
        self.best = None
        self.best_state = None
        self.best_iter = 0
        self.failed = 0

    def evaluate(self, iteration, values, state) -> tuple[float, bool]:
        mse = score_synthetic(values, self.val, self.cfg)
        if self.best is None or mse < self.best:
            self.best, self.best_state, self.best_iter, self.failed = mse, state, iteration, 0
        else:
            self.failed += 1
        return mse, self.failed >= self.cfg.patience


def _check_lengths(train, val, cfg):
    cfg.validate()
    if train.n < cfg.M:
        raise SeriesTooShort(train.n, cfg.M)
    if val.n < cfg.lookback + cfg.horizon:
        raise SeriesTooShort(val.n, cfg.lookback, cfg.horizon)


def distill(train: TimeSeries, val: TimeSeries, cfg: DistillConfig) -> DistillResult:
    """Run the harmonic distillation loop with validation-based snapshots."""
    _check_lengths(train, val, cfg)
    rng = np.random.default_rng(cfg.seed)
    fs = init_synthetic(train, cfg.M, rng)
    snaps = _Snapshots(val, cfg)
    history, counters = [], {"degenerate_denominator": 0}
    snaps.evaluate(0, spectral.irfft(fs), fs)
    it = 0
    for it in range(1, cfg.outer_max_iters + 1):
        fs, st = hdt_step(fs, train, cfg, rng, counters)
        row = {"iteration": it, "L_harm": st.harm, "L_grad": st.grad, "total": st.total, "val_mse": None}
        stop = False
        if it % cfg.eval_every == 0 or it == cfg.outer_max_iters:
            row["val_mse"], stop = snaps.evaluate(it, spectral.irfft(fs), fs)
            log.info("iter %d total %.5g val %.5g", it, st.total, row["val_mse"])
        history.append(row)
        if stop:
            break
    best = snaps.best_state
    return DistillResult(
        synthetic=synthetic_series(best, train.channel_names),
        spectrum=best,
        best_val_mse=snaps.best,
        history=history,
        snapshot_iteration=snaps.best_iter,
        iterations_run=it,
        warnings=counters,
    )


def baseline_random(train: TimeSeries, m: int, rng) -> TimeSeries:
    return sample_subsequence(train, m, rng)


def baseline_decomp(train: TimeSeries, val: TimeSeries, cfg: DistillConfig) -> DistillResult:
    """Harmonic gradient matching without the amplitude loss (``lam = 0``)."""
    return distill(train, val, replace(cfg, lam=0.0))


def window_gm_loss(series, train_values: np.ndarray, theta0, cfg: DistillConfig, rng):
    """Single-step gradient matching on random window batches from the
    synthetic series (a Variable) and the real training series."""
    l, t = cfg.lookback, cfg.horizon
    ix, iy = _window_index(series.shape[0], l, t)
    sel = rng.choice(ix.shape[0], size=min(cfg.base_batch, ix.shape[0]), replace=False)
    c = series.shape[1]
    xs = ad.reshape(ad.transpose(ad.getitem(series, ix[sel]), (1, 0, 2)), (l, len(sel) * c))
    ys = ad.reshape(ad.transpose(ad.getitem(series, iy[sel]), (1, 0, 2)), (t, len(sel) * c))
    n_real = train_values.shape[0] - (l + t) + 1
    starts = rng.choice(n_real, size=min(cfg.base_batch, n_real), replace=False)
    xr = np.stack([train_values[s : s + l] for s in starts])  # (B, l, C)
    yr = np.stack([train_values[s + l : s + l + t] for s in starts])
    Xr = xr.transpose(1, 0, 2).reshape(l, -1)
    Yr = yr.transpose(1, 0, 2).reshape(t, -1)
    return grad_match_loss(theta0, (Xr, Yr), (xs, ys), 1, 1, cfg.inner_lr)


def baseline_window_gm(train: TimeSeries, val: TimeSeries, cfg: DistillConfig) -> DistillResult:
    """Time-domain distillation by window gradient matching (the "Base" row).

    Starts from the same real slice as :func:`distill` for the same seed and
    uses the same outer budget and validation snapshots.
    """
    _check_lengths(train, val, cfg)
    rng = np.random.default_rng(cfg.seed)
    s = sample_subsequence(train, cfg.M, rng).values.copy()
    snaps = _Snapshots(val, cfg)
    snaps.evaluate(0, s, s.copy())
    history = []
    it = 0
    for it in range(1, cfg.outer_max_iters + 1):
        theta0 = fc.make_model(cfg.backbone, cfg.lookback, cfg.horizon, rng, cfg.theta_std, cfg.kernel_size)
        with ad.Tape() as tape:
            leaf = tape.leaf(s, name="S")
            loss = window_gm_loss(leaf, train.values, theta0, cfg, rng)
            if not np.isfinite(loss.value):
                raise NonFiniteLoss(f"window matching loss became {loss.value}")
            g = ad.grad(loss, leaf)
        s = s - cfg.base_eta * g
        row = {"iteration": it, "L_harm": 0.0, "L_grad": float(loss.value), "total": float(loss.value), "val_mse": None}
        stop = False
        if it % cfg.eval_every == 0 or it == cfg.outer_max_iters:
            row["val_mse"], stop = snaps.evaluate(it, s, s.copy())
        history.append(row)
        if stop:
            break
    return DistillResult(
        synthetic=TimeSeries(snaps.best_state, train.channel_names),
        spectrum=None,
        best_val_mse=snaps.best,
        history=history,
        snapshot_iteration=snaps.best_iter,
        iterations_run=it,
    )

