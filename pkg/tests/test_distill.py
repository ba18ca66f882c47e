import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdt import autodiff as ad
from hdt import data
from hdt import distill as D
from hdt import forecaster as fc
from hdt import spectral, synth
from hdt.errors import ConfigError, SeriesTooShort


def small_cfg(**kw):
    base = dict(M=16, k=4, lam=0.1, eta=0.05, expert_steps=2, student_steps=2, lookback=4, horizon=4,
                backbone="linear", outer_max_iters=5, eval_every=5, eval_max_epochs=5)
    base.update(kw)
    return D.DistillConfig(**base)


@pytest.fixture
def series():
    ts = synth.generate(synth.SineMixSpec(256, 2, [synth.Component(1.0, bin=16), synth.Component(0.5, bin=40)],
                                          "white", 0.2, seed=3))
    return data.split(ts)


def test_default_k_is_quarter_of_m():
    assert D.DistillConfig(M=384).harmonics == 96
    assert D.DistillConfig(M=384, k=8).harmonics == 8
    assert D.DistillConfig(M=384).to_dict()["k"] == 96


@pytest.mark.parametrize("kw", [dict(M=100), dict(k=0), dict(p=3), dict(lam=-1.0), dict(backbone="mlp")])
def test_invalid_configs(kw):
    with pytest.raises(ConfigError):
        D.DistillConfig(**kw).validate()


def test_init_roundtrips_to_a_real_slice(series):
    train = series[0]
    spec = D.init_synthetic(train, 16, np.random.default_rng(4))
    again = D.init_synthetic(train, 16, np.random.default_rng(4))
    np.testing.assert_array_equal(spec.coeffs, again.coeffs)
    x = spectral.irfft(spec)
    sub = data.sample_subsequence(train, 16, np.random.default_rng(4)).values
    np.testing.assert_allclose(x, sub, atol=1e-9)
    full = D.init_synthetic(train, train.n, np.random.default_rng(0))
    np.testing.assert_allclose(spectral.irfft(full), train.values, atol=1e-9)


def test_harmonic_loss_simple_cases():
    a = np.array([[0.0], [5.0], [0.0]], dtype=complex)
    b = np.array([[0.0], [2.0j], [0.0]], dtype=complex)
    for p in (1, 2):
        assert D.harmonic_loss(D.to_pairs(a), D.to_pairs(b), p).item() == pytest.approx(3.0)
    assert D.harmonic_loss(D.to_pairs(a), D.to_pairs(a)).item() == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_harmonic_loss_ignores_phase(seed):
    rng = np.random.default_rng(seed)
    fx = rng.normal(size=(9, 2)) + 1j * rng.normal(size=(9, 2))
    fs = rng.normal(size=(9, 2)) + 1j * rng.normal(size=(9, 2))
    rotated = fs * np.exp(1j * rng.uniform(0, 2 * np.pi, size=fs.shape))
    mask = rng.random((9, 2)) < 0.5
    for p in (1, 2):
        a = D.harmonic_loss(D.to_pairs(fx), D.to_pairs(fs), p, mask=mask).item()
        b = D.harmonic_loss(D.to_pairs(fx), D.to_pairs(rotated), p, mask=mask).item()
        assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


def test_grad_match_identical_data_is_zero():
    rng = np.random.default_rng(0)
    theta0 = fc.make_model("dlinear", 4, 2, rng, 0.1, kernel_size=3)
    X, Y = rng.normal(size=(4, 10)), rng.normal(size=(2, 10))
    assert D.grad_match_loss(theta0, (X, Y), (X, Y), 3, 3, 0.1).item() == 0.0


def test_grad_match_frozen_student_is_one():
    rng = np.random.default_rng(1)
    theta0 = fc.make_model("linear", 4, 2, rng, 0.1)
    X, Y = rng.normal(size=(4, 10)), rng.normal(size=(2, 10))
    S = (rng.normal(size=(4, 6)), rng.normal(size=(2, 6)))
    assert D.grad_match_loss(theta0, (X, Y), S, 4, 4, 0.1, student_lr=0.0).item() == pytest.approx(1.0)


def test_grad_match_against_explicit_trajectories():
    # l=t=2, M=8: train both branches by hand with numpy and compare
    rng = np.random.default_rng(2)
    m, l, t, i, j, lr = 8, 2, 2, 3, 2, 0.2
    x, s = rng.normal(size=m), rng.normal(size=m)
    W0, b0 = rng.normal(size=(t, l)) * 0.1, rng.normal(size=t) * 0.1

    def windows(v):
        n = m - l - t + 1
        return (np.stack([v[a : a + l] for a in range(n)], 1), np.stack([v[a + l : a + l + t] for a in range(n)], 1))

    def run(v, steps):
        X, Y = windows(v)
        W, b = W0.copy(), b0.copy()
        for _ in range(steps):
            r = W @ X + b[:, None] - Y
            G = 2 * r / r.size
            W, b = W - lr * G @ X.T, b - lr * G.sum(1)
        return np.concatenate([W.ravel(), b])

    theta0 = np.concatenate([W0.ravel(), b0])
    e, st_ = run(x, i), run(s, j)
    expect = np.sum((st_ - e) ** 2) / np.sum((theta0 - e) ** 2)
    model = fc.LinearForecaster(l, t, W=W0, b=b0)
    got = D.grad_match_loss(model, windows(x), windows(s), i, j, lr).item()
    assert got == pytest.approx(expect, rel=1e-12)


def test_zero_eta_keeps_spectrum(series):
    train = series[0]
    cfg = small_cfg(eta=0.0)
    rng = np.random.default_rng(0)
    fs = D.init_synthetic(train, 16, rng)
    new, _ = D.hdt_step(fs, train, cfg, rng)
    np.testing.assert_array_equal(new.coeffs, fs.coeffs)


def test_only_selected_bins_move(series):
    train = series[0]
    cfg = small_cfg(k=2)
    rng = np.random.default_rng(5)
    fs = D.init_synthetic(train, 16, rng)
    new, stats = D.hdt_step(fs, train, cfg, rng)
    mask = stats.harmonics
    assert mask.sum(axis=0).tolist() == [2, 2]
    np.testing.assert_array_equal(new.coeffs[~mask], fs.coeffs[~mask])
    assert np.any(new.coeffs[mask] != fs.coeffs[mask])


def test_update_is_global_in_time(series):
    # a frequency-domain step moves almost every time sample
    train = series[0]
    cfg = small_cfg(k=3)
    rng = np.random.default_rng(6)
    fs = D.init_synthetic(train, 16, rng)
    new, _ = D.hdt_step(fs, train, cfg, rng)
    changed = np.abs(spectral.irfft(new) - spectral.irfft(fs)) > 1e-12
    assert changed.mean() >= 0.9


def test_updated_spectrum_is_hermitian(series):
    train = series[0]
    rng = np.random.default_rng(7)
    fs = D.init_synthetic(train, 16, rng)
    for _ in range(3):
        fs, _ = D.hdt_step(fs, train, small_cfg(k=9, exclude_dc=False), rng)
        assert fs.coeffs[0].imag.tolist() == [0.0, 0.0]
        assert fs.coeffs[8].imag.tolist() == [0.0, 0.0]


def test_single_harmonic_amplitude_converges():
    m = 16
    n = np.arange(m * 8)
    train = data.TimeSeries(2.0 * np.cos(2 * np.pi * 3 * n / m))
    cfg = small_cfg(k=1, lam=1.0, exclude_dc=True)
    rng = np.random.default_rng(0)
    fs = D.init_synthetic(train, m, rng)
    target = abs(fs.coeffs[3, 0])
    fs = spectral.Spectrum(fs.coeffs * 0.5, m)
    for _ in range(300):
        fs, _ = D.hdt_step(fs, train, cfg, rng)
    assert abs(fs.coeffs[3, 0]) == pytest.approx(target, rel=0.01)


def test_zero_outer_iterations_returns_init(series):
    train, val, _ = series
    cfg = small_cfg(outer_max_iters=0)
    res = D.distill(train, val, cfg)
    init = D.init_synthetic(train, 16, np.random.default_rng(cfg.seed))
    np.testing.assert_allclose(res.synthetic.values, spectral.irfft(init), atol=1e-12)
    assert res.history == [] and res.snapshot_iteration == 0
    gm = D.baseline_window_gm(train, val, cfg)
    first = data.sample_subsequence(train, 16, np.random.default_rng(cfg.seed)).values
    np.testing.assert_array_equal(gm.synthetic.values, first)


def test_distill_bookkeeping_and_determinism(series):
    train, val, _ = series
    cfg = small_cfg(outer_max_iters=12, eval_every=4)
    a, b = D.distill(train, val, cfg), D.distill(train, val, cfg)
    np.testing.assert_array_equal(a.synthetic.values, b.synthetic.values)
    assert a.history == b.history
    assert len(a.history) == a.iterations_run == 12
    assert a.snapshot_iteration <= a.iterations_run
    assert [r["iteration"] for r in a.history if r["val_mse"] is not None] == [4, 8, 12]
    scored = [r["val_mse"] for r in a.history if r["val_mse"] is not None]
    assert a.best_val_mse <= min(scored)


def test_patience_stops_outer_loop(series):
    train, val, _ = series
    cfg = small_cfg(outer_max_iters=200, eval_every=1, patience=1, eta=0.0)
    res = D.distill(train, val, cfg)
    # eta=0 never improves on the initial snapshot
    assert res.iterations_run == 1 and res.snapshot_iteration == 0


def test_degenerate_denominator_is_counted():
    theta0 = fc.make_model("linear", 4, 2)
    X, Y = np.zeros((4, 5)), np.zeros((2, 5))
    counters = {}
    loss = D.grad_match_loss(theta0, (X, Y), (X, Y), 2, 2, 0.1, counters=counters)
    assert np.isfinite(loss.item())
    assert counters["degenerate_denominator"] == 1


def test_too_short_training_split(series):
    train, val, _ = series
    with pytest.raises(SeriesTooShort):
        D.distill(train, val, small_cfg(M=train.n + 2))


def test_decomp_baseline_is_lambda_zero(series):
    train, val, _ = series
    cfg = small_cfg(outer_max_iters=3, eval_every=3)
    a = D.baseline_decomp(train, val, cfg)
    b = D.distill(train, val, small_cfg(outer_max_iters=3, eval_every=3, lam=0.0))
    np.testing.assert_array_equal(a.synthetic.values, b.synthetic.values)
    assert all(r["total"] == r["L_grad"] for r in a.history)


def test_window_gm_loss_decreases():
    ts = synth.generate(synth.fixture_spec())
    train = data.apply_norm(ts, data.fit_norm(ts))
    cfg = D.DistillConfig(M=64, lookback=8, horizon=8, backbone="linear", base_batch=16, inner_lr=0.01)
    firsts, lasts = [], []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        s = data.sample_subsequence(train, 64, rng).values.copy()
        losses = []
        for _ in range(50):
            theta0 = fc.make_model("linear", 8, 8, rng, 0.01)
            with ad.Tape() as tape:
                leaf = tape.leaf(s)
                loss = D.window_gm_loss(leaf, train.values, theta0, cfg, rng)
                g = ad.grad(loss, leaf)
            losses.append(loss.item())
            s = s - 0.05 * g
        firsts.append(np.mean(losses[:10]))
        lasts.append(np.mean(losses[-10:]))
    assert np.median(np.array(lasts) - np.array(firsts)) < 0
