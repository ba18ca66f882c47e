import numpy as np
import pytest

from hdt import spectral, synth
from hdt.errors import InvalidSpec


def lag1_ratio(x):
    d = x - x.mean()
    return np.dot(d[:-1], d[1:]) / np.dot(d, d)


def test_single_tone_is_one_bin():
    spec = synth.SineMixSpec(64, 1, [synth.Component(1.0, bin=4)])
    psd = spectral.periodogram(synth.generate(spec).values[:, 0]).values
    assert np.argmax(psd) == 4
    assert np.sum(np.delete(psd, 4)) < 1e-20


def test_amplitudes_exact_without_noise():
    comps = [synth.Component(1.5, bin=3, phase=0.4), synth.Component(0.25, period=8)]
    ts = synth.generate(synth.SineMixSpec(128, 2, comps))
    amp = np.abs(spectral.rfft(ts.values).coeffs) * 2 / 128
    np.testing.assert_allclose(amp[3], [1.5, 1.5], atol=1e-12)
    np.testing.assert_allclose(amp[16], [0.25, 0.25], atol=1e-12)
    assert np.max(np.delete(amp, [3, 16], axis=0)) < 1e-12


def test_white_ar0_has_no_lag_one_correlation():
    x = synth.generate(synth.SineMixSpec(4096, noise_kind="ar1", noise_scale=1.0, ar_phi=0.0, seed=11)).values[:, 0]
    assert abs(lag1_ratio(x)) < 0.1


@pytest.mark.parametrize("seed", range(5))
def test_ar1_lag_one_ratio(seed):
    x = synth.generate(synth.SineMixSpec(8192, noise_kind="ar1", noise_scale=1.0, ar_phi=0.8, seed=seed)).values[:, 0]
    assert lag1_ratio(x) == pytest.approx(0.8, abs=0.05)


def test_seed_determinism():
    spec = synth.fixture_spec(seed=4)
    a, b = synth.generate(spec), synth.generate(synth.fixture_spec(seed=4))
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, synth.generate(synth.fixture_spec(seed=5)).values)


@pytest.mark.parametrize(
    "kw",
    [
        dict(length=1),
        dict(length=16, ar_phi=1.0),
        dict(length=16, noise_kind="pink"),
        dict(length=16, components=[synth.Component(-1.0, bin=2)]),
        dict(length=16, components=[synth.Component(1.0, period=3)]),
        dict(length=16, components=[synth.Component(1.0)]),
    ],
)
def test_invalid_specs(kw):
    with pytest.raises(InvalidSpec):
        synth.generate(synth.SineMixSpec(**kw))


def test_off_bin_allowed_behind_flag():
    spec = synth.SineMixSpec(16, components=[synth.Component(1.0, period=3)], off_bin=True)
    assert synth.generate(spec).n == 16


def test_dict_roundtrip():
    spec = synth.fixture_spec(seed=2)
    back = synth.SineMixSpec.from_dict(synth.spec_to_dict(spec))
    np.testing.assert_array_equal(synth.generate(back).values, synth.generate(spec).values)
    short = synth.SineMixSpec.from_dict({"length": 32, "components": [[4, 1.0], [2, 0.5, 1.0]]})
    assert short.components[1].phase == 1.0
    with pytest.raises(InvalidSpec):
        synth.SineMixSpec.from_dict({"length": 32, "colour": "red"})
