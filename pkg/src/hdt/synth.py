"""Sine-mixture series with optional white or AR(1) noise."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import TimeSeries
from .errors import InvalidSpec


@dataclass
class Component:
    amplitude: float
    bin: float | None = None
    period: float | None = None
    phase: float = 0.0

    def frequency(self, n: int, allow_off_bin: bool) -> float:
        """Cycles per ``n`` samples."""
        if (self.bin is None) == (self.period is None):
            raise InvalidSpec("a component needs exactly one of bin or period")
        f = float(self.bin) if self.bin is not None else n / float(self.period)
        if not allow_off_bin and abs(f - round(f)) > 1e-9:
            raise InvalidSpec(f"frequency {f} is not an integer bin; set off_bin to allow it")
        return f


@dataclass
class SineMixSpec:
    length: int
    channels: int = 1
    components: list = field(default_factory=list)
    noise_kind: str = "none"
    noise_scale: float = 0.0
    ar_phi: float = 0.0
    seed: int = 0
    off_bin: bool = False

    def validate(self) -> None:
        if self.length < 2:
            raise InvalidSpec(f"length must be >= 2, got {self.length}")
        if self.channels < 1:
            raise InvalidSpec("channels must be >= 1")
        if self.noise_kind not in ("none", "white", "ar1"):
            raise InvalidSpec(f"unknown noise kind {self.noise_kind!r}")
        if self.noise_scale < 0:
            raise InvalidSpec("noise_scale must be nonnegative")
        if not abs(self.ar_phi) < 1:
            raise InvalidSpec("|ar_phi| must be < 1 for a stationary process")
        for comp in self.components:
            if comp.amplitude < 0:
                raise InvalidSpec("component amplitudes must be nonnegative")
            comp.frequency(self.length, self.off_bin)

    @classmethod
    def from_dict(cls, doc: dict) -> "SineMixSpec":
        doc = dict(doc)
        comps = []
        for c in doc.pop("components", []):
            if isinstance(c, Component):
                comps.append(c)
            elif isinstance(c, dict):
                comps.append(Component(**c))
            else:
                b, a, *rest = c
                comps.append(Component(amplitude=a, bin=b, phase=rest[0] if rest else 0.0))
        try:
            return cls(components=comps, **doc)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from None


def ar1_noise(n: int, channels: int, phi: float, scale: float, rng) -> np.ndarray:
    """AR(1) noise started from its stationary distribution."""
    w = rng.normal(0.0, scale, size=(n, channels))
    e = np.empty_like(w)
    e[0] = w[0] / np.sqrt(1.0 - phi * phi)
    for i in range(1, n):
        e[i] = phi * e[i - 1] + w[i]
    return e


def generate(spec: SineMixSpec) -> TimeSeries:
    spec.validate()
    n, c = spec.length, spec.channels
    rng = np.random.default_rng(spec.seed)
    t = np.arange(n)
    signal = np.zeros(n)
    for comp in spec.components:
        f = comp.frequency(n, spec.off_bin)
        signal += comp.amplitude * np.cos(2 * np.pi * f * t / n + comp.phase)
    values = np.repeat(signal[:, None], c, axis=1)
    if spec.noise_kind == "white" and spec.noise_scale > 0:
        values = values + rng.normal(0.0, spec.noise_scale, size=(n, c))
    elif spec.noise_kind == "ar1" and spec.noise_scale > 0:
        values = values + ar1_noise(n, c, spec.ar_phi, spec.noise_scale, rng)
    return TimeSeries(values)


def fixture_spec(seed: int = 1) -> SineMixSpec:
    """Three on-bin harmonics plus AR(1) noise over 8192 samples."""
    return SineMixSpec(
        length=8192,
        channels=1,
        components=[
            Component(1.0, bin=64),
            Component(0.6, bin=256, phase=1.0),
            Component(0.4, bin=512, phase=2.0),
        ],
        noise_kind="ar1",
        noise_scale=0.3,
        ar_phi=0.5,
        seed=seed,
    )


def spec_to_dict(spec: SineMixSpec) -> dict:
    doc = {k: getattr(spec, k) for k in ("length", "channels", "noise_kind", "noise_scale", "ar_phi", "seed", "off_bin")}
    doc["components"] = [
        {k: v for k, v in vars(c).items() if v is not None} for c in spec.components
    ]
    return doc
