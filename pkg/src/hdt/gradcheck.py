"""Finite-difference checks of the full distillation objective.

``corrupted`` swaps one autodiff primitive for a copy whose backward pass is
scaled by 1.5; it exists so tests can confirm the check actually fails.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import distill as D
from . import forecaster as fc
from . import spectral
from .errors import ConfigError

CORRUPTIBLE = ("complex_magnitude", "irfft_map", "matmul", "moving_average", "l1_norm")


@dataclass
class GradcheckConfig:
    M: int = 16
    lookback: int = 4
    horizon: int = 4
    channels: int = 2
    expert_steps: int = 2
    student_steps: int = 2
    k: int = 4
    lam: float = 0.1
    p: int = 1
    backbone: str = "dlinear"
    instances: int = 20
    eps: float = 1e-5
    seed: int = 0


@contextmanager
def corrupted(name: str):
    if name not in CORRUPTIBLE:
        raise ConfigError(f"cannot corrupt {name!r}; choose from {', '.join(CORRUPTIBLE)}")
    original = getattr(ad, name)

    def bad(*args, **kwargs):
        out = original(*args, **kwargs)
        return ad._result(out.value, (out,), (lambda g: ad.scale(g, 1.5),))

    setattr(ad, name, bad)
    try:
        yield
    finally:
        setattr(ad, name, original)


def make_instance(cfg: GradcheckConfig, rng):
    """Random spectrum, real subsequence spectrum, mask and start model."""
    dcfg = D.DistillConfig(
        M=cfg.M, k=cfg.k, lam=cfg.lam, p=cfg.p, lookback=cfg.lookback, horizon=cfg.horizon,
        expert_steps=cfg.expert_steps, student_steps=cfg.student_steps, backbone=cfg.backbone,
    )
    dcfg.validate()
    x = rng.normal(size=(cfg.M, cfg.channels))
    s = rng.normal(size=(cfg.M, cfg.channels))
    fx = spectral.rfft(x).coeffs
    fs = spectral.rfft(s).coeffs
    mask = spectral.harmonic_mask(np.abs(fx), cfg.k)
    theta0 = fc.make_model(cfg.backbone, cfg.lookback, cfg.horizon, rng, 0.1)
    return dcfg, D.to_pairs(fs), fx, mask, theta0


def objective_errors(cfg: GradcheckConfig | None = None, corrupt: str | None = None) -> list[float]:
    """Max relative gradient error of the combined loss, one per instance."""
    cfg = cfg or GradcheckConfig()
    rng = np.random.default_rng(cfg.seed)
    errs = []
    for _ in range(cfg.instances):
        dcfg, pairs, fx, mask, theta0 = make_instance(cfg, rng)

        def f(v):
            return D.hdt_objective(v, fx, mask, theta0, dcfg)[0]

        if corrupt:
            with corrupted(corrupt):
                errs.append(ad.grad_check(f, pairs, cfg.eps))
        else:
            errs.append(ad.grad_check(f, pairs, cfg.eps))
    return errs
