"""Run configuration: YAML file sections, environment and flag overrides.

Precedence, highest first: command-line flag, ``HDT_*`` environment
variable, config file, built-in default.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from . import synth
from .distill import DistillConfig
from .errors import ConfigError, MissingFile
from .gradcheck import GradcheckConfig

ENV_PREFIX = "HDT_"


@dataclass
class DataSection:
    path: str | None = None
    name: str | None = None
    timestamp_column: bool = False
    delimiter: str = ","
    split: list = field(default_factory=lambda: [0.6, 0.2, 0.2])

    @property
    def dataset_name(self) -> str:
        if self.name:
            return self.name
        return Path(self.path).stem if self.path else "data"


@dataclass
class EvalSection:
    methods: list = field(default_factory=lambda: ["random", "window_gm", "hdt", "full_data"])
    models: list = field(default_factory=lambda: ["linear"])
    repeats: int = 3
    timing: bool = False


@dataclass
class TheoremSection:
    epsilons: list = field(default_factory=lambda: [1e-3, 3e-3, 1e-2, 3e-2, 1e-1])
    K: int = 32
    trials: int = 20
    M: int = 512
    ar_phi: float = 0.8
    noise_scale: float = 1.0
    seed: int = 0
    min_spearman: float = 0.9
    bound_factor: float = 1.05


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    distill: DistillConfig = field(default_factory=DistillConfig)
    eval: EvalSection = field(default_factory=EvalSection)
    theorem: TheoremSection = field(default_factory=TheoremSection)
    gen: dict = field(default_factory=lambda: synth.spec_to_dict(synth.fixture_spec()))
    gradcheck: GradcheckConfig = field(default_factory=GradcheckConfig)
    method: str = "hdt"
    out: str = "runs"
    seed: int | None = None
    threads: int = 1

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "data": DataSection,
    "distill": DistillConfig,
    "eval": EvalSection,
    "theorem": TheoremSection,
    "gradcheck": GradcheckConfig,
}


def _build(cls, doc, where: str):
    if doc is None:
        return cls()
    if not isinstance(doc, dict):
        raise ConfigError(f"section {where!r} must be a mapping")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where!r}: {', '.join(unknown)}")
    return cls(**doc)


def from_dict(doc: dict | None) -> RunConfig:
    doc = dict(doc or {})
    top = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(doc) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in doc:
            kwargs[name] = _build(cls, doc.pop(name), name)
    if "gen" in doc:
        gen = doc.pop("gen")
        base = synth.spec_to_dict(synth.fixture_spec())
        if gen:
            base.update(gen)
        kwargs["gen"] = base
    kwargs.update(doc)
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such config file: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError(f"{path} must hold a mapping at the top level")
    return from_dict(doc)


# flag name -> (section, field); "inner-steps" sets both step counts
OVERRIDES = {
    "M": ("distill", "M"),
    "k": ("distill", "k"),
    "lambda": ("distill", "lam"),
    "eta": ("distill", "eta"),
    "p": ("distill", "p"),
    "inner_steps": ("distill", ("expert_steps", "student_steps")),
    "outer_iters": ("distill", "outer_max_iters"),
}


def apply_overrides(cfg: RunConfig, values: dict) -> RunConfig:
    """Overlay non-None ``values`` (flag or environment) on ``cfg``."""
    distill = cfg.distill
    for key, (section, target) in OVERRIDES.items():
        v = values.get(key)
        if v is None:
            continue
        targets = target if isinstance(target, tuple) else (target,)
        distill = replace(distill, **{t: v for t in targets})
    top = {k: values[k] for k in ("out", "seed", "threads", "method") if values.get(k) is not None}
    cfg = replace(cfg, distill=distill, **top)
    if values.get("data") is not None:
        cfg = replace(cfg, data=replace(cfg.data, path=values["data"]))
    return resolve_seed(cfg)


def resolve_seed(cfg: RunConfig) -> RunConfig:
    """A top-level seed, when given, seeds every section."""
    if cfg.seed is None:
        return cfg
    s = int(cfg.seed)
    gen = dict(cfg.gen, seed=s)
    return replace(
        cfg,
        distill=replace(cfg.distill, seed=s),
        theorem=replace(cfg.theorem, seed=s),
        gradcheck=replace(cfg.gradcheck, seed=s),
        gen=gen,
    )
