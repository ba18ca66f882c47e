import pytest

from hdt import config as C
from hdt.errors import ConfigError, MissingFile


def write(tmp_path, text):
    p = tmp_path / "run.yaml"
    p.write_text(text)
    return p


def test_defaults():
    cfg = C.load_config(None)
    assert cfg.distill.M == 384 and cfg.distill.harmonics == 96
    assert cfg.method == "hdt" and cfg.eval.repeats == 3


def test_file_overrides_default(tmp_path):
    cfg = C.load_config(write(tmp_path, "distill:\n  M: 192\n  lam: 0.5\neval:\n  repeats: 1\n"))
    assert cfg.distill.M == 192 and cfg.distill.lam == 0.5 and cfg.eval.repeats == 1
    assert cfg.distill.eta == 0.01


def test_flag_overrides_file(tmp_path):
    cfg = C.load_config(write(tmp_path, "distill:\n  M: 192\n  k: 8\n"))
    cfg = C.apply_overrides(cfg, {"M": 96, "k": None, "lambda": 2.0, "inner_steps": 5, "outer_iters": 7})
    d = cfg.distill
    assert (d.M, d.k, d.lam, d.expert_steps, d.student_steps, d.outer_max_iters) == (96, 8, 2.0, 5, 5, 7)


def test_top_level_seed_reaches_every_section(tmp_path):
    cfg = C.load_config(write(tmp_path, "seed: 9\ndistill:\n  seed: 1\n"))
    cfg = C.resolve_seed(cfg)
    assert cfg.distill.seed == cfg.theorem.seed == cfg.gradcheck.seed == cfg.gen["seed"] == 9
    cfg = C.apply_overrides(cfg, {"seed": 4})
    assert cfg.distill.seed == 4


def test_gen_section_merges_into_fixture(tmp_path):
    cfg = C.load_config(write(tmp_path, "gen:\n  length: 64\n"))
    assert cfg.gen["length"] == 64 and len(cfg.gen["components"]) == 3


@pytest.mark.parametrize(
    "text", ["distill:\n  bogus: 1\n", "nonsense: 1\n", "- a\n- b\n", "distill: [1, 2]\n", "distill: {M: 1\n"]
)
def test_bad_files(tmp_path, text):
    with pytest.raises(ConfigError):
        C.load_config(write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(MissingFile):
        C.load_config(tmp_path / "absent.yaml")


def test_empty_file_gives_defaults(tmp_path):
    assert C.load_config(write(tmp_path, "")).distill.M == 384
