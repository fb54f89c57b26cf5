import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from alphadynamo.errors import DegenerateAlpha, ValidationError
from alphadynamo.fields import TorusSpec, dumps_field, random_field
from alphadynamo.pipeline import (PipelineConfig, StageError, abc_flow, dumps, load_config,
                                  load_flow, preset_flow, presets, run_pipeline)


def cheap_config(tmp: Path, name: str) -> PipelineConfig:
    # radius-1 flow with a growing sector on the 2x2x2 box; every stage runs in seconds
    U = random_field(TorusSpec((1, 1, 1), 1), 1, np.random.default_rng(5), amplitude=2.0)
    flow = tmp / "flow.json"
    flow.write_text(dumps_field(U))
    text = f"""
        flow = {flow}
        K = 3
        eps_list = 1/32, 1/64, 1/128
        evolve_eps = 1/2
        evolve_K = 2
        evolve_r_m = 20
        evolve_r_e = 0.4
        delta_list = 1e-2, 1e-3, 1e-4
        horizon = 40
        output = {tmp / name}
    """
    return load_config(text)


def test_presets():
    assert set(presets()) == {"zero", "abc-like", "vfields(j)"}
    assert not np.any(preset_flow("zero").coeffs)
    U = preset_flow("abc-like", 2)
    assert U.is_real() and U.divergence_defect() < 1e-14
    V = preset_flow("vfields(2)", 3)
    assert V.K == 5 and V.support_radius() == 5
    with pytest.raises(ValidationError):
        preset_flow("roberts")
    with pytest.raises(ValidationError):
        load_flow("/nonexistent/flow.json")


def test_abc_is_beltrami():
    from alphadynamo.fields import curl
    U = abc_flow(2)
    assert np.abs(curl(U).coeffs - 2 * np.pi * U.coeffs).max() < 1e-12


def test_config_parsing():
    cfg = load_config("""
        # comment
        K = 6   # trailing comment
        xi_scale = 1/16
        eps_list = 1/8, 1/16
        evolve_xi = 1, 1/2, 1
        r_m = auto
    """)
    assert cfg.K == 6 and cfg.xi_scale == Fraction(1, 16) and cfg.eps_list == (0.125, 0.0625)
    assert cfg.evolve_xi == (Fraction(1), Fraction(1, 2), Fraction(1)) and cfg.r_m is None
    assert load_config(cfg.to_text()) == cfg


@pytest.mark.parametrize("text", [
    "bogus = 1",
    "K = two",
    "K 3",
    "eps_list = 1/16, 1/8",
    "gap = -1",
    "delta_list = 1e-3, 0",
    "flow = /nonexistent.json",
    "evolve_xi = 1, 1",
])
def test_config_rejections(text):
    with pytest.raises(ValidationError):
        load_config(text)


def test_dumps_handles_numpy_and_complex():
    d = json.loads(dumps({"a": np.arange(3), "z": 1 + 2j, "f": Fraction(1, 3),
                          "x": np.float64(0.1)}))
    assert d["a"] == [0, 1, 2] and d["x"] == 0.1
    assert d["z"] == {"re": 1.0, "im": 2.0}


def test_zero_preset_halts_with_degenerate_alpha(tmp_path):
    cfg = load_config(f"flow = zero\nK = 2\noutput = {tmp_path / 'z'}")
    with pytest.raises(StageError) as info:
        run_pipeline(cfg)
    assert info.value.stage == "predict"
    assert isinstance(info.value.error, DegenerateAlpha)
    summary = json.loads((tmp_path / "z" / "summary.json").read_text())
    assert summary["failed_stage"] == "predict" and not summary["passed"]


def test_cheap_pipeline_passes_and_is_deterministic(tmp_path):
    rep1 = run_pipeline(cheap_config(tmp_path, "a"))
    rep2 = run_pipeline(cheap_config(tmp_path, "b"))
    assert rep1.passed, rep1.checks
    assert rep1.stages == ["perturb", "alpha", "predict", "bloch", "evolve"]
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in names:
        a = (tmp_path / "a" / name).read_text()
        b = (tmp_path / "b" / name).read_text()
        if name == "config.txt":
            a, b = (t.replace(str(tmp_path / x), "") for t, x in ((a, "a"), (b, "b")))
        assert a == b, name
    mode = json.loads((tmp_path / "a" / "mode.json").read_text())
    assert mode["rate"]["re"] > 0
    header = (tmp_path / "a" / "evolve_run_0.csv").read_text().splitlines()[0]
    assert header == "t,l2_norm,hs_norm,linear_ref_norm"
    assert rep2.to_dict()["checks"] == rep1.to_dict()["checks"]
