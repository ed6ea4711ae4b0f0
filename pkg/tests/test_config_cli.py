from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from frontstab.cli import emit_report, main
from frontstab.config import (
    ConfigError,
    config_hash,
    parse_config,
    serialize_config,
)
from frontstab.pipeline import load_manifest, manifest_hash, run_pipeline

FAST_CONFIG = """
[profile]
x_max = 20.0
n_points = 1001

[experiment]
e0 = 0.01
t_end = 12.0
snapshot_dt = 0.1

[green]
t_values = 0.5, 1.5, 3.0
bound_t_values = 0.2, 0.5, 1.0, 2.0, 4.0
x_half_width = 14.0
x_stride = 30
y_values = -3.0, 0.0, 3.0
"""


def test_empty_text_gives_defaults():
    cfg = parse_config("")
    assert cfg["system"]["name"] == "bistable"
    assert cfg["profile"]["x_max"] == 30.0
    assert cfg["profile"]["n_points"] == 3001
    assert cfg["run"]["seed"] == 0


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        parse_config("[profile]\nwidth = 3\n")
    with pytest.raises(ConfigError):
        parse_config("[nosuchsection]\nx = 1\n")


def test_eta0_factor_validation():
    with pytest.raises(ConfigError):
        parse_config("[spectral]\neta0_factor = 1.5\n")
    cfg = parse_config("[spectral]\neta0_factor = 0.5\n")
    assert cfg["spectral"]["eta0_factor"] == 0.5


def test_roundtrip_serialization():
    cfg = parse_config(FAST_CONFIG)
    text = serialize_config(cfg)
    cfg2 = parse_config(text)
    assert cfg == cfg2
    assert config_hash(cfg) == config_hash(cfg2)


def test_config_builds_system_and_grid():
    cfg = parse_config("")
    sys_ = cfg.build_system()
    assert sys_.name == "bistable"
    grid = cfg.build_grid()
    assert grid.N == 3001
    poly = parse_config(
        "[system]\nkind = polynomial\nname = cubic\n"
        "components = [[(-1.0, (3,)), (1.5, (2,)), (-0.5, (1,))]]\n"
        "u_minus = 1.0\nu_plus = 0.0\n").build_system()
    assert poly.n == 1
    assert poly.f_batch(np.array([[0.5]]))[0, 0] == pytest.approx(0.0)


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runA")
    cfg = parse_config(FAST_CONFIG)
    manifest = run_pipeline(cfg, out, stages=["profile", "spectral"])
    return cfg, out, manifest


def test_pipeline_stage_subset(pipeline_run):
    _, out, manifest = pipeline_run
    assert set(manifest["stages"]) == {"profile", "spectral"}
    assert (out / "profile" / "profile.csv").exists()
    assert (out / "spectral" / "spectral.json").exists()
    assert "green/bound_fits.json" not in manifest["files"]


def test_pipeline_cache_hit(pipeline_run):
    cfg, out, manifest = pipeline_run
    again = run_pipeline(cfg, out, stages=["profile", "spectral"])
    assert again["stages"]["profile"] == "cached"
    assert again["stages"]["spectral"] == "cached"
    assert again["manifest_hash"] == manifest["manifest_hash"]


def test_pipeline_determinism_fresh_dir(pipeline_run, tmp_path):
    cfg, _, manifest = pipeline_run
    other = run_pipeline(cfg, tmp_path / "runB", stages=["profile", "spectral"])
    assert other["manifest_hash"] == manifest["manifest_hash"]
    # artifacts identical byte for byte
    assert other["files"] == manifest["files"]


def test_cache_invalidation_on_config_change(tmp_path):
    import copy

    cfg = parse_config(FAST_CONFIG.replace("n_points = 1001", "n_points = 601"))
    out = tmp_path / "inval"
    run_pipeline(cfg, out, stages=["profile"])
    cached = run_pipeline(cfg, out, stages=["profile"])
    assert cached["stages"]["profile"] == "cached"
    cfg2 = copy.deepcopy(cfg)
    cfg2["profile"]["tol"] = 1e-9
    manifest2 = run_pipeline(cfg2, out, stages=["profile"])
    assert manifest2["stages"]["profile"] == "computed"


def test_stage_isolation_bitwise(pipeline_run):
    # deleting a later stage and rerunning reproduces it bit-identically
    # without recomputing the earlier one
    cfg, out, manifest = pipeline_run
    digest_before = manifest["files"]["spectral/spectral.json"]
    for f in (out / "spectral").iterdir():
        f.unlink()
    again = run_pipeline(cfg, out, stages=["profile", "spectral"])
    assert again["stages"]["profile"] == "cached"
    assert again["stages"]["spectral"] == "computed"
    assert again["files"]["spectral/spectral.json"] == digest_before


def test_emit_report(pipeline_run):
    _, out, manifest = pipeline_run
    path = emit_report(manifest, out)
    text = path.read_text()
    assert "| profile_residual | PASS |" in text
    assert "stage green | not run" in text
    assert (out / "plot_green.py").exists()
    assert (out / "plot_nonlinear.py").exists()


def test_cli_profile_stage(tmp_path):
    cfg_path = tmp_path / "fast.ini"
    cfg_path.write_text(FAST_CONFIG)
    code = main(["profile", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
    assert code == 0
    assert (tmp_path / "o" / "manifest.json").exists()
    assert (tmp_path / "o" / "report.md").exists()


def test_cli_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[spectral]\neta0_factor = 2.0\n")
    assert main(["profile", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_cli_report_subcommand(tmp_path):
    cfg_path = tmp_path / "fast.ini"
    cfg_path.write_text(FAST_CONFIG)
    out = tmp_path / "o"
    assert main(["profile", "--config", str(cfg_path), "--out", str(out)]) == 0
    assert main(["report", "--config", str(cfg_path), "--out", str(out)]) == 0


def test_manifest_hash_excludes_timings(pipeline_run):
    _, _, manifest = pipeline_run
    import copy

    clone = copy.deepcopy(manifest)
    clone["timings"] = {k: v * 2 for k, v in clone["timings"].items()}
    assert manifest_hash(clone) == manifest["manifest_hash"]
