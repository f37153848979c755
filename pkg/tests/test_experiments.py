import json
import subprocess
import sys

import numpy as np
import pytest

from surrofem import experiments, mcmc
from surrofem.cli import main as cli_main
from surrofem.experiments import (
    ConfigError,
    MissingArtifact,
    default_config,
    load_config,
    quantiles_linear,
    run_analysis,
    run_full,
    run_preprocess,
    run_sampling,
    verify_design,
)


def tiny_overrides(out_dir, iters=2500, level=1):
    return {
        "experiment": "conductivity",
        "output_dir": str(out_dir),
        "design": {"level": level},
        "mesh": {"target_h": 0.2, "refinements": 0},
        "sampler": {"iterations": iters, "burn_in": 500, "seeds": [3]},
    }


# ---------------------------------------------------------------------------
# configuration


def test_defaults_exist_for_all_experiments():
    for name in ("conductivity", "radius", "anomaly"):
        cfg = load_config(name)
        assert cfg.experiment == name
        assert cfg.sigma == 0.01


def test_paper_scale_defaults():
    cond = load_config("conductivity")
    assert cond.true_parameter[0] == 3.2 and cond.m == 10 and cond.k == 2
    assert cond.physics["inclusion_radius"] == 0.85
    rad = load_config("radius")
    assert rad.true_parameter[0] == 0.725 and rad.physics["contrast"] == 6.0
    anom = load_config("anomaly")
    assert list(anom.true_parameter) == [2.5, -3.1] and anom.m == 20 and anom.k == 3
    assert anom.physics["anomaly_radius"] == 0.25 and anom.physics["pde_radius"] == 5.0


def test_config_merge_and_overrides(tmp_path):
    cfg = load_config(tiny_overrides(tmp_path / "o"), seed=99, output_dir=tmp_path / "a")
    assert cfg.sampler["seeds"] == [99]
    assert cfg.output_dir == tmp_path / "a"
    assert cfg.sampler["burn_in"] == 500
    assert cfg.eta == 1e-8  # untouched default


@pytest.mark.parametrize(
    "patch",
    [
        {"experiment": "nope"},
        {"experiment": "conductivity", "sigma": -1},
        {"experiment": "conductivity", "design": {"kind": "weird"}},
        {"experiment": "conductivity", "design": {"level": 0}},
        {"experiment": "conductivity", "sampler": {"burn_in": 10_000_000}},
        {"experiment": "conductivity", "true_parameter": [55.0]},
        {"experiment": "conductivity", "unknown_key": 1},
        {"experiment": "anomaly", "reference": "oracle"},
        {"experiment": "conductivity", "sampler": {"x0": [1.0, 2.0]}},
    ],
)
def test_config_validation_errors(patch):
    with pytest.raises(ConfigError):
        load_config(patch)


def test_config_from_yaml_file(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("experiment: radius\ndesign:\n  level: 2\n")
    cfg = load_config(path)
    assert cfg.experiment == "radius"
    assert cfg.design["level"] == 2
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("experiment: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)


# ---------------------------------------------------------------------------
# pipeline stages


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipeline")
    cfg = load_config(tiny_overrides(out))
    result = run_full(cfg)
    return cfg, result


def test_run_full_produces_artifacts(tiny_run):
    cfg, result = tiny_run
    assert (cfg.output_dir / "store.bin").exists()
    assert (cfg.output_dir / "data.txt").exists()
    assert (cfg.output_dir / "chain_surrogate_seed3.txt").exists()
    assert (cfg.output_dir / "chain_oracle_seed3.txt").exists()
    assert (cfg.output_dir / "analysis" / "report.json").exists()
    assert (cfg.output_dir / "analysis" / "report.txt").exists()
    assert (cfg.output_dir / "analysis" / "tv_table.csv").exists()
    report = result["report"]
    assert "surrogate_seed3" in report["chains"]
    assert report["tv_table"]


def test_store_row_count_tracks_design_level(tiny_run, tmp_path):
    cfg, _ = tiny_run
    from surrofem.surrogate import load_store

    store, fields = load_store(cfg.output_dir / "store.bin")
    assert store.n == 2**cfg.design["level"] + 1
    assert store.m == cfg.m


def test_rerun_is_idempotent_then_identical_with_force(tiny_run):
    cfg, _ = tiny_run
    chain_file = cfg.output_dir / "chain_surrogate_seed3.txt"
    store_file = cfg.output_dir / "store.bin"
    before_chain = chain_file.read_bytes()
    before_store = store_file.read_bytes()
    out = run_preprocess(cfg)  # no force: skipped
    assert out["skipped"]
    run_full(cfg, force=True)
    assert chain_file.read_bytes() == before_chain
    assert store_file.read_bytes() == before_store


def test_report_numbers_deterministic(tiny_run):
    cfg, _ = tiny_run
    report_path = cfg.output_dir / "analysis" / "report.json"
    before = report_path.read_bytes()
    run_analysis(cfg)
    assert report_path.read_bytes() == before


def test_sampling_without_store_raises(tmp_path):
    cfg = load_config(tiny_overrides(tmp_path / "nostore"))
    with pytest.raises(MissingArtifact):
        run_sampling(cfg)


def test_analysis_without_chains_raises(tmp_path):
    cfg = load_config(tiny_overrides(tmp_path / "nochain"))
    with pytest.raises(MissingArtifact):
        run_analysis(cfg)


def test_identical_chains_have_zero_tv(tiny_run):
    cfg, _ = tiny_run
    chain = mcmc.load_chain(cfg.output_dir / "chain_surrogate_seed3.txt")
    assert mcmc.histogram_tv(chain, chain, bins=50, support=(0, 10)) == 0.0


def test_quantiles_linear_definition():
    samples = np.arange(1, 1001, dtype=float)
    q = quantiles_linear(samples, [0.05, 0.5, 0.95])
    assert np.allclose(q, [50.95, 500.5, 950.05], atol=1e-12)


def test_fem_reference_clamped(tmp_path):
    over = tiny_overrides(tmp_path / "femloop", iters=2500)
    over["reference"] = "fem"
    cfg = load_config(over)
    run_preprocess(cfg)
    out = run_sampling(cfg)
    chain = mcmc.load_chain(cfg.output_dir / "chain_fem_seed3.txt")
    assert len(chain.samples) - 1 == cfg.fem_in_loop_max


def test_verify_design_report(tmp_path):
    cfg = load_config(tiny_overrides(tmp_path / "vd", level=4))
    rep = verify_design(cfg, eps=0.625)
    assert rep.max_kth_g == 0.625
    assert rep.passed


def test_anomaly_pipeline_smoke(tmp_path):
    cfg = load_config(
        {
            "experiment": "anomaly",
            "output_dir": str(tmp_path / "anom"),
            "design": {"kind": "grid", "spacing": 1.9},
            "mesh": {"target_h": 0.7, "refinements": 0},
            "sampler": {"iterations": 1500, "burn_in": 300, "seeds": [2]},
        }
    )
    result = run_full(cfg)
    assert (cfg.output_dir / "analysis" / "reconstruction.csv").exists()
    rows = (cfg.output_dir / "analysis" / "reconstruction.csv").read_text().strip().splitlines()
    assert rows[0] == "c1,c2,radius"
    assert len(rows) > 1
    report = json.loads((cfg.output_dir / "analysis" / "report.json").read_text())
    assert report["reconstruction"]["disks"] == len(rows) - 1
    # two parameters reported
    entry = report["chains"]["surrogate_seed2"]
    assert set(entry["quantiles"]) == {"theta0", "theta1"}


# ---------------------------------------------------------------------------
# CLI


def test_cli_oracle_values(capsys):
    rc = cli_main(["oracle", "--rho", "3.2", "--radius", "0.85", "--m", "4"])
    out = capsys.readouterr().out.strip().splitlines()
    assert rc == 0
    assert out[0] == "theta value"
    assert len(out) == 5
    first = float(out[1].split()[1])
    assert first == pytest.approx(0.17819713156842962, abs=1e-15)


def test_cli_exit_codes(tmp_path):
    bad_cfg = tmp_path / "bad.yaml"
    bad_cfg.write_text("experiment: unknown\n")
    assert cli_main(["run", "--config", str(bad_cfg)]) == 2

    ok_cfg = tmp_path / "ok.yaml"
    ok_cfg.write_text(
        "experiment: conductivity\n"
        f"output_dir: {tmp_path / 'cliout'}\n"
        "design: {level: 1}\n"
        "mesh: {target_h: 0.3, refinements: 0}\n"
        "sampler: {iterations: 800, burn_in: 100, seeds: [4]}\n"
    )
    # sample before preprocess: missing artifact -> numeric failure code
    assert cli_main(["sample", "--config", str(ok_cfg)]) == 3
    assert cli_main(["preprocess", "--config", str(ok_cfg)]) == 0
    assert cli_main(["sample", "--config", str(ok_cfg)]) == 0
    assert cli_main(["analyze", "--config", str(ok_cfg)]) == 0
    assert cli_main(["verify-design", "--config", str(ok_cfg)]) == 0


def test_cli_entry_point_subprocess(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "surrofem.cli", "oracle", "--rho", "6.0", "--radius", "0.725", "--m", "3"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "theta value" in proc.stdout


def test_cli_seed_override(tmp_path):
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(
        "experiment: conductivity\n"
        f"output_dir: {tmp_path / 'seedout'}\n"
        "design: {level: 1}\n"
        "mesh: {target_h: 0.3, refinements: 0}\n"
        "reference: none\n"
        "sampler: {iterations: 600, burn_in: 100, seeds: [4]}\n"
    )
    assert cli_main(["run", "--config", str(cfg_path), "--seed", "17"]) == 0
    assert (tmp_path / "seedout" / "chain_surrogate_seed17.txt").exists()
