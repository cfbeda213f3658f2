"""Experiment runner: config resolution, artifacts, determinism, exit codes."""

import csv
import json
import math

import numpy as np
import pytest

from workqed.cli import (
    ExperimentConfig,
    main,
    resolve_config,
    run,
)
from workqed.errors import ConfigError
from workqed.model import ModelParams


def _write_config(tmp_path, name="cfg.json", **values):
    path = tmp_path / name
    path.write_text(json.dumps(values))
    return str(path)


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


# ---------------------------------------------------------------------------
# Config resolution
# ---------------------------------------------------------------------------

def test_layering_preset_file_cli():
    cfg = resolve_config({"preset": "crooks", "du": 0.5}, {"seed": 9})
    assert cfg.u_max == 120.0          # preset default
    assert cfg.du == 0.5               # file overrides preset
    assert cfg.seed == 9               # CLI flag
    over = resolve_config({"preset": "crooks", "du": 0.5}, {"du": 0.25})
    assert over.du == 0.25             # CLI overrides file


def test_model_params_flow_through():
    cfg = resolve_config({"preset": "oracle-only", "n_fock": 12, "g2": 0.4}, {})
    assert cfg.params.n_fock == 12
    assert cfg.params.g2 == 0.4


def test_unknown_keys_and_types_rejected():
    with pytest.raises(ConfigError, match="unknown config key"):
        resolve_config({"preset": "crooks", "bogus": 1}, {})
    with pytest.raises(ConfigError, match="must be a number"):
        resolve_config({"preset": "crooks", "u_max": "big"}, {})
    with pytest.raises(ConfigError, match="no preset"):
        resolve_config({}, {})
    with pytest.raises(ConfigError, match="unknown preset"):
        resolve_config({"preset": "fig9"}, {})


def test_config_collects_all_errors():
    with pytest.raises(ConfigError) as err:
        ExperimentConfig(preset="fig9", params=ModelParams(), u_max=-1.0,
                         window="boxcar", n_workers=0)
    msg = str(err.value)
    for frag in ("fig9", "window", "positive", "n_workers"):
        assert frag in msg


def test_u_grid_shape():
    cfg = ExperimentConfig(preset="crooks", params=ModelParams(),
                           u_max=1.0, du=0.25)
    np.testing.assert_allclose(cfg.u_grid(), [0.0, 0.25, 0.5, 0.75, 1.0])


# ---------------------------------------------------------------------------
# Entry point / exit codes
# ---------------------------------------------------------------------------

def test_exit_code_2_on_config_errors(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 2
    assert main(["run", _write_config(tmp_path, preset="nope")]) == 2
    listy = tmp_path / "list.json"
    listy.write_text("[1, 2]")
    assert main(["run", str(listy)]) == 2
    capsys.readouterr()


def test_exit_code_3_on_guard_abort(tmp_path, capsys):
    # A truncation this small cannot hold the thermal state.
    cfg = _write_config(tmp_path, preset="oracle-only", n_fock=5,
                        out=str(tmp_path / "out"))
    assert main(["run", cfg]) == 3
    assert "guard" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def oracle_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("oracle")
    cfg = _write_config(base, preset="oracle-only", out=str(base / "out"),
                        u_max=30.0, du=0.5, n_fock=24)
    assert main(["run", cfg]) == 0
    return base / "out"


def test_oracle_artifacts_and_manifest(oracle_run):
    manifest = json.loads((oracle_run / "manifest.json").read_text())
    assert manifest["schema_version"] == 1
    assert manifest["parameters"]["preset"] == "oracle-only"
    assert manifest["parameters"]["n_fock"] == 24
    assert manifest["guard_pop_max"] <= 1e-6
    assert set(manifest["files"]) <= {p.name for p in oracle_run.iterdir()}
    peaks = _read_csv(oracle_run / "oracle_peaks.csv")
    total = sum(float(r["prob"]) for r in peaks)
    assert total == pytest.approx(1.0, abs=1e-8)
    report = json.loads((oracle_run / "ft_report.json").read_text())
    assert report["jarzynski_oracle"] == pytest.approx(1.0, abs=1e-4)


def test_constant_protocol_single_peak(tmp_path):
    cfg = _write_config(tmp_path, preset="oracle-only", out=str(tmp_path / "out"),
                        v=0.0, u_max=30.0, du=0.5, n_fock=24)
    assert main(["run", cfg]) == 0
    peaks = _read_csv(tmp_path / "out" / "oracle_peaks.csv")
    heavy = [(float(r["w"]), float(r["prob"])) for r in peaks
             if float(r["prob"]) > 1e-10]
    assert len(heavy) == 1
    assert heavy[0][0] == pytest.approx(0.0, abs=1e-12)
    # The guard-level exclusion books ~1e-9 of thermal tail as leakage.
    assert heavy[0][1] == pytest.approx(1.0, abs=1e-8)


def test_fixed_seed_byte_identical_data(tmp_path):
    outs = []
    for name in ("a", "b"):
        cfg = _write_config(tmp_path, name=f"{name}.json", preset="oracle-only",
                            out=str(tmp_path / name), u_max=20.0, du=0.5,
                            n_fock=24, seed=42, shots=2000)
        assert main(["run", cfg]) == 0
        outs.append(tmp_path / name)
    names = sorted(p.name for p in outs[0].iterdir())
    assert names == sorted(p.name for p in outs[1].iterdir())
    for n in names:
        if n == "manifest.json":      # carries wall time by design
            continue
        assert (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes(), n


def test_schedule_artifacts(tmp_path):
    cfg = _write_config(tmp_path, preset="fig3-drives", out=str(tmp_path / "out"))
    assert main(["run", cfg]) == 0
    chis = _read_csv(tmp_path / "out" / "chi_schedules.csv")
    eps = _read_csv(tmp_path / "out" / "eps_schedules.csv")
    assert len(chis) == len(eps) == 1201
    first = eps[0]
    # At t=0 the sum splitting is 2 g1^2 / (2 lambda0) = 100 and the
    # difference splitting sits at the ceiling.
    assert float(first["eps1"]) == pytest.approx(100.0)
    assert abs(float(first["eps2"])) == pytest.approx(100.0)
    c0 = chis[0]
    assert float(c0["chi_plus"]) == pytest.approx(0.0625)
    assert float(c0["chi_minus"]) == pytest.approx(0.0625)
