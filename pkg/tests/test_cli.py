import json

import numpy as np
import pytest

from paraexp_em.cli import (ConfigError, ExperimentConfig, PRESETS, apply_override, config_from,
                            emit_csv, main, preset_config)

SMALL = ["grid.counts=[11, 11, 2]", "reference_counts=[21, 21, 2]", "paraexp.p=3",
         "time.t_end=1e-7"]


def run_cli(tmp_path, *args):
    return main(list(args) + ["--output-dir", str(tmp_path)])


def test_presets_validate():
    for name in PRESETS:
        cfg = preset_config(name)
        assert cfg.preset == name
    wave = preset_config("wave2d")
    assert wave.grid.counts == [41, 41, 2] and wave.grid.lengths == [20.0, 20.0, 1.0]
    assert wave.source.i_max == 1.0 and wave.source.sigma_t == 2e-8
    assert (wave.time.t0, wave.time.t_end) == (0.0, 2e-7)
    assert preset_config("wave2d-ref").grid.counts == [121, 121, 2]


def test_round_trip():
    cfg = preset_config("energy", ["paraexp.eps_A=\"auto\"", "time.dt=1e-9", "threads=2"])
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg and again.to_dict() == cfg.to_dict()


def test_overrides():
    data = apply_override({}, "paraexp.p=4")
    apply_override(data, "source.kind=sine")
    assert data == {"paraexp": {"p": 4}, "source": {"kind": "sine"}}
    cfg = config_from(data)
    assert cfg.paraexp.p == 4 and cfg.source.kind == "sine"
    with pytest.raises(ConfigError):
        apply_override({}, "paraexp.p")


@pytest.mark.parametrize("bad", [{"grid": {"cells": 3}}, {"colour": 1}, {"paraexp": {"p": "six"}},
                                 {"paraexp": {"eps_A": 2.0}}, {"time": {"t_end": -1.0}},
                                 {"source": {"kind": "square"}}, {"probes": [[1.0, 2.0]]},
                                 {"grid": {"counts": [1, 5, 5]}}, {"method": "euler"},
                                 {"compare_serial": "yes"}])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        config_from(bad)


def test_emit_csv_format(tmp_path):
    path = emit_csv({"t": [0.0, 0.1], "E": [1.0 / 3.0, 2], "n": [np.int64(3), 4]}, tmp_path / "x.csv")
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode("utf-8").splitlines()
    assert lines[0] == "t,E,n"
    assert lines[1] == "0,0.33333333333333331,3"
    assert lines[2] == "0.10000000000000001,2,4"
    assert float(lines[1].split(",")[1]) == 1.0 / 3.0
    with pytest.raises(ValueError):
        emit_csv({"a": [1, 2], "b": [1]}, tmp_path / "y.csv")


def test_validate_verb(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "energy", "paraexp": {"p": 4}}))
    assert main(["validate", str(cfg)]) == 0
    cfg.write_text(json.dumps({"experiment": "energy", "paraexp": {"q": 4}}))
    assert main(["validate", str(cfg)]) == 2
    assert "paraexp.q" in capsys.readouterr().err
    cfg.write_text("{not json")
    assert main(["validate", str(cfg)]) == 2
    assert main(["validate", str(tmp_path / "missing.json")]) == 4


def test_simulation_outputs(tmp_path):
    assert run_cli(tmp_path, "preset", "wave2d", *sum((["--set", s] for s in SMALL), [])) == 0
    lines = (tmp_path / "probes.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert header[0] == "t" and len(header) == 5
    assert header[1].startswith("leapfrog_ez") and header[3].startswith("paraexp_ez")
    summary = json.loads((tmp_path / "summary.json").read_text())
    n_t = summary["result"]["n_t"]
    assert len(lines) == n_t + 2
    assert summary["result"]["leapfrog_smvp"] == 2 * n_t
    saved = json.loads((tmp_path / "config.json").read_text())
    assert ExperimentConfig.from_dict(saved).grid.counts == [11, 11, 2]


def test_run_verb_from_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "cost-nonuniform", "grid": {"counts": [11, 11, 2]},
                               "sweep": {"k": [1, 4]}, "time": {"t_end": 1e-7}}))
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
    lines = (out / "cost_nonuniform.csv").read_text().splitlines()
    assert lines[0] == "k,nt,smvp_leapfrog,smvp_leja,R" and len(lines) == 3


def test_divergence_exit_code(tmp_path, capsys):
    # on this coarse slab the cellwise estimate is conservative, so go well past it
    code = run_cli(tmp_path, "preset", "wave2d", "--set", "method=leapfrog",
                   "--set", "time.cfl_fraction=2.0", "--set", "grid.counts=[11, 11, 2]")
    assert code == 3
    assert "energy grew" in capsys.readouterr().err


def test_config_exit_code(tmp_path):
    assert run_cli(tmp_path, "preset", "wave2d", "--set", "paraexp.colour=1") == 2
    assert run_cli(tmp_path, "preset", "wave2d", "--threads", "-1") == 2


def test_io_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["preset", "cost-nonuniform", "--output-dir", str(blocker / "sub")]) == 4


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("PARAEXP_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["preset", "cost-nonuniform", "--set", "grid.counts=[9, 9, 2]",
                 "--set", "sweep.k=[1, 2]"]) == 0
    assert (tmp_path / "env" / "cost_nonuniform.csv").exists()


@pytest.mark.parametrize("preset, files", [("energy", ["energy_leapfrog.csv", "energy_paraexp.csv"]),
                                           ("spectrum", ["spectrum.csv"]),
                                           ("cost-uniform", ["cost_uniform.csv"]),
                                           ("wave2d", ["probes.csv"])])
def test_determinism_across_threads(tmp_path, preset, files):
    extra = sum((["--set", s] for s in SMALL + ["sweep.nx=[7, 9]", "sweep.nt=[20, 60]"]), [])
    assert run_cli(tmp_path / "a", "preset", preset, "--threads", "0", *extra) == 0
    assert run_cli(tmp_path / "b", "preset", preset, *extra) == 0
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / files[0]).read_text().splitlines()[0]
    expected = {"energy": "t,E", "spectrum": "f,magnitude_ref,magnitude_leapfrog,magnitude_paraexp",
                "cost-uniform": "nx,nt,smvp_leapfrog,smvp_leja"}
    if preset in expected:
        assert header == expected[preset]
