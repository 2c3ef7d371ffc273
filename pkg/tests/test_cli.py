"""Scenario validation, subcommand behavior, and exit codes."""

import json

import numpy as np
import pytest

from hamflow import mesh
from hamflow.action import builtin_field, write_field_csv
from hamflow.cli import Scenario, ScenarioError, main


def _write_scenario(path, data):
    path.write_text(json.dumps(data, indent=1) + "\n")
    return path


def _torus_scenario(tmp_path, generators, **extra):
    data = {
        "version": 1,
        "mesh": {"kind": "flat_torus", "n": 8, "m": 8},
        "generators": generators,
    }
    data.update(extra)
    return _write_scenario(tmp_path / "scenario.json", data)


# ---------------------------------------------------------------------------
# gen


def test_gen_icosphere(tmp_path, capsys):
    out = tmp_path / "sphere.off"
    assert main(["gen", "--icosphere", "3", "-o", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "V=642" in stdout
    assert f"wrote {out}" in stdout
    loaded = mesh.load_off(out)
    assert loaded.genus == 0


def test_gen_flat_torus_with_sidecar(tmp_path, capsys):
    out = tmp_path / "torus.off"
    assert main(["gen", "--flat-torus", "6", "4", "-o", str(out)]) == 0
    assert "V=24" in capsys.readouterr().out
    assert (tmp_path / "torus.off.json").exists()
    loaded = mesh.load_off(out)
    assert loaded.torus_periods == (6, 4)
    assert loaded.chart is not None


def test_gen_requires_exactly_one_mesh(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["gen", "-o", str(tmp_path / "x.off")])
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# analyze


def test_analyze_torus_pair(tmp_path, capsys):
    config = _torus_scenario(
        tmp_path,
        [{"kind": "torus_hamiltonian"}, {"kind": "torus_translation"}],
    )
    out = tmp_path / "out"
    assert main(["analyze", "--config", str(config), "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "torus_hamiltonian: Hamiltonian" in stdout
    assert "NonHamiltonian" in stdout

    payload = json.loads((out / "report.json").read_text())
    assert payload["mesh"]["genus"] == 1
    assert payload["harmonic_dimension"] == 2
    verdicts = [g["verdict"] for g in payload["generators"]]
    assert verdicts == ["Hamiltonian", "NonHamiltonian"]
    ref = payload["momentum"]["torus_hamiltonian"]
    assert (out / ref).exists()
    assert (out / "momentum.vtk").exists()
    assert payload["seed"] == 0


def test_analyze_sphere(tmp_path, capsys):
    config = _write_scenario(
        tmp_path / "s.json",
        {
            "version": 1,
            "mesh": {"kind": "icosphere", "subdivisions": 2},
            "generators": [{"kind": "sphere_polar_rotation"}],
        },
    )
    out = tmp_path / "out"
    assert main(["analyze", "--config", str(config), "--out", str(out)]) == 0
    assert "sphere_polar_rotation: Hamiltonian" in capsys.readouterr().out


def test_analyze_indeterminate_exit(tmp_path, capsys):
    config = _torus_scenario(tmp_path, [{"kind": "torus_translation"}])
    out = tmp_path / "out"
    code = main(
        [
            "analyze", "--config", str(config), "--out", str(out),
            "--tol-nonhamiltonian", "2.0",
        ]
    )
    assert code == 3
    assert "Indeterminate" in capsys.readouterr().out


def test_analyze_csv_import_lands_in_band(tmp_path, capsys):
    # a sampled Hamiltonian field with a small translation leak should be
    # flagged for inspection, not silently classified either way
    torus = mesh.gen_flat_torus(8, 8)
    ham = builtin_field("torus_hamiltonian", torus)
    leak = builtin_field("torus_translation", torus, a=1.0, b=0.0)
    mixed = ham + 1e-4 * leak
    write_field_csv(mixed, tmp_path / "field.csv")
    config = _torus_scenario(
        tmp_path, [{"kind": "csv", "path": "field.csv", "label": "imported"}]
    )
    out = tmp_path / "out"
    code = main(["analyze", "--config", str(config), "--out", str(out)])
    assert code == 3
    payload = json.loads((out / "report.json").read_text())
    gen = payload["generators"][0]
    assert gen["label"] == "imported"
    assert gen["verdict"] == "Indeterminate"
    assert 1e-6 < gen["rho"] < 1e-2


def test_analyze_schema_violation(tmp_path, capsys):
    config = _torus_scenario(tmp_path, [{"kind": "torus_translation"}], bogus=1)
    assert main(["analyze", "--config", str(config)]) == 2
    assert "invalid scenario" in capsys.readouterr().err


def test_analyze_schema_rejects_unknown_generator(tmp_path, capsys):
    config = _torus_scenario(tmp_path, [{"kind": "torus_spin"}])
    assert main(["analyze", "--config", str(config)]) == 2
    assert "invalid scenario" in capsys.readouterr().err


def test_analyze_version_pinned(tmp_path, capsys):
    config = _write_scenario(
        tmp_path / "v.json",
        {
            "version": 2,
            "mesh": {"kind": "flat_torus", "n": 4, "m": 4},
            "generators": [{"kind": "torus_translation"}],
        },
    )
    assert main(["analyze", "--config", str(config)]) == 2


def test_analyze_missing_config(tmp_path, capsys):
    assert main(["analyze", "--config", str(tmp_path / "nope.json")]) == 2
    assert "cannot read scenario" in capsys.readouterr().err


def test_analyze_bad_json(tmp_path, capsys):
    config = tmp_path / "broken.json"
    config.write_text("{not json")
    assert main(["analyze", "--config", str(config)]) == 2
    assert "not valid JSON" in capsys.readouterr().err


def test_analyze_generator_surface_mismatch(tmp_path, capsys):
    config = _torus_scenario(tmp_path, [{"kind": "sphere_polar_rotation"}])
    assert main(["analyze", "--config", str(config)]) == 2
    assert "embedded" in capsys.readouterr().err


def test_analyze_density_needs_chart(tmp_path, capsys):
    config = _write_scenario(
        tmp_path / "d.json",
        {
            "version": 1,
            "mesh": {"kind": "icosphere", "subdivisions": 1},
            "density": {"kind": "trig_exp"},
            "generators": [{"kind": "sphere_polar_rotation"}],
        },
    )
    assert main(["analyze", "--config", str(config)]) == 2
    assert "chart" in capsys.readouterr().err


def test_analyze_quadrature_choices(tmp_path):
    config = _torus_scenario(tmp_path, [{"kind": "torus_translation"}])
    with pytest.raises(SystemExit) as exc:
        main(["analyze", "--config", str(config), "--quadrature", "7"])
    assert exc.value.code == 2


def test_analyze_off_mesh_with_sidecar(tmp_path, capsys):
    assert main(["gen", "--flat-torus", "8", "8", "-o", str(tmp_path / "t.off")]) == 0
    capsys.readouterr()
    config = _write_scenario(
        tmp_path / "off.json",
        {
            "version": 1,
            "mesh": {"kind": "off", "path": "t.off"},
            "generators": [{"kind": "torus_translation"}],
        },
    )
    out = tmp_path / "out"
    assert main(["analyze", "--config", str(config), "--out", str(out)]) == 0
    assert "NonHamiltonian" in capsys.readouterr().out


def test_analyze_weighted_density_same_verdicts(tmp_path, capsys):
    config = _torus_scenario(
        tmp_path,
        [{"kind": "torus_hamiltonian"}, {"kind": "torus_translation"}],
        density={"kind": "trig_exp", "amplitude": 1.5, "k1": 1, "k2": 1},
    )
    out = tmp_path / "out"
    assert main(["analyze", "--config", str(config), "--out", str(out)]) == 0
    payload = json.loads((out / "report.json").read_text())
    verdicts = [g["verdict"] for g in payload["generators"]]
    assert verdicts == ["Hamiltonian", "NonHamiltonian"]


def test_analyze_deterministic_modulo_timestamp(tmp_path, capsys):
    config = _torus_scenario(
        tmp_path, [{"kind": "torus_hamiltonian"}, {"kind": "torus_translation"}]
    )
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["analyze", "--config", str(config), "--out", str(out_a), "--seed", "7"]) == 0
    assert main(["analyze", "--config", str(config), "--out", str(out_b), "--seed", "7"]) == 0
    pa = json.loads((out_a / "report.json").read_text())
    pb = json.loads((out_b / "report.json").read_text())
    pa.pop("timestamp")
    pb.pop("timestamp")
    assert pa == pb
    ref = pa["momentum"]["torus_hamiltonian"]
    assert (out_a / ref).read_bytes() == (out_b / ref).read_bytes()


# ---------------------------------------------------------------------------
# hodge


def test_hodge_subcommand(tmp_path, capsys):
    config = _torus_scenario(tmp_path, [{"kind": "torus_translation"}])
    out = tmp_path / "out"
    assert main(["hodge", "--config", str(config), "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "dim = 2" in stdout
    assert "laplacian0 kernel dim = 1" in stdout
    payload = json.loads((out / "hodge_report.json").read_text())
    assert payload["dimension"] == 2
    assert payload["laplacian0_kernel_dim"] == 1
    assert payload["gram_defect"] < 1e-12
    assert payload["separation"] > 1e-3


# ---------------------------------------------------------------------------
# quotient-check


def test_quotient_check(tmp_path, capsys):
    config = _write_scenario(
        tmp_path / "q.json",
        {
            "version": 1,
            "mesh": {"kind": "flat_torus", "n": 4, "m": 8},
            "generators": [{"kind": "torus_translation"}],
            "quotient": {
                "deck": {"kind": "torus_translations", "steps": [[0, 0], [0, 4]]},
                "product_m1": {"kind": "flat_torus", "n": 3, "m": 3},
            },
        },
    )
    out = tmp_path / "out"
    assert main(["quotient-check", "--config", str(config), "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "orbit integral" in stdout
    assert "product integral" in stdout
    payload = json.loads((out / "quotient_report.json").read_text())
    assert payload["results"]["group_order"] == 2
    assert payload["results"]["orbit"]["rel_err"] < 1e-12
    assert payload["results"]["product"]["rel_err"] < 1e-12


def test_quotient_check_requires_block(tmp_path, capsys):
    config = _torus_scenario(tmp_path, [{"kind": "torus_translation"}])
    assert main(["quotient-check", "--config", str(config)]) == 2
    assert "no quotient block" in capsys.readouterr().err


def test_quotient_check_rejects_nonfree_deck(tmp_path, capsys):
    n = m = 4
    ii = np.arange(n * m) // m
    jj = np.arange(n * m) % m
    flip = (((n - ii) % n) * m + (m - jj) % m).tolist()
    identity = np.arange(n * m).tolist()
    config = _write_scenario(
        tmp_path / "q.json",
        {
            "version": 1,
            "mesh": {"kind": "flat_torus", "n": n, "m": m},
            "generators": [{"kind": "torus_translation"}],
            "quotient": {"deck": {"kind": "vertex_perm", "perms": [identity, flip]}},
        },
    )
    assert main(["quotient-check", "--config", str(config)]) == 2
    assert "not free" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# environment guard and scenario object


def test_threads_env_guard(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("HAMFLOW_THREADS", "zero")
    assert main(["gen", "--icosphere", "0", "-o", str(tmp_path / "x.off")]) == 2
    assert "HAMFLOW_THREADS" in capsys.readouterr().err
    monkeypatch.setenv("HAMFLOW_THREADS", "2")
    assert main(["gen", "--icosphere", "0", "-o", str(tmp_path / "x.off")]) == 0


def test_scenario_default_out_is_relative_to_file(tmp_path):
    config = _torus_scenario(
        tmp_path, [{"kind": "torus_translation"}], out="results"
    )
    scenario = Scenario.load(config)
    assert scenario.base_dir == tmp_path
    assert scenario.data["out"] == "results"
    with pytest.raises(ScenarioError, match="invalid scenario"):
        Scenario({"version": 1}, tmp_path)
