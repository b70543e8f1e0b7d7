import json
import subprocess
import sys
import numpy as np
import pytest

from neuralfield.cli import main, run
from neuralfield.config import (
    DEFAULT_CONFIG,
    build_config,
    initial_state,
    parse_config,
)
from neuralfield.errors import ParseError, SchemaError
from neuralfield.io import atomic_write_text, fmt, output_lock, sha256_file, write_csv
from neuralfield.model import compute_constants


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestSchema:
    def test_empty_document_fills_defaults(self):
        cfg = build_config({}, environ={})
        assert cfg.model.gamma == 1.0
        assert cfg.grid.npts == (401,)
        assert cfg.solver.method == "exp-euler"
        assert cfg.document["model"]["gamma"] == 1.0
        assert cfg.document["study"]["contraction"]["n_pairs"] == 200

    def test_negative_gamma_names_the_field(self):
        with pytest.raises(SchemaError) as err:
            build_config({"model": {"gamma": -0.1}}, environ={})
        assert any(v.startswith("model.gamma") for v in err.value.violations)

    def test_linear_firing_cites_mode_restriction(self):
        doc = {"model": {"firing": {"kind": "linear", "params": {}}}}
        with pytest.raises(SchemaError) as err:
            build_config(doc, environ={})
        assert any("gain-field" in v for v in err.value.violations)

    def test_all_violations_collected(self):
        doc = {
            "model": {"gamma": -1.0},
            "solver": {"dt": -0.5},
            "grid": {"nodes": [2]},
            "bogus": True,
        }
        with pytest.raises(SchemaError) as err:
            build_config(doc, environ={})
        joined = "\n".join(err.value.violations)
        for needle in ("model.gamma", "solver.dt", "grid.nodes", "bogus: unknown key"):
            assert needle in joined
        assert len(err.value.violations) >= 4

    def test_unknown_nested_key(self):
        with pytest.raises(SchemaError) as err:
            build_config({"solver": {"timestep": 0.1}}, environ={})
        assert any(v.startswith("solver.timestep") for v in err.value.violations)

    def test_simpson_needs_odd_nodes(self):
        doc = {"quadrature": "simpson", "grid": {"nodes": [400]}}
        with pytest.raises(SchemaError) as err:
            build_config(doc, environ={})
        assert any("odd" in v for v in err.value.violations)

    def test_dt_vs_segment(self):
        with pytest.raises(SchemaError) as err:
            build_config({"solver": {"dt": 0.5, "segment_rho": 0.1}}, environ={})
        assert any("segment_rho" in v for v in err.value.violations)

    def test_env_override_scalar(self):
        cfg = build_config({}, environ={"NF_MODEL_GAMMA": "0.25"})
        assert cfg.model.gamma == 0.25
        assert cfg.document["model"]["gamma"] == 0.25

    def test_env_override_multi_token_key(self):
        cfg = build_config({}, environ={"NF_SOLVER_PICARD_TOL": "1e-8",
                                        "NF_GRID_BOUNDARY": "periodic"})
        assert cfg.solver.picard_tol == 1e-8
        assert cfg.grid.boundary == "periodic"

    def test_env_override_reaches_study_sections(self):
        cfg = build_config({}, environ={"NF_STUDY_L1_GAMMA": "null",
                                        "NF_STUDY_CONTRACTION_N_PAIRS": "25"})
        assert cfg.study_section["l1"]["gamma"] is None
        assert cfg.study_section["contraction"]["n_pairs"] == 25

    def test_env_override_unknown_key_is_violation(self):
        with pytest.raises(SchemaError) as err:
            build_config({}, environ={"NF_MODEL_GAMA": "0.5"})
        assert any("NF_MODEL_GAMA" in v for v in err.value.violations)

    def test_env_override_still_validated(self):
        with pytest.raises(SchemaError) as err:
            build_config({}, environ={"NF_MODEL_GAMMA": "-3"})
        assert any(v.startswith("model.gamma") for v in err.value.violations)

    def test_parse_errors(self, tmp_path):
        bad = tmp_path / "broken.json"
        bad.write_text("{not json")
        with pytest.raises(ParseError):
            parse_config(str(bad), environ={})
        with pytest.raises(ParseError):
            parse_config(str(tmp_path / "missing.json"), environ={})

    def test_initial_state_kinds(self):
        cfg = build_config({}, environ={})
        zero = initial_state(cfg, kind="zero", params={})
        assert np.all(zero.values == 0.0)
        step = initial_state(cfg, kind="step", params={})
        assert set(np.unique(step.values)) == {0.0, 1.0}
        const = initial_state(cfg, kind="constant", params={"value": 0.7})
        assert np.all(const.values == 0.7)


class TestIO:
    def test_fmt_round_trip(self):
        for x in (1.0 / 3.0, 1e-300, 123456.789, -0.1):
            assert float(fmt(x)) == x

    def test_write_csv_no_partial_files(self, tmp_path):
        path = tmp_path / "table.csv"
        write_csv(path, ["a", "b"], [[1, 2.5], [3, 4.5]])
        assert path.read_text().splitlines()[0] == "a,b"
        assert not list(tmp_path.glob("*.tmp"))

    def test_atomic_write_replaces(self, tmp_path):
        p = tmp_path / "x.txt"
        atomic_write_text(p, "one")
        atomic_write_text(p, "two")
        assert p.read_text() == "two"

    def test_lock_collision(self, tmp_path):
        with output_lock(tmp_path / "run"):
            with pytest.raises(RuntimeError, match="locked"):
                with output_lock(tmp_path / "run"):
                    pass
        # released afterwards
        with output_lock(tmp_path / "run"):
            pass


def small_sim_doc(t_end=2.0):
    return {
        "grid": {"nodes": [101]},
        "solver": {"dt": 0.1, "t_end": t_end},
        "model": {"gamma": 0.5},
    }


class TestRun:
    def test_simulate_artifacts(self, tmp_path):
        cfg = build_config(small_sim_doc(), environ={})
        out = tmp_path / "sim"
        assert run("simulate", cfg, out) == 0
        for name in ("trajectory.csv", "bounds.csv", "manifest.json"):
            assert (out / name).exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["model"]["gamma"] == 0.5
        assert set(manifest["checksums"]) == {"trajectory.csv", "bounds.csv"}
        # checksums match the files on disk
        for name, digest in manifest["checksums"].items():
            assert sha256_file(out / name) == digest
        header = (out / "trajectory.csv").read_text().splitlines()[0]
        assert header == "t,node_index,x,u"

    def test_manifest_constants_match_fresh_computation(self, tmp_path):
        cfg = build_config(small_sim_doc(), environ={})
        out = tmp_path / "sim"
        run("simulate", cfg, out)
        manifest = json.loads((out / "manifest.json").read_text())
        echoed = build_config(manifest["config"], environ={})
        fresh = compute_constants(echoed.model, echoed.grid).to_json()
        assert manifest["constants"] == fresh

    def test_rerun_identical_checksums(self, tmp_path):
        doc = small_sim_doc()
        sums = []
        for name in ("a", "b"):
            cfg = build_config(doc, environ={})
            out = tmp_path / name
            assert run("simulate", cfg, out) == 0
            sums.append(json.loads((out / "manifest.json").read_text())["checksums"])
        assert sums[0] == sums[1]

    def test_stationary_and_gainfield(self, tmp_path):
        doc = {
            "grid": {"nodes": [101]},
            "model": {"gamma": 0.4},
            "stationary": {"tol": 1e-10},
            "gainfield": {"crosscheck_nodes": 801, "n_eigs": 5},
        }
        cfg = build_config(doc, environ={})
        out1 = tmp_path / "stat"
        assert run("stationary", cfg, out1) == 0
        stat = json.loads((out1 / "stationary.json").read_text())
        assert stat["converged"] and stat["residual"] < 1e-10

        out2 = tmp_path / "gf"
        assert run("gainfield", cfg, out2) == 0
        eigs = (out2 / "eigs.csv").read_text().splitlines()
        assert eigs[0] == "i,sigma_i"
        assert len(eigs) == 6
        cross = json.loads((out2 / "crosscheck.json").read_text())
        assert cross["E"] == pytest.approx(cross["k2"] - 1.0)
        assert cross["residual_l2"] < 1e-2

    def test_simulate_2d_grid(self, tmp_path):
        doc = {
            "grid": {"bounds": [[0.0, 1.0], [0.0, 1.0]], "nodes": [9, 9]},
            "solver": {"dt": 0.1, "t_end": 0.5},
            "model": {"gamma": 0.5},
            "initial": {"kind": "gaussian-bump",
                        "params": {"amplitude": 0.5, "center": 0.5, "width": 0.3}},
        }
        cfg = build_config(doc, environ={})
        out = tmp_path / "sim2d"
        assert run("simulate", cfg, out) == 0
        header = (out / "trajectory.csv").read_text().splitlines()[0]
        assert header == "t,node_index,x,y,u"
        report = json.loads((out / "manifest.json").read_text())["bound_report"]
        assert report["within_bound"]

    def test_schrodinger_standalone(self, tmp_path):
        cfg = build_config({"schrodinger": {"nodes": 1001, "n_states": 2}}, environ={})
        out = tmp_path / "sch"
        assert run("schrodinger", cfg, out, well="1,2", lam=1.0) == 0
        payload = json.loads((out / "schrodinger.json").read_text())
        assert payload["half_width"] == 1.0 and payload["height"] == 2.0
        assert len(payload["energies"]) >= 1

    def test_study_contraction_verdict(self, tmp_path):
        doc = {"grid": {"nodes": [101]},
               "study": {"contraction": {"n_pairs": 40, "rho": 0.1}}}
        cfg = build_config(doc, environ={})
        out = tmp_path / "study"
        assert run("study", cfg, out, study_name="contraction") == 0
        verdict = json.loads((out / "verdict.json").read_text())
        assert verdict["pass"] is True
        assert verdict["max_ratio"] <= verdict["q"] + 0.01
        assert (out / "contraction.csv").exists()

    def test_numerical_failure_still_writes_manifest(self, tmp_path):
        doc = {
            "model": {
                "kernel": {"kind": "exponential", "params": {"amplitude": 60.0, "decay": 0.2}},
                "firing": {"kind": "linear", "params": {}},
                "mode": "gain-field",
                "gamma": 0.0,
            },
            "grid": {"nodes": [51], "bounds": [[-5.0, 5.0]]},
            "solver": {"method": "rk4", "dt": 0.5, "t_end": 200.0},
        }
        cfg = build_config(doc, environ={})
        out = tmp_path / "boom"
        assert run("simulate", cfg, out) == 1
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["error"]["type"] == "NumericalInstabilityError"
        assert (out / ".lock").exists() is False


class TestMainEntry:
    def test_validate_ok(self, tmp_path, capsys):
        path = write_config(tmp_path, small_sim_doc())
        assert main(["validate", "--config", path]) == 0
        assert "config ok" in capsys.readouterr().out

    def test_validate_reports_all_errors(self, tmp_path, capsys):
        path = write_config(tmp_path, {"model": {"gamma": -2}, "junk": 1})
        assert main(["validate", "--config", path]) == 2
        err = capsys.readouterr().err
        assert "model.gamma" in err and "junk" in err

    def test_malformed_json_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{{{")
        assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2

    def test_missing_out_is_config_error(self, tmp_path):
        path = write_config(tmp_path, small_sim_doc())
        assert main(["simulate", "--config", path]) == 2

    def test_constants_prints(self, capsys):
        assert main(["constants"]) == 0
        out = capsys.readouterr().out
        assert "kernel_l1_sup" in out and "q:" in out

    def test_constants_writes_json_with_out(self, tmp_path):
        out = tmp_path / "c"
        assert main(["constants", "--out", str(out)]) == 0
        payload = json.loads((out / "constants.json").read_text())
        assert payload["q"] < 1.0
        assert payload["constants"]["firing_lipschitz"] == 0.25

    def test_unknown_study_name_exits_config_error(self, tmp_path):
        cfg = build_config({}, environ={})
        assert run("study", cfg, tmp_path / "s", study_name="bogus") == 2

    def test_seed_flag_overrides(self, tmp_path):
        path = write_config(tmp_path, small_sim_doc())
        out = tmp_path / "o"
        assert main(["simulate", "--config", path, "--out", str(out), "--seed", "777"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 777

    def test_console_entry_point(self, tmp_path):
        # module execution path used by scripts and docs
        path = write_config(tmp_path, small_sim_doc(t_end=0.5))
        result = subprocess.run(
            [sys.executable, "-m", "neuralfield.cli", "simulate",
             "--config", path, "--out", str(tmp_path / "cli-run")],
            capture_output=True, text=True,
        )
        assert result.returncode == 0, result.stderr
        assert (tmp_path / "cli-run" / "manifest.json").exists()
