import json
import os

import pytest

from percgame.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def check_schema(instance, schema):
    """Minimal structural validator for the shipped draft-07 subset."""
    types = {"object": dict, "array": list, "string": str, "boolean": bool,
             "integer": int, "number": (int, float), "null": type(None)}

    def walk(node, sch, path):
        declared = sch.get("type")
        if declared is not None:
            allowed = declared if isinstance(declared, list) else [declared]
            assert any(isinstance(node, types[t]) and not (t != "boolean" and isinstance(node, bool))
                       for t in allowed), f"{path}: {node!r} is not {declared}"
        if "enum" in sch:
            assert node in sch["enum"], f"{path}: {node!r} not in {sch['enum']}"
        if isinstance(node, dict):
            for req in sch.get("required", []):
                assert req in node, f"{path}: missing {req}"
            for key, sub in sch.get("properties", {}).items():
                if key in node:
                    walk(node[key], sub, f"{path}.{key}")
        if isinstance(node, list) and "items" in sch:
            for idx, item in enumerate(node):
                walk(item, sch["items"], f"{path}[{idx}]")

    walk(instance, schema, "$")


def test_solve_json_matches_published_value(capsys):
    code, out, _ = run_cli(capsys, "solve", "--family", "dirac", "--m", "2",
                           "--kappa", "3", "--p0", "0.9", "--p1", "0.05")
    assert code == 0
    obj = json.loads(out)
    assert obj["result"]["D"][0][0] == pytest.approx(0.985522, abs=1e-5)
    assert obj["verdicts"][0][0] == "POSITIVE"


def test_solve_json_validates_against_shipped_schema(capsys):
    import percgame
    schema_path = os.path.join(os.path.dirname(percgame.__file__),
                               "schemas", "solve_result.schema.json")
    with open(schema_path, "r", encoding="utf-8") as fh:
        schema = json.load(fh)
    code, out, _ = run_cli(capsys, "solve", "--family", "poisson", "--lam", "2",
                           "--kappa", "2", "--p0", "0.8", "--p1", "0.1")
    assert code == 0
    check_schema(json.loads(out), schema)


def test_check_kappa2_command(capsys):
    code, out, _ = run_cli(capsys, "check-kappa2", "--family", "poisson", "--lam", "2",
                           "--p0", "0.95", "--p1", "0.03")
    assert code == 0
    assert json.loads(out)["draw_zero"] is True


def test_check_kappa3_command(capsys):
    code, out, _ = run_cli(capsys, "check-kappa3", "--family", "poisson", "--lam", "50",
                           "--p0", "0.4", "--p1", "0.3")
    assert code == 0
    obj = json.loads(out)
    assert obj["contraction_holds"] is True
    assert obj["max_E"] < 1e-3


def test_check_special_command_and_law_validation(capsys):
    code, out, _ = run_cli(capsys, "check-special", "--alpha", "0.1")
    assert code == 0
    assert json.loads(out)["certified_draws_zero"] is True
    code, _, err = run_cli(capsys, "check-special", "--alpha", "0.1",
                           "--p0", "0.5", "--p1", "0.2")
    assert code == 2
    assert "ratio" in err


def test_simulate_all_zero_and_deterministic(capsys):
    argv = ["simulate", "--family", "dirac", "--m", "2", "--kappa", "2",
            "--p0", "1", "--p1", "0", "--horizon", "5", "--samples", "1000",
            "--seed", "7", "--format", "csv"]
    code, out1, _ = run_cli(capsys, *argv)
    assert code == 0
    lines = out1.strip().split("\r\n")
    assert lines[0] == "i,j,horizon,ell,ell_stderr,w,w_stderr"
    assert lines[1] == "1,1,5,0,0,0,0"
    _, out2, _ = run_cli(capsys, *argv)
    assert out1 == out2


def test_simulate_seed_changes_output(capsys):
    argv = ["simulate", "--family", "poisson", "--lam", "2", "--kappa", "2",
            "--p0", "0.8", "--p1", "0.1", "--horizon", "3", "--samples", "500"]
    _, out1, _ = run_cli(capsys, *argv, "--seed", "1")
    _, out2, _ = run_cli(capsys, *argv, "--seed", "2")
    assert out1 != out2


def test_duration_command(capsys):
    code, out, _ = run_cli(capsys, "duration", "--family", "dirac", "--m", "2",
                           "--kappa", "3", "--p0", "0.8", "--p1", "0.15")
    assert code == 0
    obj = json.loads(out)
    assert obj["report"]["draws_zero"] is True
    assert obj["report"]["criterion_holds"] is False


def test_fixed_points_command(capsys):
    code, out, _ = run_cli(capsys, "fixed-points", "--family", "geometric", "--pi", "0.5",
                           "--kappa", "2", "--p0", "0.8", "--p1", "0.1")
    assert code == 0
    assert json.loads(out)["count"] == 1


def test_sweep_solve_csv_shape_and_determinism(capsys, tmp_path):
    argv = ["sweep", "--what", "solve", "--family", "dirac", "--m", "2", "--kappa", "3",
            "--grid-p0", "0.9,0.95", "--grid-p1", "0.05", "--format", "csv"]
    code, out1, _ = run_cli(capsys, *argv)
    assert code == 0
    lines = out1.strip().split("\r\n")
    assert lines[0] == "distribution,p0,p1,d11,d12,d21,d22"
    assert len(lines) == 3
    assert lines[1].startswith("dirac(m=2),0.9,0.05,0.985521946")
    _, out2, _ = run_cli(capsys, *argv)
    assert out1 == out2
    # output file path writes identical bytes
    path = tmp_path / "sweep.csv"
    code, out3, _ = run_cli(capsys, *argv, "--output", str(path))
    assert out3 == ""
    assert path.read_bytes().decode("utf-8") == out1


def test_sweep_grid_param_and_jobs(capsys):
    argv = ["sweep", "--what", "check-kappa2", "--family", "poisson",
            "--grid-param", "lam=2,3", "--grid-p0", "0.9", "--grid-p1", "0.05",
            "--format", "csv"]
    code, out, _ = run_cli(capsys, *argv)
    assert code == 0
    lines = out.strip().split("\r\n")
    assert lines[0] == "distribution,p0,p1,draw_zero"
    assert len(lines) == 3
    code, out_jobs, _ = run_cli(capsys, *argv, "--jobs", "2")
    assert out_jobs == out


def test_sweep_rejects_invalid_grid(capsys):
    code, _, err = run_cli(capsys, "sweep", "--what", "solve", "--family", "dirac",
                           "--m", "2", "--grid-p0", "0.9", "--grid-p1", "0.2")
    assert code == 2
    assert "grid" in err


def test_validation_errors_name_the_field(capsys):
    code, _, err = run_cli(capsys, "solve", "--family", "poisson",
                           "--p0", "0.8", "--p1", "0.1")
    assert code == 2
    assert "lam" in err
    code, _, err = run_cli(capsys, "solve", "--family", "dirac", "--m", "2")
    assert code == 2
    assert "p0" in err
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--family", "weibull", "--p0", "0.8", "--p1", "0.1"])
    assert exc.value.code == 2


def test_nonconvergence_exit_code(capsys):
    code, out, _ = run_cli(capsys, "solve", "--family", "dirac", "--m", "2",
                           "--kappa", "3", "--p0", "0.9", "--p1", "0.05",
                           "--max-iter", "3")
    assert code == 3
    assert json.loads(out)["result"]["converged"] is False


def test_config_file_and_flag_precedence(capsys, tmp_path):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"family": "dirac", "m": 2, "kappa": 3,
                                "p0": 0.9, "p1": 0.05}), encoding="utf-8")
    code, out, _ = run_cli(capsys, "solve", "--config", str(conf))
    assert code == 0
    assert json.loads(out)["result"]["D"][0][0] == pytest.approx(0.985522, abs=1e-5)
    # flags override the file
    code, out, _ = run_cli(capsys, "solve", "--config", str(conf), "--p0", "0.8",
                           "--p1", "0.15")
    assert code == 0
    assert json.loads(out)["result"]["D"][0][0] == pytest.approx(0.0, abs=1e-6)
    code, _, err = run_cli(capsys, "solve", "--config", str(tmp_path / "missing.json"))
    assert code == 2


def test_env_seed_fallback(capsys, monkeypatch, tmp_path):
    argv = ["simulate", "--family", "poisson", "--lam", "2", "--kappa", "2",
            "--p0", "0.8", "--p1", "0.1", "--horizon", "2", "--samples", "400"]
    monkeypatch.setenv("PERCGAME_SEED", "99")
    _, out_env, _ = run_cli(capsys, *argv)
    monkeypatch.delenv("PERCGAME_SEED")
    _, out_99, _ = run_cli(capsys, *argv, "--seed", "99")
    assert out_env == out_99
    # an explicit flag wins over the environment
    monkeypatch.setenv("PERCGAME_SEED", "99")
    _, out_flag, _ = run_cli(capsys, *argv, "--seed", "5")
    monkeypatch.delenv("PERCGAME_SEED")
    _, out_5, _ = run_cli(capsys, *argv, "--seed", "5")
    assert out_flag == out_5
