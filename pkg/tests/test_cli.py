import json
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mshglab.cli import (
    EXIT_COMPUTE,
    EXIT_CONFIG,
    EXIT_OK,
    RECORD_NAME,
    RunConfig,
    build_config,
    main,
    make_parser,
)
from mshglab.errors import ConfigurationError


def record(out):
    return json.loads((out / RECORD_NAME).read_text())


def result(out):
    return json.loads((out / "result.json").read_text())


# ---- configuration ----------------------------------------------------------------------


json_scalars = st.one_of(st.integers(-1000, 1000), st.sampled_from(["cft_ode", "+", ""]), st.booleans())


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(["enumerate", "wilson", "dictionary", "verify"]),
    st.dictionaries(st.sampled_from(["L", "rho", "mode", "side", "order"]), json_scalars, max_size=4),
    st.integers(0, 2**31),
    st.integers(1, 16),
    st.one_of(st.none(), st.lists(st.sampled_from(["text", "csv", "svg"]), max_size=3)),
)
def test_run_config_round_trip(task, params, seed, jobs, formats):
    cfg = RunConfig(task, params, "out", seed, jobs, formats).validate()
    assert RunConfig.loads(cfg.dumps()) == cfg


@pytest.mark.parametrize(
    "bad",
    [
        {"task": "nope"},
        {"task": "wilson", "bogus": 1},
        {"task": "wilson", "seed": -1},
        {"task": "wilson", "jobs": 0},
        {"task": "wilson", "formats": ["pdf"]},
        {"task": "wilson", "parameters": {"tol": 0}},
        {"task": "wilson", "parameters": {"strategy": {"oracle_tol": -1e-6}}},
        {"parameters": {}},
    ],
)
def test_run_config_rejects(bad):
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict(bad)


def test_config_precedence(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"task": "wilson", "output_dir": "from-file", "jobs": 2, "parameters": {"a": 1}}))
    parser = make_parser()
    args = parser.parse_args(["wilson", "--config", str(cfg_file), "--set", "b=[1, 2]"])
    cfg, base = build_config(args, {"MSHGLAB_OUTPUT_DIR": "from-env", "MSHGLAB_JOBS": "3"})
    assert cfg.output_dir == "from-env" and cfg.jobs == 3
    assert cfg.parameters == {"a": 1, "b": [1, 2]}
    assert base == tmp_path
    args = parser.parse_args(["wilson", "--config", str(cfg_file), "--output", "cli", "--jobs", "4"])
    cfg, _ = build_config(args, {"MSHGLAB_OUTPUT_DIR": "from-env"})
    assert cfg.output_dir == "cli" and cfg.jobs == 4


def test_config_task_mismatch(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"task": "enumerate"}))
    assert main(["wilson", "--config", str(cfg_file)], env={}) == EXIT_CONFIG


# ---- tasks --------------------------------------------------------------------------------


def test_count_partitions(tmp_path, capsys):
    assert main(["count-partitions", "--set", "L=2", "--output", str(tmp_path)], env={}) == EXIT_OK
    assert capsys.readouterr().out.strip() == "9"
    rec = record(tmp_path)
    assert rec["status"] == "ok"
    assert set(rec["outputs"]) == {"result.json", "summary.txt"}


def test_dictionary_task(tmp_path, capsys):
    argv = ["dictionary", "--set", "a=[0.6666666666666666, 0.6666666666666666]", "--set", "m=[-0.5, -0.5, -0.5]",
            "--set", "rho=1.5", "--output", str(tmp_path)]
    assert main(argv, env={}) == EXIT_OK
    out = capsys.readouterr().out
    assert "k = 0, 0, 0" in out and "muR = 3" in out


def test_dictionary_domain_error(tmp_path, capsys):
    argv = ["dictionary", "--set", "a=[0.8, 0.7, 0.5]", "--set", "m=[-0.2, -0.45, -0.5]", "--output", str(tmp_path)]
    assert main(argv, env={}) == EXIT_CONFIG
    assert "upper bound" in capsys.readouterr().err
    assert record(tmp_path)["status"] == "invalid"


def test_enumerate_task(tmp_path, capsys):
    argv = ["enumerate", "--set", "L=1", "--set", "generic_draw=1", "--seed", "1", "--output", str(tmp_path)]
    assert main(argv, env={}) == EXIT_OK
    assert capsys.readouterr().out.startswith("found 3, expected p_3(1)=3")
    rec = record(tmp_path)
    assert set(rec["outputs"]) == {"moduli.json", "result.json", "summary.txt", "moduli.svg"}
    assert json.loads((tmp_path / "moduli.json").read_text())["found"] == 3


def test_unsupported_format(tmp_path):
    argv = ["count-partitions", "--set", "L=1", "--format", "csv", "--output", str(tmp_path)]
    assert main(argv, env={}) == EXIT_CONFIG


def test_wilson_and_charges(tmp_path):
    scan_dir = tmp_path / "scan"
    argv = ["wilson", "--set", "delta=[0.2, 0.5, 0.1]", "--set", 'theta={"start": 2.0, "stop": 2.5, "num": 21}',
            "--format", "text,csv,svg", "--output", str(scan_dir)]
    assert main(argv, env={}) == EXIT_OK
    assert (scan_dir / "scan.csv").exists() and (scan_dir / "wilson.svg").exists()
    fit_dir = tmp_path / "fit"
    argv = ["charges", "--set", f"scan_csv={json.dumps(str(scan_dir / 'scan.csv'))}", "--output", str(fit_dir)]
    assert main(argv, env={}) == EXIT_OK
    direct = tmp_path / "direct"
    argv = ["charges", "--set", "delta=[0.2, 0.5, 0.1]", "--set", 'theta={"start": 2.0, "stop": 2.5, "num": 21}',
            "--output", str(direct)]
    assert main(argv, env={}) == EXIT_OK
    q_csv = result(fit_dir)["charges"]["q"][0]
    q_dir = result(direct)["charges"]["q"][0]
    assert q_csv == pytest.approx(q_dir, rel=1e-12)


def test_scan_outside_band(tmp_path):
    argv = ["wilson", "--set", "theta=[5.0]", "--output", str(tmp_path)]
    assert main(argv, env={}) == EXIT_COMPUTE


def test_transport_task(tmp_path):
    path = {"segments": [{"kind": "line", "start": [0.0, 0.0], "end": [0.3, 0.4]}]}
    (tmp_path / "path.json").write_text(json.dumps(path))
    cfg = {"task": "transport", "parameters": {"delta": [0, 0, 0], "lambda2": 0.0, "path_file": "path.json"},
           "output_dir": str(tmp_path / "out")}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert main(["transport", "--config", str(tmp_path / "cfg.json")], env={}) == EXIT_OK
    m = result(tmp_path / "out")["matrix"]
    # free equation y'' = 0: [[1, dz], [0, 1]]
    assert m[0][1] == pytest.approx([0.3, 0.4], abs=1e-10)
    assert m[1][0] == pytest.approx([0.0, 0.0], abs=1e-10)


def test_transport_requires_path(tmp_path):
    assert main(["transport", "--output", str(tmp_path)], env={}) == EXIT_CONFIG


def test_verify_defaults(tmp_path, capsys):
    assert main(["verify", "--output", str(tmp_path)], env={}) == EXIT_OK
    assert "9/9 suites passed" in capsys.readouterr().out


def test_verify_unknown_suite(tmp_path):
    assert main(["verify", "--set", 'suites=["nope"]', "--output", str(tmp_path)], env={}) == EXIT_CONFIG


def test_pde_solve_and_wilson(tmp_path):
    solve_dir = tmp_path / "solve"
    argv = ["pde-solve", "--set", "m=[-0.4, -0.4, -0.4]", "--set", "rho=1.0", "--output", str(solve_dir)]
    assert main(argv, env={}) == EXIT_OK
    prof = result(solve_dir)["profile"]
    assert prof["max_deviation"] < 5e-3
    ckpt = solve_dir / "field.mshg"
    argv = ["pde-wilson", "--set", f"checkpoint={json.dumps(str(ckpt))}", "--set", "theta=[0.0, [0.5, 0.2]]",
            "--format", "text,csv", "--output", str(tmp_path / "w")]
    assert main(argv, env={}) == EXIT_OK
    assert len(result(tmp_path / "w")["samples"]) == 2


def test_pde_solve_rejects_m(tmp_path):
    argv = ["pde-solve", "--set", "m=[-0.5, -0.4, -0.4]", "--set", "rho=1.0", "--output", str(tmp_path)]
    assert main(argv, env={}) == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "mshglab.cli", "count-partitions", "--set", "L=3", "--output", str(tmp_path)],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and proc.stdout.strip() == "22"
