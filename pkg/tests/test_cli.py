"""Command-line interface: exit codes, precedence, reproducible artifacts."""

import json

import pytest

from mvmlab.cli import EXIT_CHECK_FAILED, EXIT_PASS, EXIT_USAGE, main
from mvmlab.scenarios import SCENARIOS


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def test_list_shows_every_scenario(capsys):
    assert main(["list"]) == EXIT_PASS
    out = capsys.readouterr().out
    for name in SCENARIOS:
        assert name in out
    assert out.count("defaults:") == len(SCENARIOS)


def test_run_prints_one_line_per_check_and_passes(tmp_path, capsys):
    config = write_config(tmp_path, {"scenario": "sup_measures_oracle",
                                     "params": {"trials": 10}})
    assert main(["run", config]) == EXIT_PASS
    lines = capsys.readouterr().out.strip().split("\n")
    assert all(line.startswith("PASS ") for line in lines[:-1])
    assert lines[-1].startswith("sup_measures_oracle: PASS")
    assert f"({len(lines) - 1}/{len(lines) - 1} checks" in lines[-1]


def test_failed_check_exits_two(tmp_path, capsys):
    # An unattainably tight tolerance turns a healthy run into a failure.
    config = write_config(tmp_path, {
        "scenario": "discrete_levy_qv",
        "params": {"sphere": 64, "qv_rtol": 1e-9}})
    assert main(["run", config]) == EXIT_CHECK_FAILED
    out = capsys.readouterr().out
    assert "FAIL" in out
    assert "discrete_levy_qv: FAIL" in out.strip().split("\n")[-1]


@pytest.mark.parametrize("payload,fragment", [
    ("not json {", "not valid JSON"),
    (json.dumps([1, 2]), "must be a JSON object"),
    (json.dumps({"scenario": "fubini", "bogus": 1}), "unknown config keys"),
    (json.dumps({"seed": 3}), "missing the required"),
    (json.dumps({"scenario": "nope"}), "unknown scenario"),
    (json.dumps({"scenario": "fubini", "params": [1]}), "must be a JSON object"),
])
def test_bad_configs_exit_one(tmp_path, capsys, payload, fragment):
    path = tmp_path / "bad.json"
    path.write_text(payload, encoding="utf-8")
    assert main(["run", str(path)]) == EXIT_USAGE
    assert fragment in capsys.readouterr().err


def test_missing_file_unknown_param_and_bad_commands(tmp_path, capsys):
    assert main(["run", str(tmp_path / "absent.json")]) == EXIT_USAGE
    assert "cannot read config" in capsys.readouterr().err
    config = write_config(tmp_path, {"scenario": "sup_measures_oracle",
                                     "params": {"marbles": 3}})
    assert main(["run", config]) == EXIT_USAGE
    assert "unknown parameter 'marbles'" in capsys.readouterr().err
    assert main([]) == EXIT_USAGE
    assert "expected a command" in capsys.readouterr().err
    assert main(["dance"]) == EXIT_USAGE
    capsys.readouterr()
    assert main(["run"]) == EXIT_USAGE  # missing config argument
    assert main(["run", "x.json", "--seed", "abc"]) == EXIT_USAGE


def test_out_directory_receives_report_and_artifacts(tmp_path, capsys):
    config = write_config(tmp_path, {"scenario": "sup_measures_oracle",
                                     "params": {"trials": 8},
                                     "out": str(tmp_path / "results")})
    assert main(["run", config]) == EXIT_PASS
    report_path = tmp_path / "results" / "sup_measures_oracle_report.json"
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert report["all_passed"] is True
    assert report["scenario"] == "sup_measures_oracle"
    assert report["params"]["trials"] == 8
    for name in report["artifact_files"]:
        assert (tmp_path / "results" / name).is_file()
    assert "written to" in capsys.readouterr().out


def test_flag_overrides_config_overrides_default(tmp_path, capsys):
    config = write_config(tmp_path, {"scenario": "haar_counterexample",
                                     "seed": 3, "paths": 300,
                                     "out": str(tmp_path / "a")})
    assert main(["run", config, "--seed", "4",
                 "--out", str(tmp_path / "b")]) == EXIT_PASS
    capsys.readouterr()
    report = json.loads((tmp_path / "b" / "haar_counterexample_report.json")
                        .read_text(encoding="utf-8"))
    assert report["seed"] == 4  # flag beat the config value
    assert report["paths"] == 300  # config value beat the default
    assert not (tmp_path / "a").exists()  # flag replaced the out directory
    # Without the flag the config seed applies.
    config2 = write_config(tmp_path, {"scenario": "haar_counterexample",
                                      "seed": 3, "paths": 300,
                                      "out": str(tmp_path / "c")},
                           name="second.json")
    assert main(["run", config2]) == EXIT_PASS
    capsys.readouterr()
    report2 = json.loads((tmp_path / "c" / "haar_counterexample_report.json")
                         .read_text(encoding="utf-8"))
    assert report2["seed"] == 3


def test_artifacts_are_byte_identical_across_threads(tmp_path, capsys):
    base = {"scenario": "hvalued_levy_qm", "paths": 600}
    config = write_config(tmp_path, base)
    for threads, sub in ((1, "t1"), (3, "t3")):
        code = main(["run", config, "--threads", str(threads),
                     "--out", str(tmp_path / sub)])
        assert code == EXIT_PASS
        capsys.readouterr()
    for name in ("hvalued_qv.csv", "hvalued_qm.csv"):
        a = (tmp_path / "t1" / name).read_bytes()
        b = (tmp_path / "t3" / name).read_bytes()
        assert a == b and len(a) > 0


def test_seed_changes_artifacts(tmp_path, capsys):
    config = write_config(tmp_path, {"scenario": "hvalued_levy_qm",
                                     "paths": 600})
    for seed, sub in ((5, "s5"), (6, "s6")):
        assert main(["run", config, "--seed", str(seed),
                     "--out", str(tmp_path / sub)]) == EXIT_PASS
        capsys.readouterr()
    a = (tmp_path / "s5" / "hvalued_qv.csv").read_bytes()
    b = (tmp_path / "s6" / "hvalued_qv.csv").read_bytes()
    assert a != b
