import json

import pytest
import yaml

from paralab.cli import main
from paralab.config import ConfigError, load_config, selected_ids, validate
from paralab.experiments import EXPERIMENT_IDS

SMALL = {
    "experiments_to_run": ["heat-kernel-scaling", "burgers-colehopf", "quasi-operator-suite"],
    "experiments": {
        "heat-kernel-scaling": {"n": 512},
        "burgers-colehopf": {"resolutions": [32, 64], "n_times": 101},
        "quasi-operator-suite": {"samples": 10, "solve_n": 32, "n_times": 21},
    },
}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return path


def _outputs(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_unknown_id_is_rejected_before_anything_is_written(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(yaml.safe_dump({"experiments": {"no-such-experiment": {}}}))
    out = tmp_path / "out"
    assert main([str(cfg), "--output-root", str(out)]) == 2
    assert not out.exists()
    assert "no-such-experiment" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["--only", "no-such-experiment", "--output-root", str(out)])
    assert not out.exists()


@pytest.mark.parametrize(
    "patch",
    [
        {"seed": -1},
        {"jobs": 0},
        {"experiments_to_run": ["bogus"]},
        {"experiments": {"heat-kernel-scaling": {"n": 7}}},
        {"experiments": {"heat-kernel-scaling": {"T_min": 0.1, "T_max": 0.01}}},
        {"experiments": {"linear-bounds": {"gamma": 1.0}}},
        {"experiments": {"semi-ns-decay": {"beta": 2.0}}},
        {"experiments": {"burgers-colehopf": {"typo": 1}}},
    ],
)
def test_schema_errors(tmp_path, patch):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump(patch))
    with pytest.raises(ConfigError):
        load_config(cfg)


def test_defaults_validate_and_select_everything():
    cfg = load_config(None)
    assert validate(cfg) is cfg
    assert selected_ids(cfg) == list(EXPERIMENT_IDS)
    assert selected_ids(cfg, ["kpz-demo", "heat-kernel-scaling"]) == ["heat-kernel-scaling", "kpz-demo"]


def test_list(capsys):
    assert main(["--list"]) == 0
    assert capsys.readouterr().out.split() == list(EXPERIMENT_IDS)


def test_runs_are_byte_identical(tmp_path, small_config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([str(small_config), "--output-root", str(a)]) == 0
    assert main([str(small_config), "--output-root", str(b)]) == 0
    oa, ob = _outputs(a), _outputs(b)
    assert oa and oa == ob
    for exp in SMALL["experiments_to_run"]:
        ma = json.loads((a / exp / "manifest.json").read_text())
        mb = json.loads((b / exp / "manifest.json").read_text())
        assert ma["outputs"] == mb["outputs"]
        assert ma["spec"] == mb["spec"]
    assert json.loads((a / "dials.json").read_text()) == json.loads((b / "dials.json").read_text())


def test_seed_changes_random_experiments(tmp_path, small_config):
    a, b = tmp_path / "a", tmp_path / "b"
    main([str(small_config), "--output-root", str(a), "--only", "quasi-operator-suite"])
    main([str(small_config), "--output-root", str(b), "--only", "quasi-operator-suite", "--seed", "5"])
    assert _outputs(a) != _outputs(b)


def test_parallel_matches_serial(tmp_path, small_config):
    a, b = tmp_path / "serial", tmp_path / "parallel"
    assert main([str(small_config), "--output-root", str(a)]) == 0
    assert main([str(small_config), "--output-root", str(b), "--jobs", "2"]) == 0
    assert _outputs(a) == _outputs(b)


def test_only_filters(tmp_path, small_config):
    out = tmp_path / "o"
    assert main([str(small_config), "--output-root", str(out), "--only", "burgers-colehopf"]) == 0
    assert sorted(p.name for p in out.iterdir() if p.is_dir()) == ["burgers-colehopf"]


def test_csv_quoting(tmp_path, small_config):
    out = tmp_path / "o"
    main([str(small_config), "--output-root", str(out), "--only", "burgers-colehopf"])
    text = (out / "burgers-colehopf" / "error_vs_resolution.csv").read_bytes()
    assert text.endswith(b"\r\n")
    assert text.split(b"\r\n")[0].count(b",") >= 1


def test_plots_flag(tmp_path, small_config):
    pytest.importorskip("matplotlib")
    out = tmp_path / "o"
    main([str(small_config), "--output-root", str(out), "--only", "heat-kernel-scaling", "--plots"])
    assert list((out / "heat-kernel-scaling").glob("*.svg"))


def test_failure_persists_the_partial_trace(tmp_path):
    from paralab.experiments import run
    from paralab.solvers import ConvergenceFailure

    p = load_config(None)["experiments"]["burgers-colehopf"]
    p = {**p, "resolutions": [32], "n_times": 51, "max_iter": 2, "tol": 1e-14}
    with pytest.raises(ConvergenceFailure):
        run("burgers-colehopf", p, tmp_path / "b")
    assert (tmp_path / "b" / "failure.txt").read_text().startswith("ConvergenceFailure")
    rows = (tmp_path / "b" / "failure_trace.csv").read_text().splitlines()
    assert len(rows) == 3
    assert not (tmp_path / "b" / "manifest.json").exists()


def test_cli_reports_failures_and_runs_the_rest(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(
        yaml.safe_dump(
            {
                "experiments_to_run": ["heat-kernel-scaling", "burgers-colehopf"],
                "experiments": {
                    "heat-kernel-scaling": {"n": 512},
                    "burgers-colehopf": {"resolutions": [32], "n_times": 51, "max_iter": 2, "tol": 1e-14},
                },
            }
        )
    )
    out = tmp_path / "o"
    assert main([str(cfg), "--output-root", str(out)]) == 1
    assert (out / "heat-kernel-scaling" / "manifest.json").exists()
    assert (out / "burgers-colehopf" / "failure_trace.csv").exists()
