import json

import numpy as np
import pytest

from lqlearn.cli import main, sweep_cells
from lqlearn.lemmas import ordering_contraction_margin
from lqlearn.model import LqgProblem, LqProblem
from lqlearn.problem_io import (
    ProblemFormatError,
    ValidationError,
    config_from_dict,
    load_config,
    load_problem,
)

SCALAR = {
    "n": 1,
    "m": 1,
    "F": [[0.9]],
    "G": [[1.0]],
    "Q": [[1.0]],
    "R": [[1.0]],
    "Qf": [[1.0]],
    "p": 0.1,
}


def write_json(path, data):
    path.write_text(json.dumps(data, indent=1))
    return str(path)


@pytest.fixture
def scalar_file(tmp_path):
    return write_json(tmp_path / "scalar.json", SCALAR)


@pytest.fixture
def lqg_file(tmp_path):
    data = dict(SCALAR)
    data.update(
        k=1,
        H=[[1.0]],
        OmegaXi=[[0.01]],
        OmegaZeta=[[0.01]],
        Sigma1=[[0.01]],
        xhat1=[0.0],
    )
    return write_json(tmp_path / "observed.json", data)


# ---------------------------------------------------------------- parsing


def test_load_problem_minimal_scalar(scalar_file):
    prob = load_problem(scalar_file)
    assert isinstance(prob, LqProblem)
    assert prob.n == 1 and prob.m == 1


def test_load_problem_detects_observation_map(lqg_file):
    prob = load_problem(lqg_file)
    assert isinstance(prob, LqgProblem)
    assert prob.k == 1


def test_load_problem_reports_definiteness(tmp_path):
    bad = dict(SCALAR, R=[[0.0]])
    with pytest.raises(ValidationError) as info:
        load_problem(write_json(tmp_path / "bad.json", bad))
    assert "R not positive definite" in str(info.value)


def test_load_problem_reports_parse_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n "n": 1,\n oops\n}')
    with pytest.raises(ProblemFormatError) as info:
        load_problem(str(path))
    assert "line 3" in str(info.value)


def test_load_problem_missing_key(tmp_path):
    data = dict(SCALAR)
    del data["Qf"]
    with pytest.raises(ProblemFormatError) as info:
        load_problem(write_json(tmp_path / "missing.json", data))
    assert "Qf" in str(info.value)


def test_load_problem_size_mismatch(tmp_path):
    with pytest.raises(ValidationError):
        load_problem(write_json(tmp_path / "sizes.json", dict(SCALAR, n=2)))


def test_config_rejects_unknown_keys():
    with pytest.raises(ProblemFormatError):
        config_from_dict({"learning_rate": 1.0})


def test_config_rejects_zero_steps():
    with pytest.raises(ValidationError):
        config_from_dict({"steps": 0})


def test_config_overrides(tmp_path):
    path = write_json(tmp_path / "cfg.json", {"steps": 10, "seed": 1})
    cfg = load_config(path, seed=7)
    assert cfg.seed == 7
    assert cfg.steps == 10


# ---------------------------------------------------------------- solve / check


def test_solve_prints_closed_form_for_zero_dynamics(tmp_path, capsys):
    data = dict(SCALAR, F=[[0.0]], Qf=[[2.0]], p=0.5)
    path = write_json(tmp_path / "zero.json", data)
    assert main(["solve", "--problem", path]) == 0
    out = capsys.readouterr().out
    assert "1.5" in out
    assert "stability: ok" in out


def test_solve_fails_on_unstabilizable_problem(tmp_path, capsys):
    # non-normal dynamics: finite expected cost, but the closed-loop norm
    # cannot meet the stop-compensated budget (no control authority)
    data = dict(
        SCALAR,
        n=2,
        F=[[0.9, 1.0], [0.0, 0.9]],
        G=[[0.0], [0.0]],
        Q=[[1.0, 0.0], [0.0, 1.0]],
        Qf=[[1.0, 0.0], [0.0, 1.0]],
    )
    path = write_json(tmp_path / "wild.json", data)
    assert main(["solve", "--problem", path]) == 2


def test_solve_divergent_problem_exits_oracle_code(tmp_path, capsys):
    data = dict(SCALAR, F=[[2.0]], G=[[0.0]])
    path = write_json(tmp_path / "divergent.json", data)
    assert main(["solve", "--problem", path]) == 4
    assert "diverging" in capsys.readouterr().err


def test_solve_reference_scalar_values(scalar_file, capsys):
    assert main(["solve", "--problem", scalar_file]) == 0
    out = capsys.readouterr().out
    root = (0.729 + np.sqrt(0.729**2 + 4.0)) / 2.0
    assert f"{root:.6f}"[:7] in out


def test_check_reports_hypotheses(scalar_file, capsys, tmp_path):
    assert main(["check", "--problem", scalar_file]) == 0
    out = capsys.readouterr().out
    assert "initial_fit_dominates_optimum: True" in out
    assert "stability_budget_satisfied: True" in out
    cfg = write_json(tmp_path / "small.json", {"pi0_scale": 0.1})
    assert main(["check", "--problem", scalar_file, "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "initial_fit_dominates_optimum: False" in out


def test_check_flags_budget_failure(tmp_path, capsys):
    data = dict(
        SCALAR,
        n=2,
        F=[[0.9, 1.0], [0.0, 0.9]],
        G=[[0.0], [0.0]],
        Q=[[1.0, 0.0], [0.0, 1.0]],
        Qf=[[1.0, 0.0], [0.0, 1.0]],
    )
    path = write_json(tmp_path / "wild.json", data)
    assert main(["check", "--problem", path]) == 0
    assert "stability_budget_satisfied: False" in capsys.readouterr().out


# ---------------------------------------------------------------- train


def train_config(tmp_path, **overrides):
    data = {
        "algorithm": "td0",
        "steps": 2000,
        "seed": 3,
        "metrics_stride": 10,
        "restart_radius": 3.0,
        "restart_ramp_episodes": 50,
    }
    data.update(overrides)
    return write_json(tmp_path / "train.json", data)


def test_train_writes_csv_and_summary(scalar_file, tmp_path, capsys):
    cfg = train_config(tmp_path)
    out_csv = tmp_path / "run.csv"
    assert main(["train", "--problem", scalar_file, "--config", cfg, "--out", str(out_csv), "--compare"]) == 0
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "t,episode,stopped,delta,alpha,state_norm,pi_error,u_norm"
    assert len(lines) == 1 + 2000 // 10
    printed = capsys.readouterr().out
    assert "final_pi_error" in printed
    assert "config_hash" in printed


def test_train_is_byte_deterministic(scalar_file, tmp_path):
    cfg = train_config(tmp_path)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["train", "--problem", scalar_file, "--config", cfg, "--out", str(a), "--compare"]) == 0
    assert main(["train", "--problem", scalar_file, "--config", cfg, "--out", str(b), "--compare"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_train_seed_flag_overrides_config(scalar_file, tmp_path):
    cfg = train_config(tmp_path)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["train", "--problem", scalar_file, "--config", cfg, "--out", str(a), "--compare"])
    main(["train", "--problem", scalar_file, "--config", cfg, "--out", str(b), "--seed", "99", "--compare"])
    assert a.read_bytes() != b.read_bytes()


def test_train_rejects_zero_steps(scalar_file, tmp_path, capsys):
    cfg = train_config(tmp_path, steps=0)
    assert main(["train", "--problem", scalar_file, "--config", cfg]) == 2


def test_train_divergence_exit_preserves_partial_csv(scalar_file, tmp_path, capsys):
    cfg = train_config(tmp_path, divergence_ceiling=1.001, pi0_scale=1.0)
    out_csv = tmp_path / "partial.csv"
    assert main(["train", "--problem", scalar_file, "--config", cfg, "--out", str(out_csv)]) == 3
    assert out_csv.exists()
    assert out_csv.read_text().startswith("t,episode")


def test_train_kf_csv_has_extended_columns(lqg_file, tmp_path):
    cfg = train_config(tmp_path, algorithm="kf-td0", steps=500)
    out_csv = tmp_path / "kf.csv"
    assert main(["train", "--problem", lqg_file, "--config", cfg, "--out", str(out_csv), "--compare"]) == 0
    header = out_csv.read_text().splitlines()[0]
    assert header.endswith("est_error_norm,sigma_trace")


def test_train_kf_requires_observation_map(scalar_file, tmp_path):
    cfg = train_config(tmp_path, algorithm="kf-td0", steps=100)
    assert main(["train", "--problem", scalar_file, "--config", cfg]) == 2


def test_train_out_dir_from_environment(scalar_file, tmp_path, monkeypatch):
    out_dir = tmp_path / "runs"
    monkeypatch.setenv("LQLEARN_OUT_DIR", str(out_dir))
    cfg = train_config(tmp_path, steps=200)
    assert main(["train", "--problem", scalar_file, "--config", cfg, "--compare"]) == 0
    produced = list(out_dir.glob("run_*.csv"))
    assert len(produced) == 1


# ---------------------------------------------------------------- lemmas


def test_lemmas_pass_and_print_margins(capsys):
    assert main(["lemmas", "--trials", "60", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    for name in ("woodbury-identity", "ordering-contraction", "gain-stability"):
        assert name in out
    assert "worst_margin" in out


def test_lemmas_zero_trials_is_empty_pass(capsys):
    assert main(["lemmas", "--trials", "0"]) == 0
    assert "nothing to check" in capsys.readouterr().out


def test_ordering_checker_detects_violations():
    # negative control: drop the ordering hypothesis and the bound breaks
    a = np.diag([1.0, 1.0])
    b = np.diag([2.0, 0.5])
    assert ordering_contraction_margin(a, b) > 0


# ---------------------------------------------------------------- sweep


def sweep_file(tmp_path, grid, base=None):
    data = {"base": base or {"algorithm": "td0", "steps": 400, "metrics_stride": 50}, "grid": grid}
    return write_json(tmp_path / "sweep.json", data)


def test_sweep_cells_cartesian_order():
    cells = sweep_cells({"steps": 5}, {"seed": [1, 2], "sigma_nu": [0.0, 0.1]})
    assert len(cells) == 4
    assert cells[0] == {"steps": 5, "seed": 1, "sigma_nu": 0.0}


def test_sweep_runs_grid_and_indexes(scalar_file, tmp_path):
    spec = sweep_file(tmp_path, {"seed": [1, 2], "pi0_scale": [5.0, 20.0]})
    out_dir = tmp_path / "sweep_out"
    assert main(["sweep", "--problem", scalar_file, "--config", spec, "--out", str(out_dir)]) == 0
    index = json.loads((out_dir / "index.json").read_text())
    assert len(index) == 4
    hashes = [e["config_hash"] for e in index]
    assert hashes == sorted(hashes)
    assert all(e["status"] == "ok" for e in index)
    assert all((out_dir / e["csv"]).exists() for e in index)
    assert all("wall_clock" not in e["summary"] for e in index)


def test_sweep_single_cell_matches_train(scalar_file, tmp_path):
    spec = sweep_file(
        tmp_path,
        {"seed": [3]},
        base={"algorithm": "td0", "steps": 400, "metrics_stride": 50},
    )
    out_dir = tmp_path / "one"
    assert main(["sweep", "--problem", scalar_file, "--config", spec, "--out", str(out_dir)]) == 0
    index = json.loads((out_dir / "index.json").read_text())
    cell_csv = (out_dir / index[0]["csv"]).read_bytes()
    cfg = write_json(
        tmp_path / "equiv.json",
        {"algorithm": "td0", "steps": 400, "metrics_stride": 50, "seed": 3},
    )
    direct = tmp_path / "direct.csv"
    assert main(["train", "--problem", scalar_file, "--config", str(cfg), "--out", str(direct), "--compare"]) == 0
    assert cell_csv == direct.read_bytes()


def test_sweep_deterministic_across_reruns(scalar_file, tmp_path):
    spec = sweep_file(tmp_path, {"seed": [1, 2]})
    d1, d2 = tmp_path / "s1", tmp_path / "s2"
    main(["sweep", "--problem", scalar_file, "--config", spec, "--out", str(d1)])
    main(["sweep", "--problem", scalar_file, "--config", spec, "--out", str(d2)])
    assert (d1 / "index.json").read_bytes() == (d2 / "index.json").read_bytes()
    for entry in json.loads((d1 / "index.json").read_text()):
        assert (d1 / entry["csv"]).read_bytes() == (d2 / entry["csv"]).read_bytes()


def test_sweep_parallel_matches_serial(scalar_file, tmp_path):
    spec = sweep_file(tmp_path, {"seed": [1, 2, 3]})
    ser, par = tmp_path / "ser", tmp_path / "par"
    assert main(["sweep", "--problem", scalar_file, "--config", spec, "--out", str(ser)]) == 0
    assert main(["sweep", "--problem", scalar_file, "--config", spec, "--out", str(par), "--parallel", "2"]) == 0
    assert (ser / "index.json").read_bytes() == (par / "index.json").read_bytes()


def test_sweep_records_failed_cells(scalar_file, tmp_path):
    spec = sweep_file(
        tmp_path,
        {"seed": [1]},
        base={"algorithm": "td0", "steps": 5000, "pi0_scale": 1.0, "divergence_ceiling": 1.001},
    )
    out_dir = tmp_path / "failing"
    code = main(["sweep", "--problem", scalar_file, "--config", spec, "--out", str(out_dir)])
    assert code == 3
    index = json.loads((out_dir / "index.json").read_text())
    assert index[0]["status"] == "failed"
    assert "error" in index[0]


# ---------------------------------------------------------------- report


def test_report_renders_figures(scalar_file, tmp_path):
    cfg = train_config(tmp_path, steps=500)
    out_csv = tmp_path / "run.csv"
    main(["train", "--problem", scalar_file, "--config", cfg, "--out", str(out_csv), "--compare"])
    assert main(["report", str(out_csv), "--out", str(tmp_path / "figs")]) == 0
    png = tmp_path / "figs" / "run.png"
    assert png.exists()
    assert png.stat().st_size > 1000
