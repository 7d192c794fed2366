from __future__ import annotations

import json
import subprocess
import sys

import pytest

from ofa_multitarget import cli
from ofa_multitarget.bench import ExperimentConfig
from ofa_multitarget.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_spaces_lists_the_four_presets(capsys):
    code, out, _ = run(capsys, "spaces")
    assert code == EXIT_OK
    assert sorted(out.split()) == ["mobilenetv3", "proxylessnas", "resnet50d", "tiny-fixture"]
    code, out, _ = run(capsys, "spaces", "--format", "json")
    assert set(json.loads(out)) == {"mobilenetv3", "proxylessnas", "resnet50d", "tiny-fixture"}


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ofa_multitarget", "spaces"], capture_output=True, text=True)
    assert res.returncode == 0 and "tiny-fixture" in res.stdout


def test_search_prints_feasible_outcome(capsys):
    code, out, err = run(capsys, "search", "--space", "tiny-fixture", "--target", "8.0", "--seed", "1", "--iterations", "20")
    assert code == EXIT_OK and err == ""
    data = json.loads(out)
    assert data["best"]["latency"] <= 8.0 and data["space"] == "tiny-fixture"


def test_search_log(capsys, tmp_path):
    log = tmp_path / "log.jsonl"
    code, _, _ = run(capsys, "search", "--space", "tiny-fixture", "--target", "6", "--iterations", "5", "--log", str(log))
    assert code == EXIT_OK and len(log.read_text().splitlines()) == 6


def test_search_below_floor_exits_3(capsys):
    code, out, err = run(capsys, "search", "--space", "tiny-fixture", "--target", "1.0")
    assert code == EXIT_INFEASIBLE and out == ""
    assert "4.0" in err


def test_search_needs_a_single_target(capsys):
    code, _, err = run(capsys, "search", "--space", "tiny-fixture")
    assert code == EXIT_CONFIG and "--target" in err


def test_malformed_config_exits_2_without_files(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    before = set(tmp_path.iterdir())
    for cmd in ("search", "multi", "bench"):
        code, out, _ = run(capsys, cmd, "--config", str(bad))
        assert code == EXIT_CONFIG and out == ""
    assert set(tmp_path.iterdir()) == before


def test_unknown_flag_and_space_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["search", "--bogus"])
    assert exc.value.code == EXIT_CONFIG
    code, _, err = run(capsys, "search", "--space", "nope", "--target", "5")
    assert code == EXIT_CONFIG and "nope" in err
    with pytest.raises(SystemExit) as exc:
        main(["multi", "--targets", "a,b"])
    assert exc.value.code == EXIT_CONFIG


@pytest.mark.parametrize(
    "strategy,order",
    [("top-down", [60.0, 45.0, 30.0, 15.0]), ("bottom-up", [15.0, 30.0, 45.0, 60.0]), ("vanilla", [60.0, 45.0, 30.0, 15.0])],
)
def test_multi_order_and_output(capsys, tmp_path, strategy, order):
    code, out, _ = run(
        capsys, "multi", "--strategy", strategy, "--targets", "60,45,30,15", "--iterations", "8", "--n-rest", "3",
        "--population", "12", "--output-dir", str(tmp_path),
    )
    assert code == EXIT_OK
    written = json.loads((tmp_path / f"multi_{strategy}.json").read_text())
    assert written["order_processed"] == order
    rows = [line.split("\t") for line in out.splitlines()]
    assert rows[0][0] == "target_ms" and [float(r[0]) for r in rows[1:-1]] == order
    assert rows[-1][0] == "total"


def test_multi_summary_obeys_budget_law(capsys, tmp_path):
    # Targets at or above the maximal latency never bind: no rejections.
    code, out, _ = run(
        capsys, "multi", "--strategy", "bottom-up", "--targets", "60,61,62", "--iterations", "10", "--n-rest", "4",
        "--population", "8", "--output-dir", str(tmp_path),
    )
    assert code == EXIT_OK
    total = out.splitlines()[-1].split("\t")
    assert int(total[4]) == 0 and int(total[5]) == 10 + 2 * 4


def test_multi_uses_env_output_dir(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    code, _, _ = run(capsys, "multi", "--strategy", "vanilla", "--targets", "50", "--iterations", "2", "--n-rest", "1", "--population", "8")
    assert code == EXIT_OK and (tmp_path / "env" / "multi_vanilla.json").exists()


def test_multi_needs_one_strategy(capsys):
    code, _, err = run(capsys, "multi", "--targets", "50")
    assert code == EXIT_CONFIG and "--strategy" in err


def test_multi_bad_n_rest(capsys):
    code, _, _ = run(capsys, "multi", "--strategy", "vanilla", "--targets", "50", "--n-rest", "lots")
    assert code == EXIT_CONFIG


def test_oracle(capsys):
    code, out, _ = run(capsys, "oracle", "--space", "tiny-fixture", "--target", "4.0")
    assert code == EXIT_OK
    data = json.loads(out)
    assert data["best_config"]["depths"] == [1, 1] and data["target_ms"] == 4.0
    code, _, _ = run(capsys, "oracle", "--space", "mobilenetv3", "--target", "30")
    assert code == EXIT_CONFIG
    code, _, _ = run(capsys, "oracle", "--space", "tiny-fixture", "--target", "3")
    assert code == EXIT_INFEASIBLE


@pytest.fixture()
def small_config(tmp_path):
    cfg = ExperimentConfig(
        space_name="tiny-fixture", targets_ms=(5.0, 6.0, 8.0), repetitions=2, n_first=6, n_rest=2, jobs=1,
    )
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    return path


def test_bench_writes_all_outputs(capsys, tmp_path, small_config):
    out_dir = tmp_path / "out"
    code, out, _ = run(capsys, "bench", "--config", str(small_config), "--output-dir", str(out_dir))
    assert code == EXIT_OK
    names = {p.name for p in out_dir.iterdir()}
    assert {"report.csv", "report.json", "raw_runs.jsonl", "plot_k.svg", "plot_accuracy.svg", "plot_profile.svg"} <= names
    assert sorted(out.split()) == sorted(str(out_dir / n) for n in names)


def test_bench_is_byte_deterministic(capsys, tmp_path, small_config):
    for name in ("a", "b"):
        assert run(capsys, "bench", "--config", str(small_config), "--output-dir", str(tmp_path / name))[0] == EXIT_OK
    for f in ("raw_runs.jsonl", "report.csv", "plot_k.svg"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_bench_flags_override_config(capsys, tmp_path, small_config):
    out_dir = tmp_path / "o"
    code, _, _ = run(
        capsys, "bench", "--config", str(small_config), "--output-dir", str(out_dir), "--repetitions", "1",
        "--format", "jsonl",
    )
    assert code == EXIT_OK
    assert [p.name for p in out_dir.iterdir()] == ["raw_runs.jsonl"]
    reps = {json.loads(line)["repetition"] for line in (out_dir / "raw_runs.jsonl").read_text().splitlines()}
    assert reps == {0}


def test_bench_io_error_exits_4(capsys, tmp_path, small_config):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "bench", "--config", str(small_config), "--output-dir", str(blocker / "sub"))
    assert code == EXIT_IO and "I/O error" in err


def test_bench_requires_config(capsys):
    code, _, err = run(capsys, "bench")
    assert code == EXIT_CONFIG and "--config" in err


def test_bench_reports_incomplete_cells(capsys, tmp_path):
    cfg = ExperimentConfig(space_name="tiny-fixture", targets_ms=(8.0, 3.0), repetitions=1, n_first=4, n_rest=2, jobs=1)
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    code, _, err = run(capsys, "bench", "--config", str(path), "--output-dir", str(tmp_path / "o"), "--format", "csv")
    assert code == EXIT_OK and "incomplete cell" in err
