import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from cascade_rl import baselines, bestperm
from cascade_rl.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main, oracle_check, parse_seeds

FIXTURE = Path(__file__).parent / "data" / "ratings.csv"


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def instance(tmp_path_factory):
    path = tmp_path_factory.mktemp("inst") / "inst.json"
    assert main(["gen-synthetic", "--horizon", "3", "--items", "3", "--list-len", "2", "--out", str(path)]) == EXIT_OK
    return path


def test_gen_synthetic(tmp_path):
    out = tmp_path / "inst.json"
    assert main(["gen-synthetic", "--horizon", "5", "--items", "4", "--list-len", "3", "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["num_states"] == 9


@pytest.mark.parametrize("argv", [
    ["gen-synthetic", "--horizon", "5", "--items", "4", "--list-len", "3"],
    ["gen-synthetic", "--horizon", "5", "--items", "4", "--list-len", "4", "--out", "x.json"],
    ["gen-synthetic", "--horizon", "five", "--items", "4", "--list-len", "3", "--out", "x.json"],
    ["no-such-command"],
    [],
])
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_USAGE
    assert not (tmp_path / "x.json").exists()


def test_gen_ratings(tmp_path):
    out = tmp_path / "r.json"
    argv = ["gen-ratings", "--ratings", str(FIXTURE), "--states", "20", "--items", "10", "--out", str(out)]
    assert main(argv) == EXIT_OK
    doc = json.loads(out.read_text())
    assert (doc["num_states"], doc["num_items"], doc["max_list_len"]) == (20, 10, 3)


def test_gen_ratings_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,nope\n")
    out = str(tmp_path / "r.json")
    assert main(["gen-ratings", "--ratings", str(bad), "--states", "1", "--items", "1", "--out", out]) == EXIT_USAGE
    assert main(["gen-ratings", "--ratings", str(FIXTURE), "--states", "900", "--items", "1", "--out", out]) == EXIT_USAGE
    missing = str(tmp_path / "absent.csv")
    assert main(["gen-ratings", "--ratings", missing, "--states", "1", "--items", "1", "--out", out]) == EXIT_FAILURE


class TestRunRegret:
    def test_single_episode_rows(self, instance, tmp_path):
        out = tmp_path / "r.csv"
        argv = ["run-regret", "--mdp", str(instance), "--algo", "cascading-vi", "--episodes", "1",
                "--seeds", "3", "--out", str(out)]
        assert main(argv) == EXIT_OK
        rows = _read(out)
        assert rows[0] == ["algorithm", "seed", "episode", "inst_regret", "cum_regret", "wallclock_ms"]
        assert len(rows) == 1 + 3
        assert [r[1] for r in rows[1:]] == ["0", "1", "2"]
        assert all(float(r[5]) >= 0.0 for r in rows[1:])

    @pytest.mark.parametrize("algo", ["cascading-vi", "adapt-vi", "cascading-vi-oracle", "cascading-vi-bonus"])
    def test_prefix_sums(self, instance, tmp_path, algo):
        out = tmp_path / "r.csv"
        argv = ["run-regret", "--mdp", str(instance), "--algo", algo, "--episodes", "40",
                "--seeds", "4,9", "--out", str(out)]
        assert main(argv) == EXIT_OK
        rows = _read(out)[1:]
        assert len(rows) == 80
        for seed in ("4", "9"):
            mine = [r for r in rows if r[1] == seed]
            assert [int(r[2]) for r in mine] == list(range(1, 41))
            assert all(r[0] == algo for r in mine)
            inst = np.array([float(r[3]) for r in mine])
            np.testing.assert_allclose([float(r[4]) for r in mine], np.cumsum(inst), atol=1e-12)

    def test_byte_identical(self, instance, tmp_path):
        paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
        for path, jobs in zip(paths, ("1", "2")):
            argv = ["run-regret", "--mdp", str(instance), "--algo", "cascading-vi", "--episodes", "30",
                    "--seeds", "3", "--jobs", jobs, "--no-timing", "--out", str(path)]
            assert main(argv) == EXIT_OK
        assert paths[0].read_bytes() == paths[1].read_bytes()
        assert _read(paths[0])[1][5] == ""

    def test_stdout(self, instance, capsys):
        assert main(["run-regret", "--mdp", str(instance), "--algo", "adapt-vi", "--episodes", "2"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("algorithm,seed,episode") and len(lines) == 3

    @pytest.mark.parametrize("extra", [
        ["--algo", "nope", "--episodes", "2"],
        ["--algo", "cascading-vi", "--episodes", "0"],
        ["--algo", "cascading-vi", "--episodes", "2", "--delta", "1.5"],
        ["--algo", "cascading-vi", "--episodes", "2", "--seeds", "1,1"],
        ["--algo", "cascading-vi", "--episodes", "2", "--jobs", "0"],
    ])
    def test_validation(self, instance, extra):
        assert main(["run-regret", "--mdp", str(instance), *extra]) == EXIT_USAGE

    def test_missing_instance(self, tmp_path):
        argv = ["run-regret", "--mdp", str(tmp_path / "none.json"), "--algo", "cascading-vi", "--episodes", "2"]
        assert main(argv) == EXIT_USAGE

    def test_enumeration_cap_is_a_runtime_failure(self, instance, monkeypatch):
        original = baselines.action_table

        def capped(n, m, cap=2):
            return original(n, m, 2)

        monkeypatch.setattr(baselines, "action_table", capped)
        argv = ["run-regret", "--mdp", str(instance), "--algo", "adapt-vi", "--episodes", "2"]
        assert main(argv) == EXIT_FAILURE

    def test_jobs_from_environment(self, instance, tmp_path, monkeypatch):
        monkeypatch.setenv("CASCADE_RL_JOBS", "zero")
        assert main(["run-regret", "--mdp", str(instance), "--algo", "cascading-vi", "--episodes", "2"]) == EXIT_USAGE
        monkeypatch.setenv("CASCADE_RL_JOBS", "2")
        out = tmp_path / "r.csv"
        argv = ["run-regret", "--mdp", str(instance), "--algo", "cascading-vi", "--episodes", "2",
                "--seeds", "2", "--out", str(out)]
        assert main(argv) == EXIT_OK
        assert len(_read(out)) == 5


class TestRunBpi:
    def test_epsilon_at_horizon(self, instance, tmp_path):
        out = tmp_path / "b.csv"
        argv = ["run-bpi", "--mdp", str(instance), "--algo", "cascading-bpi", "--epsilon", "3",
                "--seeds", "2", "--out", str(out)]
        assert main(argv) == EXIT_OK
        rows = _read(out)
        assert rows[0] == ["algorithm", "seed", "episodes_used", "terminated", "achieved_gap", "wallclock_ms"]
        assert [r[2:4] for r in rows[1:]] == [["1", "true"], ["1", "true"]]

    def test_cap_and_gap(self, instance, tmp_path):
        out = tmp_path / "b.csv"
        argv = ["run-bpi", "--mdp", str(instance), "--algo", "adapt-bpi", "--epsilon", "0.1",
                "--episode-cap", "25", "--no-timing", "--out", str(out)]
        assert main(argv) == EXIT_OK
        row = _read(out)[1]
        assert row[:4] == ["adapt-bpi", "0", "25", "false"]
        assert float(row[4]) >= 0.0 and row[5] == ""

    @pytest.mark.parametrize("extra", [["--epsilon", "0"], ["--epsilon", "0.5", "--episode-cap", "0"]])
    def test_validation(self, instance, extra):
        assert main(["run-bpi", "--mdp", str(instance), "--algo", "cascading-bpi", *extra]) == EXIT_USAGE


class TestOracleCheck:
    def test_passes(self, capsys):
        assert main(["oracle-check", "--trials", "500"]) == EXIT_OK
        assert capsys.readouterr().out.strip() == "500/500 exact matches"

    def test_vacuous(self, capsys):
        assert main(["oracle-check", "--trials", "0"]) == EXIT_OK
        assert capsys.readouterr().out.strip() == "0/0 exact matches"

    def test_injected_fault(self, monkeypatch, capsys):
        real = bestperm.best_perm

        def faulty(u, w, m):
            action, value = real(u, w, m)
            return action, value + 1e-9

        monkeypatch.setattr(bestperm, "best_perm", faulty)
        assert main(["oracle-check", "--trials", "50"]) == EXIT_FAILURE
        assert capsys.readouterr().out.strip() == "0/50 exact matches"

    def test_function(self):
        assert oracle_check(200, 5, 3, seed=1) == (200, 200)


def test_parse_seeds():
    assert parse_seeds("3") == [0, 1, 2]
    assert parse_seeds("5,2") == [5, 2]
    assert parse_seeds("7,") == [7]


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "cascade_rl", "oracle-check", "--trials", "20"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and proc.stdout.strip() == "20/20 exact matches"
    proc = subprocess.run([sys.executable, "-m", "cascade_rl", "run-regret"], capture_output=True, text=True)
    assert proc.returncode == 1 and "error" in proc.stderr
