import json

import pytest

from bass_sim.cli import main
from bass_sim.metrics import load_report
from bass_sim.topology import load_scenario


def make_scenario(tmp_path, name="scenario.json", extra=()):
    path = tmp_path / name
    code = main(
        ["generate", "--clients", "12", "--servers", "4", "--origins", "3",
         "--seed", "5", "--out", str(path), *extra]
    )
    assert code == 0
    return path


class TestGenerate:
    def test_defaults_are_paper_scale(self, tmp_path, capsys):
        out = tmp_path / "default.json"
        assert main(["generate", "--out", str(out)]) == 0
        scenario = load_scenario(out)
        assert len(scenario.clients) == 60
        assert len(scenario.agg_servers) == 8
        assert "60 clients" in capsys.readouterr().out

    def test_same_seed_same_bytes(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert main(["generate", "--seed", "1", "--out", str(a)]) == 0
        assert main(["generate", "--seed", "1", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_zero_clients_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["generate", "--clients", "0", "--out", str(tmp_path / "x.json")])
        assert exc.value.code == 2


class TestRun:
    def test_outputs_and_summary(self, tmp_path, capsys):
        scenario = make_scenario(tmp_path)
        out = tmp_path / "out"
        code = main(
            ["run", "--scenario", str(scenario), "--policy", "bass_greedy",
             "--epochs", "2", "--seed", "1", "--out", str(out)]
        )
        assert code == 0
        for name in ("records.json", "per_client.csv", "summary.json"):
            assert (out / name).exists()
        stdout = capsys.readouterr().out
        assert "frac_gamma_one" in stdout
        report = load_report(out / "summary.json")
        assert report.client_epochs == 24
        assert report.gamma_fraction_one is not None

    def test_identical_invocations_identical_bytes(self, tmp_path):
        scenario = make_scenario(tmp_path)
        outputs = []
        for name in ("run1", "run2"):
            out = tmp_path / name
            assert main(
                ["run", "--scenario", str(scenario), "--policy", "random",
                 "--epochs", "3", "--seed", "9", "--out", str(out)]
            ) == 0
            outputs.append(out)
        for filename in ("records.json", "per_client.csv", "summary.json"):
            assert (outputs[0] / filename).read_bytes() == (outputs[1] / filename).read_bytes()

    def test_zero_epochs(self, tmp_path, capsys):
        scenario = make_scenario(tmp_path)
        out = tmp_path / "empty"
        assert main(
            ["run", "--scenario", str(scenario), "--epochs", "0", "--out", str(out)]
        ) == 0
        report = load_report(out / "summary.json")
        assert report.epochs == 0
        assert report.client_epochs == 0
        assert report.gamma_mean is None
        assert "mean_gamma=n/a" in capsys.readouterr().out

    def test_missing_scenario_exits_1(self, tmp_path, capsys):
        code = main(
            ["run", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]
        )
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_malformed_scenario_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"seed": 1}', encoding="utf-8")
        code = main(["run", "--scenario", str(bad), "--out", str(tmp_path / "o")])
        assert code == 1
        assert "missing field" in capsys.readouterr().err


class TestCompare:
    def test_direction_and_delta_column(self, tmp_path, capsys):
        scenario = make_scenario(tmp_path)
        out = tmp_path / "cmp"
        code = main(
            ["compare", "--scenario", str(scenario), "--policies", "bass_greedy,random",
             "--epochs", "2", "--seed", "1", "--out", str(out)]
        )
        assert code == 0
        stdout = capsys.readouterr().out
        assert "delta(random-bass_greedy)" in stdout
        bass = load_report(out / "summary_bass_greedy.json")
        rand = load_report(out / "summary_random.json")
        assert bass.gamma_mean >= rand.gamma_mean
        assert bass.gamma_fraction_one > rand.gamma_fraction_one

    def test_single_policy_has_no_delta(self, tmp_path, capsys):
        scenario = make_scenario(tmp_path)
        assert main(
            ["compare", "--scenario", str(scenario), "--policies", "bass_greedy",
             "--epochs", "1", "--seed", "1"]
        ) == 0
        assert "delta" not in capsys.readouterr().out

    def test_unknown_policy_lists_valid_names(self, tmp_path, capsys):
        scenario = make_scenario(tmp_path)
        with pytest.raises(SystemExit) as exc:
            main(["compare", "--scenario", str(scenario), "--policies", "bass_greedy,oracle"])
        assert exc.value.code == 2
        err = capsys.readouterr().err
        assert "oracle" in err
        assert "bass_exact" in err and "bass_greedy" in err and "random" in err

    def test_stdout_reproducible(self, tmp_path, capsys):
        scenario = make_scenario(tmp_path)
        capsys.readouterr()  # drop the generate line
        argv = ["compare", "--scenario", str(scenario), "--policies", "bass_greedy,random",
                "--epochs", "2", "--seed", "3"]
        assert main(argv) == 0
        first = capsys.readouterr().out
        assert main(argv) == 0
        assert capsys.readouterr().out == first


class TestReport:
    def test_report_matches_run_summary(self, tmp_path):
        scenario = make_scenario(tmp_path)
        out = tmp_path / "out"
        assert main(
            ["run", "--scenario", str(scenario), "--epochs", "2", "--seed", "2",
             "--out", str(out)]
        ) == 0
        regen = tmp_path / "summary2.json"
        assert main(
            ["report", "--records", str(out / "records.json"), "--format", "json",
             "--out", str(regen)]
        ) == 0
        assert regen.read_bytes() == (out / "summary.json").read_bytes()

    def test_csv_format(self, tmp_path):
        scenario = make_scenario(tmp_path)
        out = tmp_path / "out"
        assert main(
            ["run", "--scenario", str(scenario), "--epochs", "1", "--seed", "2",
             "--out", str(out)]
        ) == 0
        csv_path = tmp_path / "summary.csv"
        assert main(
            ["report", "--records", str(out / "records.json"), "--format", "csv",
             "--out", str(csv_path)]
        ) == 0
        assert csv_path.read_text(encoding="utf-8").startswith("key,value")

    def test_missing_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2
