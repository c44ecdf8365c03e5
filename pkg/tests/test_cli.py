import json

import pytest
import yaml
from click.testing import CliRunner

from fleetplan.cli import main
from fleetplan.scenario import (ScenarioConfig, ScenarioError, SimParams,
                                TaskConfig, UncertainCellConfig, load_scenario,
                                save_scenario, scenario_from_dict,
                                scenario_to_dict)
from fleetplan.trace import TraceError, read_trace, validate_trace, write_trace


def sample_config():
    return ScenarioConfig(
        width=6, height=2,
        obstacles=[(2, 1)],
        uncertain_cells=[UncertainCellConfig(cell=(3, 0), occupied=False,
                                             prior=0.4)],
        agents=[(0, 0), (5, 1)],
        tasks=[TaskConfig(id="t1", goal=[(5, 0)], t_start=0, t_end=10,
                          rewards=[0, 25, 25]),
               TaskConfig(id="t2", goal=[(0, 1)], t_start=2, t_end=12,
                          rewards=[0, 15], candidates=[1])],
        params=SimParams(max_steps=14), seed=3)


class TestScenarioRoundTrip:
    def test_dict_round_trip_is_lossless(self):
        config = sample_config()
        assert scenario_from_dict(scenario_to_dict(config)) == config

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "scenario.yaml"
        config = sample_config()
        save_scenario(config, path)
        assert load_scenario(path) == config

    def test_validation_names_the_bad_fields(self, tmp_path):
        config = sample_config()
        config.agents = [(0, 0), (9, 9)]
        config.tasks[0].rewards = [0, 25]
        save_scenario(config, tmp_path / "bad.yaml")
        with pytest.raises(ScenarioError) as exc:
            load_scenario(tmp_path / "bad.yaml")
        text = "; ".join(exc.value.problems)
        assert "agents[1]" in text and "(9, 9)" in text
        assert "tasks[0].rewards" in text

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioError):
            load_scenario(tmp_path / "nope.yaml")

    def test_non_mapping_yaml_rejected(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- just\n- a list\n")
        with pytest.raises(ScenarioError):
            load_scenario(path)


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.yaml"
    save_scenario(sample_config(), path)
    return path


class TestRunCommand:
    def test_writes_trace_and_metrics(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        result = CliRunner().invoke(main, ["run", "--scenario",
                                           str(scenario_file), "--out",
                                           str(out)])
        assert result.exit_code == 0, result.output
        records = read_trace(out / "trace.jsonl")
        assert validate_trace(records) == []
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["steps"] == len(records)
        assert metrics["realized_pure_reward"] == pytest.approx(
            metrics["realized_reward"] - metrics["total_cost"])

    def test_repeat_runs_are_byte_identical(self, scenario_file, tmp_path):
        runner = CliRunner()
        for name in ("a", "b"):
            result = runner.invoke(main, ["run", "--scenario",
                                          str(scenario_file), "--out",
                                          str(tmp_path / name), "--seed", "11"])
            assert result.exit_code == 0, result.output
        assert (tmp_path / "a" / "trace.jsonl").read_bytes() \
            == (tmp_path / "b" / "trace.jsonl").read_bytes()

    def test_invalid_scenario_exits_2(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("grid: {width: 3, height: 1}\nagents: []\n")
        result = CliRunner().invoke(main, ["run", "--scenario", str(bad)])
        assert result.exit_code == 2
        assert "invalid scenario" in result.output

    def test_no_trace_flag_skips_the_file(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        result = CliRunner().invoke(main, ["run", "--scenario",
                                           str(scenario_file), "--out",
                                           str(out), "--no-trace"])
        assert result.exit_code == 0, result.output
        assert not (out / "trace.jsonl").exists()
        assert (out / "metrics.json").exists()

    def test_render_writes_frames(self, tmp_path):
        config = ScenarioConfig(
            width=4, height=1,
            uncertain_cells=[UncertainCellConfig(cell=(2, 0))],
            agents=[(0, 0)],
            tasks=[TaskConfig(id="t1", goal=[(3, 0)], t_start=0, t_end=4,
                              rewards=[0, 10])],
            params=SimParams(max_steps=4), seed=0)
        path = tmp_path / "short.yaml"
        save_scenario(config, path)
        out = tmp_path / "out"
        result = CliRunner().invoke(main, ["run", "--scenario", str(path),
                                           "--out", str(out), "--render"])
        assert result.exit_code == 0, result.output
        records = read_trace(out / "trace.jsonl")
        frames = sorted((out / "frames").glob("*.svg"))
        assert len(frames) == len(records) > 0


class TestReplayCommand:
    def run_once(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        result = CliRunner().invoke(main, ["run", "--scenario",
                                           str(scenario_file), "--out",
                                           str(out)])
        assert result.exit_code == 0, result.output
        return out / "trace.jsonl"

    def test_clean_trace_passes(self, scenario_file, tmp_path):
        trace_path = self.run_once(scenario_file, tmp_path)
        result = CliRunner().invoke(main, ["replay", str(trace_path)])
        assert result.exit_code == 0
        assert "no violations" in result.output

    def test_injected_collision_is_caught(self, scenario_file, tmp_path):
        trace_path = self.run_once(scenario_file, tmp_path)
        records = read_trace(trace_path)
        records[1]["states"] = [records[1]["states"][0]] * 2
        write_trace(records, trace_path)
        result = CliRunner().invoke(main, ["replay", str(trace_path)])
        assert result.exit_code == 1
        assert "collision" in result.output

    def test_tampered_accounting_is_caught(self, scenario_file, tmp_path):
        trace_path = self.run_once(scenario_file, tmp_path)
        records = read_trace(trace_path)
        records[-1]["cum_cost"] += 1.0
        write_trace(records, trace_path)
        result = CliRunner().invoke(main, ["replay", str(trace_path)])
        assert result.exit_code == 1
        assert "cumulative cost" in result.output

    def test_truncated_file_exits_2(self, scenario_file, tmp_path):
        trace_path = self.run_once(scenario_file, tmp_path)
        data = trace_path.read_bytes()
        trace_path.write_bytes(data[:len(data) - 20])
        result = CliRunner().invoke(main, ["replay", str(trace_path)])
        assert result.exit_code == 2
        assert "corrupt trace" in result.output

    def test_missing_file_exits_2(self, tmp_path):
        result = CliRunner().invoke(main, ["replay",
                                           str(tmp_path / "none.jsonl")])
        assert result.exit_code == 2


class TestValidateCommand:
    def test_good_scenario(self, scenario_file):
        result = CliRunner().invoke(main, ["validate", "--scenario",
                                           str(scenario_file)])
        assert result.exit_code == 0 and "scenario OK" in result.output

    def test_bad_scenario_lists_every_problem(self, tmp_path):
        config = sample_config()
        config.agents = [(0, 0), (0, 0)]
        config.params.dp_horizon = 0
        save_scenario(config, tmp_path / "bad.yaml")
        result = CliRunner().invoke(main, ["validate", "--scenario",
                                           str(tmp_path / "bad.yaml")])
        assert result.exit_code == 2
        assert "duplicates" in result.output
        assert "dp_horizon" in result.output


class TestSolveValuesCommand:
    def test_dumps_a_table(self, scenario_file):
        result = CliRunner().invoke(main, ["solve-values", "--scenario",
                                           str(scenario_file), "--task", "t1"])
        assert result.exit_code == 0
        assert "V_G" in result.output and "horizon=10" in result.output

    def test_unknown_task_exits_2(self, scenario_file):
        result = CliRunner().invoke(main, ["solve-values", "--scenario",
                                           str(scenario_file), "--task", "zz"])
        assert result.exit_code == 2


class TestTraceIo:
    def test_round_trip(self, tmp_path):
        records = [{"t": 0, "x": [1, 2]}, {"t": 1, "x": []}]
        path = tmp_path / "t.jsonl"
        write_trace(records, path)
        assert read_trace(path) == records

    def test_bad_json_line_is_reported_with_its_number(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text('{"t": 0}\nnot json\n')
        with pytest.raises(TraceError, match="line 2"):
            read_trace(path)

    def test_validate_flags_missing_keys(self):
        assert validate_trace([{"t": 0}]) != []

    def test_validate_flags_decreasing_time(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        CliRunner().invoke(main, ["run", "--scenario", str(scenario_file),
                                  "--out", str(out)])
        records = read_trace(out / "trace.jsonl")
        swapped = [records[1], records[0]] + records[2:]
        assert any("increasing" in p for p in validate_trace(swapped))
