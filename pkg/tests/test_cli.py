import json

from replaytest.cli import main

from walkthroughs import LEVEL1, TABLE_1, asset, record, spec_doc


def write_fixture(tmp_path, text=LEVEL1):
    path = tmp_path / "input.rawlog"
    path.write_text(text)
    return str(path)


def write_spec(tmp_path, doc, name="spec.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestRecordCommand:
    def test_scripted_recording_produces_reference_trace(self, tmp_path,
                                                         capsys):
        raw_out = tmp_path / "out.rawlog"
        trace_out = tmp_path / "out.trace"
        code = main(["record", "--level", asset("levels/level1.map"),
                     "--input-fixture", write_fixture(tmp_path),
                     "--out-raw", str(raw_out), "--out-trace", str(trace_out),
                     "--grace", "40"])
        assert code == 0
        rows = [json.loads(line) for line in trace_out.read_text().splitlines()]
        triples = [(r["SourceEntity"]["name"], r["type"],
                    r.get("TargetEntity", {}).get("name")) for r in rows]
        assert triples == TABLE_1

    def test_play_writes_nothing(self, tmp_path, capsys):
        code = main(["play", "--level", asset("levels/level1.map"),
                     "--input-fixture", write_fixture(tmp_path),
                     "--headless", "--grace", "40"])
        assert code == 0
        assert list(tmp_path.glob("*.trace")) == []

    def test_replay_regenerates_trace(self, tmp_path):
        raw, trace, _ = record("level1", LEVEL1, tmp_path)
        out = tmp_path / "regen.trace"
        code = main(["replay", "--level", asset("levels/level1.map"),
                     "--raw", raw, "--out-trace", str(out), "--headless",
                     "--grace", "40"])
        assert code == 0
        assert out.read_text() == open(trace).read()


class TestTestCommand:
    def test_exit_codes_by_scenario(self, tmp_path):
        raw, trace, _ = record("level1", LEVEL1, tmp_path)
        ok = write_spec(tmp_path, spec_doc("level1", "raw", trace, raw),
                        "ok.json")
        assert main(["test", "--spec", ok]) == 0
        timeout = write_spec(
            tmp_path, spec_doc("level1_moved", "raw", trace, raw,
                               max_time=300), "timeout.json")
        assert main(["test", "--spec", timeout]) == 2
        adapted = write_spec(
            tmp_path, spec_doc("level1_moved", "high_level", trace, raw),
            "adapted.json")
        assert main(["test", "--spec", adapted]) == 0
        failing = write_spec(
            tmp_path, spec_doc("level1_blocked", "high_level", trace, raw),
            "failing.json")
        assert main(["test", "--spec", failing]) == 1

    def test_multiple_specs_exit_worst(self, tmp_path):
        raw, trace, _ = record("level1", LEVEL1, tmp_path)
        ok = write_spec(tmp_path, spec_doc("level1", "raw", trace, raw),
                        "ok.json")
        bad = write_spec(
            tmp_path, spec_doc("level1_blocked", "high_level", trace, raw),
            "bad.json")
        assert main(["test", "--spec", ok, bad]) == 1

    def test_headless_and_rendered_reports_identical(self, tmp_path, capsys):
        raw, trace, _ = record("level1", LEVEL1, tmp_path)
        spec = write_spec(tmp_path, spec_doc("level1", "raw", trace, raw))

        def run(extra):
            capsys.readouterr()
            assert main(["test", "--spec", spec] + extra) == 0
            out = capsys.readouterr().out
            doc = json.loads([l for l in out.splitlines()
                              if l.startswith("{")][-1])
            doc.pop("wall_clock_seconds")
            return doc

        assert run([]) == run(["--render"])

    def test_usage_error_is_exit_3(self, tmp_path):
        assert main(["test"]) == 3
        assert main(["bogus-subcommand"]) == 3

    def test_config_error_is_exit_3(self, tmp_path):
        bad = write_spec(tmp_path, {"level_file": "x.map", "mode": "raw"})
        assert main(["test", "--spec", bad]) == 3


class TestDiffCommand:
    def test_identical_exit_0(self, tmp_path):
        _, trace, _ = record("level1", LEVEL1, tmp_path)
        assert main(["diff", trace, trace]) == 0

    def test_truncated_trace_diverges_at_7(self, tmp_path, capsys):
        _, trace, _ = record("level1", LEVEL1, tmp_path)
        lines = open(trace).read().splitlines()
        shorter = tmp_path / "short.trace"
        shorter.write_text("\n".join(lines[:-1]) + "\n")
        capsys.readouterr()
        assert main(["diff", trace, str(shorter)]) == 1
        assert "diverged at index 7" in capsys.readouterr().out

    def test_malformed_is_exit_3(self, tmp_path):
        bad = tmp_path / "bad.trace"
        bad.write_text("{nope\n")
        _, trace, _ = record("level1", LEVEL1, tmp_path)
        assert main(["diff", trace, str(bad)]) == 3


class TestNetCheckCommand:
    def test_door_net_against_level1(self, capsys):
        code = main(["net-check", "--net", asset("levels/level1.nets.json"),
                     "--level", asset("levels/level1.map")])
        assert code == 0
        out = capsys.readouterr().out
        assert "instance door@Door1" in out
        assert "instance door@Door2" in out

    def test_unknown_entity_binding(self, tmp_path, capsys):
        companion = tmp_path / "bad.nets.json"
        companion.write_text(json.dumps({
            "nets": {"door": asset("nets/door.json")},
            "instances": [{"net": "door",
                           "bindings": {"$button": "Button1",
                                        "$door": "Door9"}}]}))
        code = main(["net-check", "--net", str(companion),
                     "--level", asset("levels/level1.map")])
        assert code == 1
        assert "Door9" in capsys.readouterr().out

    def test_arc_violation_in_file(self, tmp_path, capsys):
        bad_net = tmp_path / "bad.json"
        bad_net.write_text(json.dumps({
            "params": [], "places": [{"id": "S1"}, {"id": "S2"}],
            "transitions": [],
            "arcs": [{"from": "S1", "to": "S2"}]}))
        companion = tmp_path / "bad.nets.json"
        companion.write_text(json.dumps({"nets": {"bad": "bad.json"},
                                         "instances": []}))
        code = main(["net-check", "--net", str(companion)])
        assert code == 1
        assert "place" in capsys.readouterr().out


def test_missing_level_file_is_exit_3(tmp_path):
    assert main(["play", "--level", str(tmp_path / "nope.map"),
                 "--input-fixture", write_fixture(tmp_path)]) == 3


def test_filter_env_var_override(tmp_path, monkeypatch):
    silent = tmp_path / "silent.json"
    silent.write_text("{}")
    monkeypatch.setenv("REPLAYTEST_FILTER", str(silent))
    trace_out = tmp_path / "out.trace"
    code = main(["record", "--level", asset("levels/level1.map"),
                 "--input-fixture", write_fixture(tmp_path),
                 "--out-raw", str(tmp_path / "out.rawlog"),
                 "--out-trace", str(trace_out), "--grace", "40"])
    assert code == 0
    assert trace_out.read_text() == ""


def test_record_serve_conflicts_with_headless(tmp_path):
    code = main(["record", "--level", asset("levels/level1.map"),
                 "--out-raw", str(tmp_path / "r"), "--out-trace",
                 str(tmp_path / "t"), "--serve", "18999", "--headless"])
    assert code == 3


def test_tick_rate_below_one_is_usage_error(tmp_path):
    assert main(["play", "--level", asset("levels/level1.map"),
                 "--input-fixture", write_fixture(tmp_path),
                 "--tick-rate", "0"]) == 3
