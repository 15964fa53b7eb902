"""Acceptance suite: one test per top-level criterion, each printing its own
PASS line (run with ``pytest tests/test_acceptance.py -v -s``). Runtime
budgets are asserted alongside the behaviour.
"""
import random
import time

from replaytest import load_level
from replaytest.executor import TestSpec, report, run_high_level, run_mixed, \
    run_raw
from replaytest.petri import fire, instantiate, is_enabled, load_net, \
    parse_net
from replaytest.recorder import (FixtureSource, RawInputEvent, SessionLog,
                                 attach_recorders, read_trace, run_session)

from test_petri import (SIMPLE_DOOR, all_markings, oracle_enabled,
                        oracle_fire, random_net)
from walkthroughs import (HOP, LEVEL1, LEVEL4, TABLE_1, asset, default_filter,
                          record, spec_doc)


def _report(name: str, elapsed: float, budget: float) -> None:
    print(f"ACCEPTANCE {name}: PASS ({elapsed:.2f}s, budget {budget:.0f}s)")
    assert elapsed < budget


def test_table_1_reproduction(tmp_path):
    start = time.monotonic()
    _, trace_path, stats = record("level1", LEVEL1, tmp_path)
    assert stats.completed
    records = read_trace(trace_path)
    triples = [(r.source.name, r.mtype, r.target.name if r.target else None)
               for r in records]
    expected = [(src, mtype, target) for src, mtype, target in TABLE_1]
    assert len(triples) == 8
    assert triples == expected
    _report("table-1 reproduction", time.monotonic() - start, 5)


def test_raw_replay_fixpoint(tmp_path):
    start = time.monotonic()
    raw, trace, _ = record("level1", LEVEL1, tmp_path)
    spec = TestSpec.from_doc(spec_doc("level1", "raw", trace, raw))
    for attempt in range(5):
        result = run_raw(spec)
        assert result.verdict == "Pass", (attempt, result.reason)
        assert result.trace_diff.identical
        assert all(d == 0 for d in result.trace_diff.timing_deltas), \
            "timestamps must be tick-exact"
    _report("raw-replay fixpoint x5", time.monotonic() - start, 5)


def test_adaptation_success(tmp_path):
    start = time.monotonic()
    raw, trace, _ = record("level1", LEVEL1, tmp_path)
    raw_result = run_raw(TestSpec.from_doc(
        spec_doc("level1_moved", "raw", trace, raw, max_time=1000)))
    assert raw_result.verdict == "Timeout"
    hl_result = run_high_level(TestSpec.from_doc(
        spec_doc("level1_moved", "high_level", trace, raw)))
    assert hl_result.verdict == "Pass"
    _report("adaptation success (moved switches)", time.monotonic() - start,
            10)


def test_adaptation_failure(tmp_path):
    start = time.monotonic()
    raw, trace, _ = record("level1", LEVEL1, tmp_path)
    result = run_high_level(TestSpec.from_doc(
        spec_doc("level1_blocked", "high_level", trace, raw)))
    assert result.verdict == "Fail"
    assert "AchieverUnreachable" in result.reason
    unmet = dict(result.unmet_preconditions)
    assert unmet.get("S2@Door1") == "Is the button currently being pressed?"
    text, doc = report(result)
    assert "S2@Door1" in text
    _report("adaptation failure (blocked switch)", time.monotonic() - start,
            10)


def test_level_4_analog(tmp_path):
    start = time.monotonic()
    raw, trace, stats = record("level4", LEVEL4, tmp_path)
    assert stats.completed
    mtypes = [r.mtype for r in read_trace(trace)]
    assert mtypes.count("CLONE") == 3
    assert "DEACTIVATE" in mtypes
    result = run_high_level(TestSpec.from_doc(
        spec_doc("level4", "high_level", trace, raw, max_time=5000)))
    assert result.verdict == "Pass"
    _report("level-4 analog (platform, rays, three clones)",
            time.monotonic() - start, 20)


def test_fig_4_semantics(tmp_path):
    start = time.monotonic()
    level_text = ("11 4 0\n"
                  "###########\n"
                  "#P.......G#\n"
                  "###########\n"
                  "###########\n"
                  "trigger doorTrigger1 5 1\n"
                  "actor Enemy 8 1 {moves}\n")

    def spec_for(moves, raw_text, name):
        level = tmp_path / f"{name}.map"
        level.write_text(level_text.replace("{moves}", moves or "-"))
        raw = tmp_path / f"{name}.rawlog"
        raw.write_text(raw_text)
        return TestSpec.from_doc({
            "level_file": str(level), "raw_file": str(raw),
            "mode": "raw", "max_time": 15000,
            "success_conditions": [
                {"type": "ordered",
                 "msg": [{"type": "TOUCHED", "SourceEntity": "Player",
                          "TargetEntity": "doorTrigger1"}]}],
            "failure_conditions": [
                {"type": "ordered",
                 "msg": [{"type": "TOUCHED", "SourceEntity": "Enemy",
                          "TargetEntity": "doorTrigger1"}]}],
        })

    player_first = run_raw(spec_for("WWWWWWWWLLL",
                                    "1 KB RIGHT DOWN\n5 KB RIGHT UP\n",
                                    "player_first"))
    assert player_first.verdict == "Pass"
    rival_first = run_raw(spec_for("LLL",
                                   "6 KB RIGHT DOWN\n10 KB RIGHT UP\n",
                                   "rival_first"))
    assert rival_first.verdict == "Fail"
    neither = run_raw(spec_for("", "", "neither"))
    assert neither.verdict == "Timeout"
    assert neither.elapsed == 15000
    _report("success/failure/timeout condition semantics",
            time.monotonic() - start, 30)


def test_petri_oracle_equivalence():
    start = time.monotonic()
    nets = [instantiate(parse_net(SIMPLE_DOOR), {})]      # the named triple
    door_tpl = load_net(asset("nets/door.json"))
    nets.append(instantiate(door_tpl, {"$button": "Button1",
                                       "$door": "Door1"}))
    rng = random.Random(2024)
    sizes = [(2, 1), (3, 2), (4, 2), (4, 4), (5, 3), (5, 4), (6, 4), (6, 4)]
    for n_places, n_transitions in sizes:
        nets.append(random_net(rng, n_places, n_transitions))

    checked = 0
    for inst in nets:
        place_ids = [p.id for p in inst.places]
        for marking in all_markings(place_ids, max_tokens=2):
            for t in inst.transitions:
                lib = is_enabled(inst, marking, t.id)
                assert lib == oracle_enabled(inst, marking, t.id)
                if lib:
                    assert fire(inst, marking, t.id) == \
                        oracle_fire(inst, marking, t.id)
                checked += 1
    named = nets[0]
    marking = {"S1": ("neutral",), "S2": ("neutral",), "S3": ()}
    assert is_enabled(named, marking, "T1")
    assert fire(named, marking, "T1") == {"S1": (), "S2": (),
                                          "S3": ("neutral",)}
    elapsed = time.monotonic() - start
    print(f"  checked {checked} (marking, transition) pairs "
          f"over {len(nets)} nets")
    _report("petri oracle equivalence", elapsed, 30)


def test_mixed_mode_fallback(tmp_path):
    start = time.monotonic()
    raw1, trace1, _ = record("level1", LEVEL1, tmp_path, name="l1")
    mid = run_mixed(TestSpec.from_doc(
        spec_doc("level1_midmoved", "mixed", trace1, raw1)))
    assert mid.verdict == "Pass"
    assert len(mid.mode_switches) == 1

    raw_h, trace_h, _ = record("level_hop", HOP, tmp_path, name="hop")
    mixed = run_mixed(TestSpec.from_doc(
        spec_doc("level_hop_moved", "mixed", trace_h, raw_h)))
    assert mixed.verdict == "Pass"
    high = run_high_level(TestSpec.from_doc(
        spec_doc("level_hop_moved", "high_level", trace_h, raw_h)))
    assert high.verdict == "Fail"
    _report("mixed-mode fallback incl. raw-snippet injection",
            time.monotonic() - start, 20)


def test_recorder_neutrality():
    start = time.monotonic()
    # 1000 ticks of bouncing between two floor cells, never completing
    events = []
    for t in range(0, 996, 4):
        events.append(RawInputEvent(t + 1, "RIGHT", "DOWN"))
        events.append(RawInputEvent(t + 2, "RIGHT", "UP"))
        events.append(RawInputEvent(t + 3, "LEFT", "DOWN"))
        events.append(RawInputEvent(t + 4, "LEFT", "UP"))

    def hashes(with_recorders: bool) -> list[str]:
        world = load_level(asset("levels/level1.map"))
        session = SessionLog(default_filter())
        if with_recorders:
            attach_recorders(world, session)
        out = []
        run_session(world, FixtureSource(events, grace=0), session,
                    max_ticks=1000,
                    on_tick=lambda s, m: out.append(world.state_hash()))
        assert len(out) >= 997
        return out

    assert hashes(True) == hashes(False)
    _report("recorder neutrality over 1000 ticks", time.monotonic() - start,
            10)
