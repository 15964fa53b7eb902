"""Test runner: raw replay, net-adapted high-level replay, mixed fallback.

A test is a declarative spec (level, recorded trace/raw log, net bindings,
time limit, ordered success/failure message conditions). The three modes:

* ``raw``: re-inject the recorded input edges at their exact session ticks
  and compare the regenerated trace against the recorded one.
* ``high_level``: walk the recorded trace record by record. A record bound to
  a net transition is re-achieved by satisfying the transition's input places
  (running each unmet place's achiever tick by tick) until the simulation
  emits the bound message again; unbound records fall back to default
  achievers (CLONE injects the clone key, TOUCH navigates to the target).
* ``mixed``: start raw; when the next expected record fails to appear within
  a tolerance window of its recorded tick, stop injecting and continue
  high-level from the first unconsumed record. Only in this mode may places
  flagged with an ``inject_raw`` achiever replay a canned input snippet.

Failure conditions are evaluated on every emitted message and abort the run
immediately; exceeding the time limit yields a Timeout verdict.
"""
from __future__ import annotations

import fnmatch
import json
import math
import os
import time
from dataclasses import dataclass, field
from typing import Any, Iterable

from . import petri
from .game import GameWorld, load_level
from .recorder import (RawInputEvent, RecorderFilter, SessionLog, TraceRecord,
                       attach_recorders, read_raw_log, read_trace)
from .tracediff import TraceDiff, diff_traces

DEFAULT_MAX_TIME = 15_000
DEFAULT_DURATION = 200
DEFAULT_CHECKPOINT_TOLERANCE = 50

PASS, FAIL, TIMEOUT = "Pass", "Fail", "Timeout"


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class MsgPattern:
    """One condition step: type plus source/target name globs. A None target
    matches records without a target."""

    mtype: str
    source: str
    target: str | None

    def matches(self, key: tuple[str, str, str | None]) -> bool:
        mtype, source, target = key
        if mtype != self.mtype or not fnmatch.fnmatchcase(source, self.source):
            return False
        if self.target is None:
            return target is None
        return target is not None and fnmatch.fnmatchcase(target, self.target)


@dataclass
class Condition:
    ctype: str
    patterns: list[MsgPattern]

    def __post_init__(self) -> None:
        if self.ctype != "ordered":
            raise SpecError(f"unsupported condition type {self.ctype!r}")
        if not self.patterns:
            raise SpecError("condition needs at least one message pattern")


def _parse_entity_field(value: Any) -> str | None:
    if value is None:
        return None
    if isinstance(value, str):
        return value
    return value.get("name")


def parse_condition(doc: dict[str, Any]) -> Condition:
    patterns = []
    for msg in doc.get("msg", []):
        patterns.append(MsgPattern(msg["type"],
                                   _parse_entity_field(msg.get("SourceEntity", "*")),
                                   _parse_entity_field(msg.get("TargetEntity"))))
    return Condition(doc.get("type", "ordered"), patterns)


class ConditionSet:
    """Subsequence cursors over the live message stream. Failure conditions
    are checked before success ones, so failure wins a tie on one message."""

    def __init__(self, successes: list[Condition], failures: list[Condition]):
        self._succ = [[c, 0] for c in successes]
        self._fail = [[c, 0] for c in failures]
        self.outcome: str | None = None

    @staticmethod
    def _advance(cursors: list[list], key: tuple) -> bool:
        for entry in cursors:
            cond, pos = entry
            if pos < len(cond.patterns) and cond.patterns[pos].matches(key):
                entry[1] += 1
                if entry[1] == len(cond.patterns):
                    return True
        return False

    def feed(self, key: tuple[str, str, str | None]) -> str:
        """Returns "Failure", "Success" or "Pending" for this message."""
        if self.outcome:
            return self.outcome
        if self._advance(self._fail, key):
            self.outcome = "Failure"
        elif self._advance(self._succ, key):
            self.outcome = "Success"
        return self.outcome or "Pending"

    @property
    def has_success_conditions(self) -> bool:
        return bool(self._succ)


def evaluate_conditions(state: ConditionSet, msg: Any) -> str:
    """Feed one message (or key triple) through the condition cursors."""
    key = msg if isinstance(msg, tuple) else msg.key()
    return state.feed(key)


# ---------------------------------------------------------------------------
# Test specification


@dataclass
class TestSpec:
    __test__ = False      # not a pytest class, despite the name

    level_file: str
    traces_file: str | None = None
    raw_file: str | None = None
    nets: list[str] = field(default_factory=list)
    mode: str = "raw"
    max_time: int = DEFAULT_MAX_TIME
    diff_policy: str = "strict"
    checkpoint_tolerance: int = DEFAULT_CHECKPOINT_TOLERANCE
    filter_file: str | None = None
    seed: int = 0
    success_conditions: list[Condition] = field(default_factory=list)
    failure_conditions: list[Condition] = field(default_factory=list)
    base_dir: str = "."

    def __post_init__(self) -> None:
        if self.max_time <= 0:
            raise SpecError("max_time must be positive")
        if self.mode not in ("raw", "high_level", "mixed"):
            raise SpecError(f"unknown mode {self.mode!r}")
        if self.mode in ("raw", "mixed") and not self.raw_file:
            raise SpecError(f"{self.mode} mode requires raw_file")
        if self.mode in ("high_level", "mixed") and not self.traces_file:
            raise SpecError(f"{self.mode} mode requires traces_file")
        if self.diff_policy not in ("strict", "lenient"):
            raise SpecError(f"unknown diff_policy {self.diff_policy!r}")

    def path(self, rel: str) -> str:
        return rel if os.path.isabs(rel) else os.path.join(self.base_dir, rel)

    @classmethod
    def from_json(cls, path: str) -> "TestSpec":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls.from_doc(doc, base_dir=os.path.dirname(os.path.abspath(path)))

    @classmethod
    def from_doc(cls, doc: dict[str, Any], base_dir: str = ".") -> "TestSpec":
        try:
            return cls(
                level_file=doc["level_file"],
                traces_file=doc.get("traces_file"),
                raw_file=doc.get("raw_file"),
                nets=list(doc.get("nets", [])),
                mode=doc.get("mode", "raw"),
                max_time=int(doc.get("max_time", DEFAULT_MAX_TIME)),
                diff_policy=doc.get("diff_policy", "strict"),
                checkpoint_tolerance=int(doc.get("checkpoint_tolerance",
                                                 DEFAULT_CHECKPOINT_TOLERANCE)),
                filter_file=doc.get("filter_file"),
                seed=int(doc.get("seed", 0)),
                success_conditions=[parse_condition(c)
                                    for c in doc.get("success_conditions", [])],
                failure_conditions=[parse_condition(c)
                                    for c in doc.get("failure_conditions", [])],
                base_dir=base_dir,
            )
        except KeyError as exc:
            raise SpecError(f"spec missing field {exc}") from None


@dataclass
class TestResult:
    __test__ = False

    verdict: str
    reason: str = ""
    unmet_preconditions: list[tuple[str, str]] = field(default_factory=list)
    trace_diff: TraceDiff | None = None
    elapsed: int = 0
    mode_switches: list[tuple[int, str, str]] = field(default_factory=list)
    observed: list[TraceRecord] = field(default_factory=list)
    ghost_deaths: list[tuple[int, str]] = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def exit_code(self) -> int:
        return {PASS: 0, FAIL: 1, TIMEOUT: 2}[self.verdict]


def _load_filter(spec: TestSpec) -> RecorderFilter:
    if spec.filter_file:
        return RecorderFilter.load(spec.path(spec.filter_file))
    env = os.environ.get("REPLAYTEST_FILTER")
    if env:
        return RecorderFilter.load(env)
    from importlib import resources
    doc = json.loads(resources.files("replaytest.assets")
                     .joinpath("filters/default.json").read_text("utf-8"))
    return RecorderFilter.from_json(doc)


class _AvatarDriver:
    """Reconciles the avatar's held keys toward a desired movement code,
    emitting the minimal set of edges for this tick."""

    def __init__(self, world: GameWorld):
        self.world = world

    def edges_toward(self, code: str | None) -> list[RawInputEvent]:
        held = set(self.world.avatar.held)
        edges = []
        for stale in sorted(held - ({code} if code else set())):
            edges.append(RawInputEvent(self.world.tick, stale, "UP"))
        if code and code != "WAIT" and code not in held:
            edges.append(RawInputEvent(self.world.tick, code, "DOWN"))
        return edges

    def clone_edge(self) -> list[RawInputEvent]:
        edges = self.edges_toward(None)
        edges.append(RawInputEvent(self.world.tick, "CLONE", "DOWN"))
        return edges


class TestRun:
    """Shared machinery for one test execution (one world, one thread)."""

    __test__ = False

    def __init__(self, spec: TestSpec, on_tick=None):
        self.on_tick = on_tick
        self.spec = spec
        self.world = load_level(spec.path(spec.level_file), rng_seed=spec.seed)
        self.session = SessionLog(_load_filter(spec))
        attach_recorders(self.world, self.session)
        self.driver = _AvatarDriver(self.world)
        self.conditions = ConditionSet(spec.success_conditions,
                                       spec.failure_conditions)
        self.expected: list[TraceRecord] = []
        self.has_expected = spec.traces_file is not None
        if spec.traces_file:
            self.expected = read_trace(spec.path(spec.traces_file))
        self.instances: list[petri.NetInstance] = []
        for companion in spec.nets:
            self.instances.extend(
                petri.load_instances(spec.path(companion), self.world))
        self.next_expected = 0
        self.mode_switches: list[tuple[int, str, str]] = []
        self.avatar_died = False
        self.ghost_deaths: list[tuple[int, str]] = []

    @property
    def session_tick(self) -> int:
        return self.session.session_tick

    def step(self, edges: Iterable[RawInputEvent] = ()) -> list[Any]:
        """One simulation tick: inject edges, scan emissions against the
        expected-trace cursor and the success/failure conditions."""
        stamped = [RawInputEvent(self.world.tick, e.code, e.edge, e.device)
                   for e in edges]
        messages = self.world.step(stamped)
        self.session.session_tick += 1
        for msg in messages:
            key = msg.key()
            if self.next_expected < len(self.expected) and \
                    key == self.expected[self.next_expected].key():
                self.next_expected += 1
            self.conditions.feed(key)
            if msg.mtype == "KILLED" and msg.target:
                if msg.target.name == self.world.avatar.name:
                    self.avatar_died = True
                elif msg.target.name.startswith("Ghost"):
                    # a map edit can kill a replaying ghost; the run goes on
                    # but the report flags it
                    self.ghost_deaths.append((self.session_tick,
                                              msg.target.name))
        if self.on_tick is not None:
            self.on_tick(self.world, self.session.session_tick, messages)
        return messages

    def result(self, verdict: str, reason: str = "",
               unmet: list[tuple[str, str]] | None = None,
               tolerance: float = 0) -> TestResult:
        diff = None
        if self.has_expected:
            diff = diff_traces(self.expected, self.session.trace_records,
                               tolerance=tolerance)
        return TestResult(verdict, reason, unmet or [], diff,
                          self.session_tick, self.mode_switches,
                          list(self.session.trace_records),
                          ghost_deaths=list(self.ghost_deaths))

    # -- raw mode -----------------------------------------------------------

    def run_raw_loop(self) -> TestResult:
        events = read_raw_log(self.spec.path(self.spec.raw_file))
        by_tick: dict[int, list[RawInputEvent]] = {}
        for ev in events:
            by_tick.setdefault(ev.tick, []).append(ev)
        last_event = max((ev.tick for ev in events), default=-1)
        last_expected = max((r.timestamp for r in self.expected), default=-1)
        session_length = max(last_event, last_expected) + 1

        while True:
            if self.conditions.outcome:
                break
            if self.session_tick >= self.spec.max_time:
                return self.result(TIMEOUT, "max_time exceeded")
            if self.session_tick >= session_length and \
                    not self.conditions.has_success_conditions:
                break
            if self.avatar_died:
                break
            self.step(by_tick.get(self.session_tick, ()))
        return self._finish_replay(tolerance=0)

    def _finish_replay(self, tolerance: float) -> TestResult:
        if self.conditions.outcome == "Failure":
            return self.result(FAIL, "failure condition met",
                               tolerance=tolerance)
        diffed = self.result(PASS, tolerance=tolerance)
        diverged = diffed.trace_diff is not None and \
            not diffed.trace_diff.identical
        if self.conditions.outcome == "Success":
            if self.spec.diff_policy == "strict" and diverged:
                diffed.verdict = FAIL
                diffed.reason = "trace diverged (strict diff policy): " + \
                    diffed.trace_diff.summary()
            return diffed
        if self.avatar_died:
            return self.result(FAIL, "avatar died", tolerance=tolerance)
        if self.conditions.has_success_conditions:
            return self.result(TIMEOUT, "no success condition met",
                               tolerance=tolerance)
        if self.spec.diff_policy == "strict" and diverged:
            diffed.verdict = FAIL
            diffed.reason = "trace diverged (strict diff policy): " + \
                diffed.trace_diff.summary()
        return diffed

    # -- high-level mode ------------------------------------------------------

    def _unmet_places(self, inst: petri.NetInstance, tid: str,
                      marking: petri.Marking) -> list[petri.Place]:
        unmet = []
        for pid, guard in inst.input_places(tid):
            tokens = marking.get(pid, ())
            if not any(guard is None or c in guard for c in tokens):
                unmet.append(inst.place(pid))
        return unmet

    def _describe(self, inst: petri.NetInstance, places: list[petri.Place]
                  ) -> list[tuple[str, str]]:
        return [(inst.qualify(p.id), p.label) for p in places]

    def run_high_level_loop(self, allow_inject: bool = False) -> TestResult:
        patience_left: int | None = None
        budget_left: int | None = None
        active_record = -1
        snippet: list[RawInputEvent] | None = None
        snippet_start = 0

        while True:
            if self.conditions.outcome == "Failure":
                return self.result(FAIL, "failure condition met",
                                   tolerance=math.inf)
            if self.conditions.outcome == "Success":
                return self.result(PASS, tolerance=math.inf)
            if self.next_expected >= len(self.expected):
                if not self.conditions.has_success_conditions:
                    return self.result(PASS, tolerance=math.inf)
                # trace consumed; run on until a condition or the time limit
                if self.session_tick >= self.spec.max_time:
                    return self.result(TIMEOUT, "no success condition met",
                                       tolerance=math.inf)
                self.step(self.driver.edges_toward(None))
                continue
            if self.session_tick >= self.spec.max_time:
                unmet = self._current_unmet()
                return self.result(TIMEOUT, "max_time exceeded", unmet,
                                   tolerance=math.inf)
            if self.avatar_died:
                return self.result(FAIL, "avatar died", tolerance=math.inf)

            if snippet is not None:
                # a raw snippet in flight runs to exhaustion, even if the
                # pending record gets consumed partway through
                offset = self.session_tick - snippet_start
                if snippet and offset <= max(ev.tick for ev in snippet):
                    self.step([ev for ev in snippet if ev.tick == offset])
                    continue
                snippet = None

            if self.next_expected != active_record:
                active_record = self.next_expected
                patience_left = None
                budget_left = None

            record = self.expected[self.next_expected]
            plan = self._plan_tick(record, allow_inject)
            if isinstance(plan, TestResult):
                return plan
            if plan and plan[0] == "snippet":
                self.step(self.driver.edges_toward(None))
                snippet = plan[1]
                snippet_start = self.session_tick
                continue
            edges, patience_hit, budget_hit = plan
            if patience_hit is not None:
                patience_left = patience_hit if patience_left is None \
                    else patience_left - 1
                if patience_left <= 0:
                    unmet = self._current_unmet()
                    label = unmet[0][0] if unmet else record.mtype
                    return self.result(
                        FAIL, f"AchieverUnreachable({label})", unmet,
                        tolerance=math.inf)
            else:
                patience_left = None
            if budget_hit is not None:
                budget_left = budget_hit if budget_left is None \
                    else budget_left - 1
                if budget_left <= 0:
                    unmet = self._current_unmet()
                    return self.result(
                        FAIL, f"BudgetExceeded({record.mtype})", unmet,
                        tolerance=math.inf)
            else:
                budget_left = None
            self.step(edges)

    def _current_unmet(self) -> list[tuple[str, str]]:
        if self.next_expected >= len(self.expected):
            return []
        record = self.expected[self.next_expected]
        match = petri.transition_for_message(self.instances, record.key())
        if match is None:
            return []
        inst, tid = match
        marking = petri.sync_marking(inst, self.world)
        return self._describe(inst, self._unmet_places(inst, tid, marking))

    def _plan_tick(self, record: TraceRecord, allow_inject: bool):
        """Decide this tick's input for the pending record.

        Returns (edges, patience, budget) where patience/budget are the
        countdown starting values when the relevant wait is in progress, or a
        TestResult for an immediate verdict, or ("snippet", events).
        """
        match = petri.transition_for_message(self.instances, record.key())
        if match is None:
            return self._plan_default(record)
        inst, tid = match
        transition = inst.transition(tid)
        duration = transition.duration if transition.duration is not None \
            else DEFAULT_DURATION
        marking = petri.sync_marking(inst, self.world)
        if petri.is_enabled(inst, marking, tid):
            # preconditions hold: wait out the transition's duration for the
            # bound message to be emitted by the simulation
            return (self.driver.edges_toward(None), None, duration)
        unmet = self._unmet_places(inst, tid, marking)
        place = next((p for p in unmet if p.achiever), None)
        if place is None:
            # nothing actionable: wait for the game (ghost replays etc.)
            return (self.driver.edges_toward(None), None, duration)
        kind = place.achiever.get("kind")
        if kind == "press_clone":
            return (self.driver.clone_edge(), None, None)
        if kind == "inject_raw":
            if not allow_inject:
                return (self.driver.edges_toward(None), duration, None)
            approach = place.achiever.get("approach")
            if approach:
                # position the avatar at the staging point before replaying
                # the canned fragment ("in front of the elevator")
                nav = self.world.navigate(approach)
                if not nav.reachable:
                    return (self.driver.edges_toward(None), duration, None)
                if nav.next_code is not None:
                    return (self.driver.edges_toward(nav.next_code),
                            None, None)
            snippet_path = self.spec.path(place.achiever["snippet"])
            return ("snippet", read_raw_log(snippet_path))
        if kind in ("navigate", "navigate_and_hold"):
            nav = self.world.navigate(place.achiever["target"])
            if not nav.reachable:
                return (self.driver.edges_toward(None), duration, None)
            return (self.driver.edges_toward(nav.next_code), None, None)
        raise SpecError(f"unknown achiever kind {kind!r}")

    def _plan_default(self, record: TraceRecord):
        """Default achievers for records without a net binding."""
        if record.mtype == "CLONE":
            return (self.driver.clone_edge(), None, None)
        if record.mtype in ("TOUCH", "TOUCHED") and record.target:
            nav = self.world.navigate(record.target.name)
            if not nav.reachable:
                return (self.driver.edges_toward(None), DEFAULT_DURATION, None)
            return (self.driver.edges_toward(nav.next_code), None, None)
        # unbound record type: wait for it within the default budget
        return (self.driver.edges_toward(None), None, DEFAULT_DURATION)

    # -- mixed mode -----------------------------------------------------------

    def run_mixed_loop(self) -> TestResult:
        events = read_raw_log(self.spec.path(self.spec.raw_file))
        by_tick: dict[int, list[RawInputEvent]] = {}
        for ev in events:
            by_tick.setdefault(ev.tick, []).append(ev)
        last_event = max((ev.tick for ev in events), default=-1)
        last_expected = max((r.timestamp for r in self.expected), default=-1)
        session_length = max(last_event, last_expected) + 1
        tolerance = self.spec.checkpoint_tolerance

        while True:
            if self.conditions.outcome:
                break
            if self.session_tick >= self.spec.max_time:
                return self.result(TIMEOUT, "max_time exceeded",
                                   tolerance=math.inf)
            if self.avatar_died:
                return self.result(FAIL, "avatar died during raw replay",
                                   tolerance=math.inf)
            if self.next_expected < len(self.expected):
                checkpoint = self.expected[self.next_expected]
                if self.session_tick > checkpoint.timestamp + tolerance:
                    self.mode_switches.append(
                        (self.session_tick, "raw", "high_level"))
                    return self.run_high_level_loop(allow_inject=True)
            elif self.session_tick >= session_length and \
                    not self.conditions.has_success_conditions:
                break
            elif self.session_tick >= session_length:
                # trace consumed, keep ticking for the success condition
                pass
            self.step(by_tick.get(self.session_tick, ()))
        return self._finish_replay(tolerance=math.inf)


def run_raw(spec: TestSpec, on_tick=None) -> TestResult:
    start = time.monotonic()
    run = TestRun(spec, on_tick)
    result = run.run_raw_loop()
    result.wall_clock = time.monotonic() - start
    return result


def run_high_level(spec: TestSpec, on_tick=None) -> TestResult:
    start = time.monotonic()
    run = TestRun(spec, on_tick)
    result = run.run_high_level_loop(allow_inject=False)
    result.wall_clock = time.monotonic() - start
    return result


def run_mixed(spec: TestSpec, on_tick=None) -> TestResult:
    start = time.monotonic()
    run = TestRun(spec, on_tick)
    result = run.run_mixed_loop()
    result.wall_clock = time.monotonic() - start
    return result


def run_spec(spec: TestSpec, on_tick=None) -> TestResult:
    return {"raw": run_raw, "high_level": run_high_level,
            "mixed": run_mixed}[spec.mode](spec, on_tick)


def report(result: TestResult) -> tuple[str, dict[str, Any]]:
    """Render a result as (text summary, machine-readable document)."""
    doc: dict[str, Any] = {
        "verdict": result.verdict,
        "reason": result.reason,
        "exit_code": result.exit_code,
        "elapsed_ticks": result.elapsed,
        "unmet_preconditions": [
            {"place": pid, "label": label}
            for pid, label in result.unmet_preconditions],
        "mode_switches": [
            {"tick": t, "from": a, "to": b}
            for t, a, b in result.mode_switches],
        "ghost_deaths": [{"tick": t, "ghost": name}
                         for t, name in result.ghost_deaths],
        "wall_clock_seconds": round(result.wall_clock, 6),
    }
    if result.trace_diff is not None:
        d = result.trace_diff
        doc["diff"] = {
            "verdict": d.verdict,
            "first_divergence": d.first_divergence,
            "missing": [json.loads(_record_json(r)) for r in d.missing],
            "extra": [json.loads(_record_json(r)) for r in d.extra],
            "max_timing_delta": max((abs(x) for x in d.timing_deltas),
                                    default=0),
        }
    lines = [f"verdict: {result.verdict}"]
    if result.reason:
        lines.append(f"reason: {result.reason}")
    lines.append(f"elapsed: {result.elapsed} ticks")
    if result.trace_diff is not None:
        lines.append(f"diff: {result.trace_diff.summary()}")
    for pid, label in result.unmet_preconditions:
        lines.append(f"unmet precondition: {pid} ({label})")
    for t, a, b in result.mode_switches:
        lines.append(f"mode switch at tick {t}: {a} -> {b}")
    for t, name in result.ghost_deaths:
        lines.append(f"ghost death at tick {t}: {name}")
    return "\n".join(lines), doc


def _record_json(rec: TraceRecord) -> str:
    from .recorder import write_trace_record
    return write_trace_record(rec)
