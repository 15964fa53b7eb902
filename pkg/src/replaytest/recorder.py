"""Session recording: raw input logs, high-level message traces, CRecorder.

Two artifacts come out of a recorded session:

* the raw input log, one line per device edge: ``<tick> KB <CODE> <DOWN|UP>``
* the high-level trace, one JSON object per line with keys ``timestamp``,
  ``type``, ``SourceEntity`` and (when present) ``TargetEntity``.

Timestamps in both files are *session ticks*: a counter of simulation steps
that keeps increasing across level restarts triggered by the clone mechanic
(the in-world tick resets to 0 on each restart). Session ticks are what makes
logs monotonic and replays comparable tick-for-tick.
"""
from __future__ import annotations

import fnmatch
import json
from dataclasses import dataclass
from typing import Any, Iterable, TextIO

from .entities import Component, EntityRef, Message, component_kind

INPUT_CODES = ("UP", "DOWN", "LEFT", "RIGHT", "CLONE", "WAIT")
EDGES = ("DOWN", "UP")


class RawLogError(ValueError):
    """Malformed raw input log (bad syntax or ordering invariant)."""


class TraceParseError(ValueError):
    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


@dataclass(frozen=True)
class RawInputEvent:
    """One device edge (key down/up) at a tick."""

    tick: int
    code: str
    edge: str
    device: str = "KB"

    def line(self) -> str:
        return f"{self.tick} {self.device} {self.code} {self.edge}"


def parse_raw_line(line: str, line_no: int = 0) -> RawInputEvent:
    parts = line.split()
    if len(parts) != 4:
        raise RawLogError(f"line {line_no}: expected 4 fields, got {len(parts)}")
    tick_s, device, code, edge = parts
    try:
        tick = int(tick_s)
    except ValueError:
        raise RawLogError(f"line {line_no}: bad tick {tick_s!r}") from None
    if tick < 0:
        raise RawLogError(f"line {line_no}: negative tick")
    if code not in INPUT_CODES:
        raise RawLogError(f"line {line_no}: unknown code {code!r}")
    if edge not in EDGES:
        raise RawLogError(f"line {line_no}: unknown edge {edge!r}")
    return RawInputEvent(tick, code, edge, device)


def parse_raw_log(text: str) -> list[RawInputEvent]:
    """Parse and validate a raw log: ticks non-decreasing, at most one edge
    per code per tick."""
    events: list[RawInputEvent] = []
    seen: set[tuple[int, str]] = set()
    last_tick = -1
    for i, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        ev = parse_raw_line(line, i)
        if ev.tick < last_tick:
            raise RawLogError(f"line {i}: tick {ev.tick} decreases")
        if (ev.tick, ev.code) in seen:
            raise RawLogError(
                f"line {i}: second edge for {ev.code} at tick {ev.tick}")
        seen.add((ev.tick, ev.code))
        last_tick = ev.tick
        events.append(ev)
    return events


def read_raw_log(path: str) -> list[RawInputEvent]:
    with open(path, encoding="utf-8") as fh:
        return parse_raw_log(fh.read())


def write_raw_log(events: Iterable[RawInputEvent], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(ev.line() + "\n")


# ---------------------------------------------------------------------------
# High-level trace records


@dataclass(frozen=True)
class TraceRecord:
    """One filtered high-level message as it appears in a trace file."""

    timestamp: int
    mtype: str
    source: EntityRef
    target: EntityRef | None = None

    def key(self) -> tuple[str, str, str | None]:
        return (self.mtype, self.source.name,
                self.target.name if self.target else None)


def record_from_message(msg: Message, timestamp: int | None = None) -> TraceRecord:
    return TraceRecord(msg.tick if timestamp is None else timestamp,
                       msg.mtype, msg.source, msg.target)


def write_trace_record(rec: TraceRecord | Message,
                       timestamp: int | None = None) -> str:
    """Serialize one record to a single JSON line, canonical key order."""
    if isinstance(rec, Message):
        rec = record_from_message(rec, timestamp)
    doc: dict[str, Any] = {
        "timestamp": rec.timestamp,
        "type": rec.mtype,
        "SourceEntity": {"name": rec.source.name, "type": rec.source.etype},
    }
    if rec.target is not None:
        doc["TargetEntity"] = {"name": rec.target.name, "type": rec.target.etype}
    return json.dumps(doc, separators=(", ", " : "))


def parse_trace_line(line: str, line_no: int | None = None) -> TraceRecord:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceParseError(f"invalid JSON: {exc.msg}", line_no) from None
    try:
        source = EntityRef(doc["SourceEntity"]["name"], doc["SourceEntity"]["type"])
        target = None
        if "TargetEntity" in doc:
            target = EntityRef(doc["TargetEntity"]["name"],
                               doc["TargetEntity"]["type"])
        return TraceRecord(int(doc["timestamp"]), doc["type"], source, target)
    except (KeyError, TypeError) as exc:
        raise TraceParseError(f"missing field: {exc}", line_no) from None


def parse_trace(text: str) -> list[TraceRecord]:
    records = []
    for i, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            records.append(parse_trace_line(line, i))
    return records


def read_trace(path: str) -> list[TraceRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh.read())


def write_trace(records: Iterable[TraceRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(write_trace_record(rec) + "\n")


# ---------------------------------------------------------------------------
# Recording filter and the CRecorder component


class RecorderFilter:
    """Maps entity-name globs to the message types worth keeping.

    A message passes when its *source* name matches some glob whose set
    contains the message type (or the set is ALL). Everything else is noise
    and stays out of the trace.
    """

    ALL = "ALL"

    def __init__(self, subscriptions: dict[str, set[str] | str]):
        self.subscriptions: dict[str, set[str] | str] = {}
        for glob, mtypes in subscriptions.items():
            if mtypes == self.ALL or mtypes == "*":
                self.subscriptions[glob] = self.ALL
            else:
                self.subscriptions[glob] = set(mtypes)

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "RecorderFilter":
        return cls({glob: v for glob, v in doc.items()})

    @classmethod
    def load(cls, path: str) -> "RecorderFilter":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    @classmethod
    def everything(cls) -> "RecorderFilter":
        return cls({"*": cls.ALL})

    @classmethod
    def nothing(cls) -> "RecorderFilter":
        return cls({})

    def matches(self, source_name: str, mtype: str) -> bool:
        for glob, mtypes in self.subscriptions.items():
            if fnmatch.fnmatchcase(source_name, glob):
                if mtypes == self.ALL or mtype in mtypes:
                    return True
        return False

    def entity_globs(self) -> list[str]:
        return list(self.subscriptions)


class SessionLog:
    """Shared sink for one recording session.

    Owns the session-tick counter and both output streams. CRecorder
    components forward every message they sight; the sink de-duplicates by
    emission sequence number (a broadcast is sighted once per recorder) and
    applies the filter.
    """

    def __init__(self, filt: RecorderFilter,
                 raw_out: TextIO | None = None,
                 trace_out: TextIO | None = None):
        self.filter = filt
        self.session_tick = 0
        self.raw_events: list[RawInputEvent] = []
        self.trace_records: list[TraceRecord] = []
        self._raw_out = raw_out
        self._trace_out = trace_out
        self._seen_seqs: set[int] = set()

    def log_input(self, ev: RawInputEvent) -> None:
        self.raw_events.append(ev)
        if self._raw_out:
            self._raw_out.write(ev.line() + "\n")

    def sight(self, msg: Message) -> None:
        if msg.seq in self._seen_seqs:
            return
        self._seen_seqs.add(msg.seq)
        if not self.filter.matches(msg.source.name, msg.mtype):
            return
        rec = record_from_message(msg, timestamp=self.session_tick)
        self.trace_records.append(rec)
        if self._trace_out:
            self._trace_out.write(write_trace_record(rec) + "\n")

    def flush(self) -> None:
        for out in (self._raw_out, self._trace_out):
            if out:
                out.flush()


@component_kind
class CRecorder(Component):
    """Pure observer component: forwards sighted messages to a SessionLog.

    Sees messages delivered to its owner plus messages its owner sends.
    Never consumes, never touches entity attributes, so attaching or
    detaching it cannot change game state.
    """

    kind = "CRecorder"

    def __init__(self) -> None:
        super().__init__()
        self.session: SessionLog | None = None

    def accept(self, msg: Message) -> bool:
        if self.session is not None:
            self.session.sight(msg)
        return False

    def on_owner_sent(self, msg: Message) -> None:
        if self.session is not None:
            self.session.sight(msg)


def attach_recorders(world: Any, session: SessionLog) -> list[str]:
    """Attach a CRecorder wired to ``session`` on every entity whose name
    matches a filter glob. Returns the entity names instrumented."""
    attached = []
    for ent in world.entities.entities():
        for glob in session.filter.entity_globs():
            if fnmatch.fnmatchcase(ent.name, glob):
                comp = world.entities.attach(ent.name, CRecorder.kind)
                comp.session = session
                attached.append(ent.name)
                break
    return attached


def detach_recorders(world: Any) -> None:
    for ent in world.entities.entities():
        while ent.component_of(CRecorder.kind) is not None:
            world.entities.detach(ent.name, CRecorder.kind)


# ---------------------------------------------------------------------------
# Input sources and the session loop


class FixtureSource:
    """Replays a raw log as if a human were typing it live.

    ``poll`` yields the edges scheduled for each session tick; the source is
    exhausted ``grace`` ticks after its last event (riding out trailing
    simulation, e.g. a platform carrying the avatar with no keys held).
    """

    def __init__(self, events: Iterable[RawInputEvent], grace: int = 0):
        self._by_tick: dict[int, list[RawInputEvent]] = {}
        end = -1
        for ev in events:
            self._by_tick.setdefault(ev.tick, []).append(ev)
            end = max(end, ev.tick)
        self.end_tick = end
        self.grace = grace

    def poll(self, session_tick: int) -> list[RawInputEvent] | None:
        if session_tick > self.end_tick + self.grace:
            return None
        return self._by_tick.get(session_tick, [])


@dataclass
class SessionStats:
    ticks: int
    completed: bool
    died: bool
    raw_events: int
    trace_records: int


def run_session(world: Any, source: Any, session: SessionLog,
                max_ticks: int = 200_000,
                stop_on_complete: bool = True,
                on_tick: Any = None) -> SessionStats:
    """Drive a recording/replay session to its end.

    Each loop turn: poll the source for this session tick, log the edges,
    re-stamp them with the in-world tick (which resets on clone restarts)
    and step the simulation. Ends when the source closes, the avatar dies,
    or - with ``stop_on_complete`` - the exit portal is touched.
    """
    completed = False
    died = False
    while session.session_tick < max_ticks:
        edges = source.poll(session.session_tick)
        if edges is None:
            break
        for ev in edges:
            session.log_input(
                RawInputEvent(session.session_tick, ev.code, ev.edge, ev.device))
        stamped = [RawInputEvent(world.tick, ev.code, ev.edge, ev.device)
                   for ev in edges]
        messages = world.step(stamped)
        if on_tick is not None:
            on_tick(session.session_tick, messages)
        session.session_tick += 1
        for msg in messages:
            if msg.mtype == "KILLED" and msg.target and \
                    msg.target.name == world.avatar.name:
                died = True
            if msg.mtype == "TOUCH" and msg.source.name == world.avatar.name:
                completed = True
        if died or (completed and stop_on_complete):
            break
    session.flush()
    return SessionStats(session.session_tick, completed, died,
                        len(session.raw_events), len(session.trace_records))


def record_session(world: Any, source: Any, filt: RecorderFilter,
                   raw_path: str, trace_path: str,
                   max_ticks: int = 200_000,
                   stop_on_complete: bool = True) -> SessionStats:
    """Record a live session: instrument the world per the filter, run it,
    and leave both log files on disk (flushed before return)."""
    with open(raw_path, "w", encoding="utf-8") as raw_out, \
            open(trace_path, "w", encoding="utf-8") as trace_out:
        session = SessionLog(filt, raw_out, trace_out)
        attach_recorders(world, session)
        try:
            return run_session(world, source, session, max_ticks,
                               stop_on_complete)
        finally:
            session.flush()
            detach_recorders(world)
