"""replaytest: automated gameplay beta testing.

Record human play sessions as raw input plus a high-level message trace,
then replay them verbatim (regression/compatibility tests) or adaptively
through a Petri-net model of the game mechanics (tests that survive level
edits). Ships with a deterministic grid puzzle game as the test bed.
"""

__version__ = "0.1.0"

from .entities import (Blueprint, BlueprintRegistry, Component, EntityRef,
                       EntityWorld, Message, register_blueprints)
from .game import (GameStateQuery, GameWorld, LevelMap, default_registry,
                   load_level, parse_level)
from .recorder import (CRecorder, FixtureSource, RawInputEvent,
                       RecorderFilter, SessionLog, TraceRecord,
                       read_raw_log, read_trace, record_session, run_session,
                       write_trace_record)
from .tracediff import TraceDiff, diff_traces

__all__ = [
    "Blueprint", "BlueprintRegistry", "Component", "EntityRef", "EntityWorld",
    "Message", "register_blueprints", "GameStateQuery", "GameWorld",
    "LevelMap", "default_registry", "load_level", "parse_level", "CRecorder",
    "FixtureSource", "RawInputEvent", "RecorderFilter", "SessionLog",
    "TraceRecord", "read_raw_log", "read_trace", "record_session",
    "run_session", "write_trace_record", "TraceDiff", "diff_traces",
]
