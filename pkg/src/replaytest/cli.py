"""Command-line entry point.

``replaytest {play|record|replay|test|diff|net-check|serve}`` is the whole
automation surface: humans record sessions (``record``, or ``serve`` plus the
browser client), CI replays them (``test`` with a spec file) and inspects
failures (``diff``, ``net-check``).

Exit codes are the CI contract: 0 Pass, 1 Fail, 2 Timeout, 3 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import executor, petri
from .game import GameWorld, InvariantViolation, LevelParseError, load_level
from .recorder import (FixtureSource, RawInputEvent, RecorderFilter,
                       RawLogError, SessionLog, TraceParseError,
                       attach_recorders, read_raw_log, read_trace,
                       record_session, run_session, write_trace)
from .render import render
from .tracediff import diff_traces

USAGE_ERROR = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _default_filter(path: str | None) -> RecorderFilter:
    if path:
        return RecorderFilter.load(path)
    env = os.environ.get("REPLAYTEST_FILTER")
    if env:
        return RecorderFilter.load(env)
    from importlib import resources
    doc = json.loads(resources.files("replaytest.assets")
                     .joinpath("filters/default.json").read_text("utf-8"))
    return RecorderFilter.from_json(doc)


class TtySource:
    """Live keyboard source for terminal play.

    Terminals deliver key taps, not down/up edges, so each tap becomes a
    one-tick pulse (DOWN now, UP next tick): one tap, one cell. Keys:
    w/a/s/d or arrows move, c clones, q quits.
    """

    _KEYMAP = {"w": "UP", "s": "DOWN", "a": "LEFT", "d": "RIGHT",
               "c": "CLONE", "A": "UP", "B": "DOWN", "D": "LEFT", "C": "RIGHT"}

    def __init__(self, tick_rate: float):
        self.tick_rate = tick_rate
        self._pending_up: list[str] = []
        self._quit = False

    def poll(self, session_tick: int) -> list[RawInputEvent] | None:
        import select
        import termios
        import tty

        if self._quit:
            return None
        edges = [RawInputEvent(session_tick, code, "UP")
                 for code in self._pending_up]
        self._pending_up = []
        fd = sys.stdin.fileno()
        old = termios.tcgetattr(fd)
        try:
            tty.setcbreak(fd)
            deadline = time.monotonic() + 1.0 / self.tick_rate
            while time.monotonic() < deadline:
                ready, _, _ = select.select([sys.stdin], [], [],
                                            max(0, deadline - time.monotonic()))
                if not ready:
                    break
                ch = sys.stdin.read(1)
                if ch == "q":
                    self._quit = True
                    break
                if ch == "\x1b":           # arrow escape sequence
                    sys.stdin.read(1)
                    ch = sys.stdin.read(1)
                code = self._KEYMAP.get(ch)
                if code and all(e.code != code for e in edges):
                    edges.append(RawInputEvent(session_tick, code, "DOWN"))
                    if code != "CLONE":
                        self._pending_up.append(code)
        finally:
            termios.tcsetattr(fd, termios.TCSADRAIN, old)
        return edges


def _run_interactive(world: GameWorld, source, session: SessionLog,
                     tick_rate: float, render_view: bool,
                     max_ticks: int) -> None:
    def on_tick(session_tick, messages):
        if render_view:
            sys.stdout.write("\x1b[2J\x1b[H" + render(world) + "\n")
            sys.stdout.flush()
        if tick_rate and not isinstance(source, TtySource):
            time.sleep(1.0 / tick_rate)

    stats = run_session(world, source, session, max_ticks=max_ticks,
                        on_tick=on_tick)
    print(f"session ended after {stats.ticks} ticks "
          f"(completed={stats.completed}, died={stats.died})")


def cmd_play(args) -> int:
    world = load_level(args.level, rng_seed=args.seed)
    source = FixtureSource(read_raw_log(args.input_fixture), grace=args.grace) \
        if args.input_fixture else TtySource(args.tick_rate)
    session = SessionLog(RecorderFilter.nothing())
    _run_interactive(world, source, session,
                     0 if args.input_fixture else args.tick_rate,
                     not args.headless, args.max_ticks)
    return 0


def cmd_record(args) -> int:
    if args.serve:
        if args.headless:
            print("record: --serve and --headless are mutually exclusive",
                  file=sys.stderr)
            return USAGE_ERROR
        from .server import serve_forever
        return serve_forever(args.level, args.port or args.serve,
                             args.out_raw, args.out_trace,
                             _default_filter(args.filter),
                             args.tick_rate, args.seed)
    world = load_level(args.level, rng_seed=args.seed)
    filt = _default_filter(args.filter)
    if args.input_fixture:
        source = FixtureSource(read_raw_log(args.input_fixture),
                               grace=args.grace)
        stats = record_session(world, source, filt, args.out_raw,
                               args.out_trace, max_ticks=args.max_ticks)
    else:
        with open(args.out_raw, "w", encoding="utf-8") as raw_out, \
                open(args.out_trace, "w", encoding="utf-8") as trace_out:
            session = SessionLog(filt, raw_out, trace_out)
            attach_recorders(world, session)
            _run_interactive(world, TtySource(args.tick_rate), session,
                             args.tick_rate, not args.headless,
                             args.max_ticks)
            stats = None
    if stats:
        print(f"recorded {stats.ticks} ticks, {stats.raw_events} inputs, "
              f"{stats.trace_records} trace records")
    print(f"raw log: {args.out_raw}\ntrace: {args.out_trace}")
    return 0


def cmd_replay(args) -> int:
    world = load_level(args.level, rng_seed=args.seed)
    filt = _default_filter(args.filter)
    session = SessionLog(filt)
    attach_recorders(world, session)
    source = FixtureSource(read_raw_log(args.raw), grace=args.grace)

    def on_tick(session_tick, messages):
        if not args.headless:
            sys.stdout.write("\x1b[2J\x1b[H" + render(world) + "\n")
            sys.stdout.flush()
            if args.tick_rate:
                time.sleep(1.0 / args.tick_rate)

    stats = run_session(world, source, session, max_ticks=args.max_ticks,
                        on_tick=on_tick)
    if args.out_trace:
        write_trace(session.trace_records, args.out_trace)
        print(f"trace: {args.out_trace}")
    print(f"replayed {stats.ticks} ticks "
          f"(completed={stats.completed}, died={stats.died})")
    return 0


def cmd_test(args) -> int:
    on_tick = None
    if args.render:
        def on_tick(world, session_tick, messages):
            sys.stdout.write("\x1b[2J\x1b[H" + render(world) + "\n")
            sys.stdout.flush()
    worst = 0
    for spec_path in args.spec:
        spec = executor.TestSpec.from_json(spec_path)
        if args.seed is not None:
            spec.seed = args.seed
        result = executor.run_spec(spec, on_tick)
        text, doc = executor.report(result)
        print(f"== {spec_path}")
        print(text)
        print(json.dumps(doc, sort_keys=True))
        worst = max(worst, result.exit_code)
    return worst


def cmd_diff(args) -> int:
    expected = read_trace(args.expected)
    actual = read_trace(args.actual)
    tolerance = float("inf") if args.ignore_timing else args.tolerance
    diff = diff_traces(expected, actual, tolerance=tolerance)
    print(diff.summary())
    for rec in diff.missing:
        print(f"missing: {rec.mtype} {rec.source.name} -> "
              f"{rec.target.name if rec.target else '-'} @ {rec.timestamp}")
    for rec in diff.extra:
        print(f"extra: {rec.mtype} {rec.source.name} -> "
              f"{rec.target.name if rec.target else '-'} @ {rec.timestamp}")
    return 0 if diff.identical else 1


def cmd_net_check(args) -> int:
    diagnostics: list[str] = []
    world = None
    if args.level:
        try:
            world = load_level(args.level)
        except (LevelParseError, InvariantViolation) as exc:
            diagnostics.append(f"level: {exc}")
    instances = []
    try:
        if args.net.endswith(".nets.json") or args.bindings is None:
            instances = petri.load_instances(args.net, world)
        else:
            tpl = petri.load_net(args.net)
            instances = [petri.instantiate(tpl, json.loads(args.bindings),
                                           world)]
    except (petri.NetParseError, petri.MissingBinding,
            petri.AmbiguousBinding) as exc:
        diagnostics.append(f"net: {exc}")
    except Exception as exc:                      # unknown entities etc.
        diagnostics.append(f"net: {exc}")
    for inst in instances:
        print(f"instance {inst.template.name}@{inst.suffix}: "
              f"{len(inst.places)} places, {len(inst.transitions)} transitions")
        if world is not None:
            try:
                petri.sync_marking(inst, world)
            except Exception as exc:
                diagnostics.append(f"instance {inst.suffix}: {exc}")
    if diagnostics:
        for d in diagnostics:
            print(f"problem: {d}")
        return 1
    print("net-check: ok")
    return 0


def cmd_serve(args) -> int:
    from .server import serve_forever
    return serve_forever(args.level, args.port, args.out_raw, args.out_trace,
                         _default_filter(args.filter), args.tick_rate,
                         args.seed)


def _add_common(p, fixture: bool = True):
    p.add_argument("--level", required=True, help="level map file")
    p.add_argument("--seed", type=int, default=0, help="world rng seed")
    p.add_argument("--tick-rate", type=float, default=10,
                   help="ticks per second for live play/rendering")
    p.add_argument("--headless", action="store_true",
                   help="disable the terminal view")
    p.add_argument("--filter", help="recorder filter config (JSON)")
    p.add_argument("--max-ticks", type=int, default=200_000)
    p.add_argument("--grace", type=int, default=200,
                   help="extra ticks to simulate after the last fixture event")
    if fixture:
        p.add_argument("--input-fixture",
                       help="raw log replayed as if typed live")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="replaytest",
                     description="record and replay gameplay beta tests")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("play", help="play a level (no logging)")
    _add_common(p)
    p.set_defaults(fn=cmd_play)

    p = sub.add_parser("record", help="play and record raw log + trace")
    _add_common(p)
    p.add_argument("--out-raw", required=True)
    p.add_argument("--out-trace", required=True)
    p.add_argument("--serve", type=int, metavar="PORT", default=0,
                   help="serve a browser play session instead of the terminal")
    p.add_argument("--port", type=int, default=0)
    p.set_defaults(fn=cmd_record)

    p = sub.add_parser("replay", help="re-inject a raw log and write a trace")
    _add_common(p, fixture=False)
    p.add_argument("--raw", required=True, help="raw input log to inject")
    p.add_argument("--out-trace")
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("test", help="run test specs")
    p.add_argument("--spec", required=True, nargs="+", help="spec JSON files")
    p.add_argument("--headless", action="store_true", default=True,
                   help="run flat-out with no view (the default)")
    p.add_argument("--render", action="store_true",
                   help="draw each tick while the test runs")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_test)

    p = sub.add_parser("diff", help="compare two trace files")
    p.add_argument("expected")
    p.add_argument("actual")
    p.add_argument("--tolerance", type=float, default=0)
    p.add_argument("--ignore-timing", action="store_true")
    p.set_defaults(fn=cmd_diff)

    p = sub.add_parser("net-check",
                       help="validate a net file against a level")
    p.add_argument("--net", required=True,
                   help="companion file (*.nets.json) or net template")
    p.add_argument("--level")
    p.add_argument("--bindings", help="JSON bindings for a bare template")
    p.set_defaults(fn=cmd_net_check)

    p = sub.add_parser("serve", help="serve a browser play-and-record session")
    p.add_argument("--level", required=True)
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--out-raw", default="session.rawlog")
    p.add_argument("--out-trace", default="session.trace")
    p.add_argument("--filter")
    p.add_argument("--tick-rate", type=float, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR
    if getattr(args, "tick_rate", 1) < 1:
        print("error: --tick-rate must be >= 1", file=sys.stderr)
        return USAGE_ERROR
    try:
        return args.fn(args)
    except (LevelParseError, InvariantViolation, TraceParseError,
            RawLogError, executor.SpecError, petri.NetParseError,
            FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
