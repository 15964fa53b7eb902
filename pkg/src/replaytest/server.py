"""Serve mode: a WebSocket session feeding the engine from a browser client.

The world runs on this process's single event-loop thread. The connection
handler only appends client input edges to a queue; the tick loop drains the
queue once per tick, stamps each edge with the engine's authoritative session
tick, logs it exactly as local play would, and steps the simulation. Network
jitter therefore moves *when* an edge lands, but the resulting raw log always
replays bit-exactly.

Wire protocol (newline-free JSON documents, one per WebSocket message):

* server -> client: ``{"kind": "hello", "version": 1, "width": W,
  "height": H}``, then one ``{"kind": "frame", ...}`` per tick with a state
  change (full snapshots), plus ``{"kind": "ack", "code": ..., "tick": t}``
  per accepted input.
* client -> server: ``{"kind": "input", "code": "RIGHT", "edge": "DOWN"}``
  and ``{"kind": "bye"}``.
"""
from __future__ import annotations

import asyncio
import json
import sys
from collections import deque

from .game import GameWorld, load_level
from .recorder import (INPUT_CODES, RawInputEvent, RecorderFilter, SessionLog,
                       attach_recorders)

PROTOCOL_VERSION = 1


def state_frame(world: GameWorld, session_tick: int,
                recording: bool) -> dict:
    """Full snapshot of everything the client draws."""
    rows = [list(r) for r in world.level.rows]
    for d in world.level.doors:
        x, y = d["cell"]
        rows[y][x] = "/" if world.entities.entity(d["name"]).attrs["open"] \
            else d["glyph"]
    if world.level.ray_cells and \
            not world.entities.entity("Ray1").attrs["active"]:
        for x, y in world.level.ray_cells:
            rows[y][x] = "'"
    plat = world.platform_cell()
    if plat is not None:
        rows[plat[1]][plat[0]] = "="
    actors = [{"name": world.avatar.name, "kind": "avatar",
               "cell": list(world.avatar.pos), "alive": world.avatar.alive}]
    actors += [{"name": g.name, "kind": "ghost", "cell": list(g.pos),
                "alive": g.alive} for g in world.ghosts]
    actors += [{"name": n.name, "kind": "npc", "cell": list(n.pos),
                "alive": n.alive} for n in world.npcs]
    return {
        "kind": "frame",
        "tick": world.tick,
        "session_tick": session_tick,
        "grid": ["".join(r) for r in rows],
        "actors": actors,
        "doors": [{"name": d["name"],
                   "open": bool(world.entities.entity(d["name"]).attrs["open"])}
                  for d in world.level.doors],
        "switches": [{"name": s["name"],
                      "pressed": bool(world.entities.entity(s["name"])
                                      .attrs["pressed"])}
                     for s in world.level.switches + world.level.ray_switches],
        "recording": recording,
    }


class ServeSession:
    """One browser play-and-record session."""

    def __init__(self, world: GameWorld, session: SessionLog,
                 tick_rate: float):
        self.world = world
        self.session = session
        self.tick_rate = tick_rate
        self.queue: deque[tuple[str, str]] = deque()
        self.client = None
        self.done = False
        self.completed = False
        self.died = False

    async def handle(self, ws) -> None:
        if self.client is not None:
            await ws.send(json.dumps({"kind": "error", "reason": "busy"}))
            await ws.close()
            return
        self.client = ws
        await ws.send(json.dumps({
            "kind": "hello", "version": PROTOCOL_VERSION,
            "width": self.world.level.width,
            "height": self.world.level.height}))
        await ws.send(json.dumps(
            state_frame(self.world, self.session.session_tick, True)))
        try:
            async for raw in ws:
                try:
                    doc = json.loads(raw)
                except json.JSONDecodeError:
                    continue
                kind = doc.get("kind")
                if kind == "input":
                    code, edge = doc.get("code"), doc.get("edge")
                    if code in INPUT_CODES and edge in ("DOWN", "UP"):
                        self.queue.append((code, edge))
                elif kind == "bye":
                    break
        finally:
            self.done = True

    async def tick_loop(self) -> None:
        # the engine only ticks while a client is attached; session ticks
        # start at the moment of connection
        while not self.done:
            await asyncio.sleep(1.0 / self.tick_rate)
            if self.client is None:
                continue
            edges: list[RawInputEvent] = []
            seen_codes = set()
            requeue = []
            while self.queue:
                code, edge = self.queue.popleft()
                if code in seen_codes:
                    requeue.append((code, edge))   # next tick: one edge/code
                    continue
                seen_codes.add(code)
                edges.append(RawInputEvent(self.session.session_tick,
                                           code, edge))
            self.queue.extend(requeue)
            for ev in edges:
                self.session.log_input(ev)
            stamped = [RawInputEvent(self.world.tick, e.code, e.edge)
                       for e in edges]
            changed_before = self.world.state_hash()
            messages = self.world.step(stamped)
            self.session.session_tick += 1
            for ev in edges:
                await self._send({"kind": "ack", "code": ev.code,
                                  "tick": ev.tick})
            for msg in messages:
                if msg.mtype == "TOUCH" and \
                        msg.source.name == self.world.avatar.name:
                    self.completed = True
                if msg.mtype == "KILLED" and msg.target and \
                        msg.target.name == self.world.avatar.name:
                    self.died = True
            if messages or edges or self.world.state_hash() != changed_before:
                await self._send(state_frame(
                    self.world, self.session.session_tick, True))
            if self.completed or self.died:
                self.done = True
        self.session.flush()
        if self.client is not None:
            try:
                await self._send(state_frame(
                    self.world, self.session.session_tick, True))
                await self.client.close()
            except Exception:
                pass

    async def _send(self, doc: dict) -> None:
        if self.client is None:
            return
        try:
            await self.client.send(json.dumps(doc))
        except Exception:
            self.done = True


async def serve_session(level_path: str, port: int, raw_path: str,
                        trace_path: str, filt: RecorderFilter,
                        tick_rate: float, seed: int,
                        host: str = "127.0.0.1",
                        ready: asyncio.Event | None = None,
                        bound: dict | None = None) -> dict:
    import websockets

    world = load_level(level_path, rng_seed=seed)
    with open(raw_path, "w", encoding="utf-8") as raw_out, \
            open(trace_path, "w", encoding="utf-8") as trace_out:
        session = SessionLog(filt, raw_out, trace_out)
        attach_recorders(world, session)
        sess = ServeSession(world, session, tick_rate)
        async with websockets.serve(sess.handle, host, port) as server:
            if bound is not None:
                bound["port"] = server.sockets[0].getsockname()[1]
            if ready is not None:
                ready.set()
            await sess.tick_loop()
        return {"ticks": session.session_tick,
                "completed": sess.completed, "died": sess.died,
                "raw_events": len(session.raw_events),
                "trace_records": len(session.trace_records)}


def serve_forever(level_path: str, port: int, raw_path: str, trace_path: str,
                  filt: RecorderFilter, tick_rate: float, seed: int) -> int:
    try:
        stats = asyncio.run(serve_session(level_path, port, raw_path,
                                          trace_path, filt, tick_rate, seed))
    except OSError as exc:
        print(f"serve: cannot bind port {port}: {exc}", file=sys.stderr)
        return 3
    print(f"session ended after {stats['ticks']} ticks "
          f"(completed={stats['completed']}, died={stats['died']})")
    print(f"raw log: {raw_path}\ntrace: {trace_path}")
    return 0
