"""Deterministic fixed-time-step grid puzzle world.

The test-bed game: a 4-directional grid walker with hold-to-open switches and
doors, a self-cloning mechanic that restarts the level while ghosts replay the
avatar's previous lives, lethal ray lines with a deactivating switch, and a
moving platform over deadly gap cells.

Every tick runs the same phase sequence:

1. the platform advances when its period has elapsed, carrying riders;
2. ghosts (and scripted actors) replay their stored inputs for this tick;
3. the avatar applies this tick's input edges and moves at most one cell;
4. switch occupancy edges fire: entering emits PRESSED then the switch emits
   Open/DEACTIVATE at its wired door/ray; leaving emits RELEASED then
   Close/ACTIVATE; a door closing on an occupant kills them;
5. kill checks: active ray cells, then gap (platform-less track) cells;
6. touch edges: stepping onto a portal emits TOUCH, onto a trigger TOUCHED.

Given the same level, blueprints and full input log, two executions produce
identical message logs and per-tick state hashes; nothing is clocked off
wall time and nothing draws from a random source.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Callable, Iterable

from .entities import (BlueprintRegistry, Component, Entity, EntityRef,
                       EntityWorld, Message, UnknownEntity, component_kind,
                       register_blueprints)
from .recorder import RawInputEvent

WALL = "#"
FLOOR = "."
START = "P"
PORTAL = "G"
TRACK = "~"
RAY_CELL = "!"
RAY_SWITCH = "r"
SWITCH_GLYPHS = "abcd"
DOOR_GLYPHS = "ABCD"

MOVE_DELTAS = {"UP": (0, -1), "DOWN": (0, 1), "LEFT": (-1, 0), "RIGHT": (1, 0)}
MOVE_CODES = tuple(MOVE_DELTAS)

MESSAGE_VOCABULARY = frozenset({
    "Open", "Close", "PRESSED", "RELEASED", "CLONE", "TOUCH", "TOUCHED",
    "KILLED", "DEACTIVATE", "ACTIVATE",
})


class LevelParseError(ValueError):
    def __init__(self, message: str, line: int, col: int = 0):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class InvariantViolation(ValueError):
    pass


class TickMismatch(ValueError):
    def __init__(self, got: int, expected: int):
        super().__init__(f"input stamped tick {got}, world at tick {expected}")


class UnknownPredicate(KeyError):
    def __init__(self, etype: str, key: str):
        super().__init__(f"no predicate {key!r} declared for type {etype!r}")
        self.etype = etype
        self.key = key


@dataclass(frozen=True)
class GameStateQuery:
    """A named boolean question about one entity, e.g. ("Door1", "isOpen")."""

    entity: str
    key: str


# ---------------------------------------------------------------------------
# Level files


@dataclass
class LevelMap:
    width: int
    height: int
    period: int
    rows: list[str]
    player_start: tuple[int, int]
    portals: list[tuple[str, tuple[int, int]]]
    switches: list[dict]            # {name, glyph, cell, target}
    doors: list[dict]               # {name, glyph, cell}
    ray_switches: list[dict]
    ray_cells: list[tuple[int, int]]
    track: list[tuple[int, int]]
    triggers: list[dict]            # {name, cell}
    npcs: list[dict]                # {name, etype, cell, moves}

    def is_wall(self, cell: tuple[int, int]) -> bool:
        x, y = cell
        if not (0 <= x < self.width and 0 <= y < self.height):
            return True
        return self.rows[y][x] == WALL


def _order_track(cells: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Order track cells into a traversal path (simple path or cycle)."""
    if len(cells) <= 1:
        return list(cells)
    cellset = set(cells)
    neighbors: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for c in cells:
        x, y = c
        adj = [n for n in ((x, y - 1), (x, y + 1), (x - 1, y), (x + 1, y))
               if n in cellset]
        if not 1 <= len(adj) <= 2:
            raise InvariantViolation(
                f"track cell {c} has {len(adj)} track neighbours; "
                "track must be a simple path or cycle")
        neighbors[c] = adj
    endpoints = sorted(c for c in cells if len(neighbors[c]) == 1)
    if endpoints:
        start = endpoints[0]
    else:
        start = min(cells)
    path = [start]
    prev = None
    cur = start
    while len(path) < len(cells):
        nxt = [n for n in neighbors[cur] if n != prev]
        if not nxt:
            break
        prev, cur = cur, min(nxt) if len(nxt) > 1 else nxt[0]
        path.append(cur)
    if len(path) != len(cells):
        raise InvariantViolation("track cells are not contiguous")
    return path


def parse_level(text: str) -> LevelMap:
    """Parse the level grammar.

    First line ``W H period``; then H rows of W glyphs; then one directive
    per line: wiring ``switch=door`` (or ``r=!``), ``trigger NAME X Y``,
    ``actor NAME X Y MOVES [ETYPE]``. Blank lines and lines starting with
    ``;`` after the grid are ignored.
    """
    lines = text.splitlines()
    if not lines:
        raise LevelParseError("empty file", 1)
    header = lines[0].split()
    if len(header) != 3:
        raise LevelParseError("header must be 'W H period'", 1)
    try:
        width, height, period = (int(p) for p in header)
    except ValueError:
        raise LevelParseError("header fields must be integers", 1) from None
    if width <= 0 or height <= 0 or period < 0:
        raise LevelParseError("W and H must be positive, period >= 0", 1)
    if len(lines) < 1 + height:
        raise LevelParseError(f"expected {height} grid rows", len(lines) + 1)

    rows: list[str] = []
    starts: list[tuple[int, int]] = []
    portal_cells: list[tuple[int, int]] = []
    switch_cells: dict[str, tuple[int, int]] = {}
    door_cells: dict[str, tuple[int, int]] = {}
    ray_switch_cells: list[tuple[int, int]] = []
    ray_cells: list[tuple[int, int]] = []
    track_cells: list[tuple[int, int]] = []
    legal = set(WALL + FLOOR + START + PORTAL + TRACK + RAY_CELL + RAY_SWITCH
                + SWITCH_GLYPHS + DOOR_GLYPHS)
    for y in range(height):
        row = lines[1 + y]
        if len(row) != width:
            raise LevelParseError(f"row has width {len(row)}, expected {width}",
                                  2 + y, len(row))
        for x, ch in enumerate(row):
            if ch not in legal:
                raise LevelParseError(f"unknown glyph {ch!r}", 2 + y, x)
            cell = (x, y)
            if ch == START:
                starts.append(cell)
            elif ch == PORTAL:
                portal_cells.append(cell)
            elif ch in SWITCH_GLYPHS:
                if ch in switch_cells:
                    raise LevelParseError(f"duplicate switch {ch!r}", 2 + y, x)
                switch_cells[ch] = cell
            elif ch in DOOR_GLYPHS:
                if ch in door_cells:
                    raise LevelParseError(f"duplicate door {ch!r}", 2 + y, x)
                door_cells[ch] = cell
            elif ch == RAY_SWITCH:
                ray_switch_cells.append(cell)
            elif ch == RAY_CELL:
                ray_cells.append(cell)
            elif ch == TRACK:
                track_cells.append(cell)
        rows.append(row)

    wiring: dict[str, str] = {}
    triggers: list[dict] = []
    npcs: list[dict] = []
    for i, raw in enumerate(lines[1 + height:], start=2 + height):
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        if "=" in line and " " not in line:
            left, right = line.split("=", 1)
            wiring[left] = right
            continue
        parts = line.split()
        if parts[0] == "trigger" and len(parts) == 4:
            triggers.append({"name": parts[1],
                             "cell": (int(parts[2]), int(parts[3]))})
        elif parts[0] == "actor" and len(parts) in (5, 6):
            npcs.append({"name": parts[1],
                         "cell": (int(parts[2]), int(parts[3])),
                         "moves": parts[4] if parts[4] != "-" else "",
                         "etype": parts[5] if len(parts) == 6 else "Enemy"})
        else:
            raise LevelParseError(f"unrecognized directive {line!r}", i)

    if len(starts) != 1:
        raise InvariantViolation(f"expected exactly one player start, "
                                 f"found {len(starts)}")
    if not portal_cells:
        raise InvariantViolation("level has no portal")
    if len(ray_switch_cells) > 1:
        raise InvariantViolation("at most one ray switch per level")

    door_names = {g: f"Door{i + 1}" for i, g in enumerate(sorted(door_cells))}
    switches = []
    for i, g in enumerate(sorted(switch_cells)):
        if g not in wiring:
            raise InvariantViolation(f"switch {g!r} has no wiring")
        target_glyph = wiring[g]
        if target_glyph not in door_names:
            raise InvariantViolation(
                f"switch {g!r} wired to unknown door {target_glyph!r}")
        switches.append({"name": f"Button{i + 1}", "glyph": g,
                         "cell": switch_cells[g],
                         "target": door_names[target_glyph]})
    doors = [{"name": door_names[g], "glyph": g, "cell": door_cells[g]}
             for g in sorted(door_cells)]
    ray_switches = []
    if ray_switch_cells:
        if wiring.get(RAY_SWITCH) != RAY_CELL:
            raise InvariantViolation("ray switch present but not wired (r=!)")
        if not ray_cells:
            raise InvariantViolation("ray switch wired to no ray cells")
        ray_switches.append({"name": "RaySwitch1", "glyph": RAY_SWITCH,
                             "cell": ray_switch_cells[0], "target": "Ray1"})
    track = _order_track(sorted(track_cells))
    for c in track:
        x, y = c
        if rows[y][x] == WALL:
            raise InvariantViolation(f"track cell {c} is a wall")

    portals = [("EndPortal" if i == 0 else f"EndPortal{i + 1}", cell)
               for i, cell in enumerate(sorted(portal_cells))]
    return LevelMap(width, height, period, rows, starts[0], portals,
                    switches, doors, ray_switches, ray_cells, track,
                    triggers, npcs)


def default_registry() -> BlueprintRegistry:
    """Blueprint registry from the shipped blueprint file."""
    data = resources.files("replaytest.assets").joinpath("blueprints.json")
    return register_blueprints(json.loads(data.read_text("utf-8")))


def load_level(path: str, registry: BlueprintRegistry | None = None,
               rng_seed: int = 0) -> "GameWorld":
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return GameWorld(parse_level(text), registry or default_registry(),
                     rng_seed=rng_seed)


# ---------------------------------------------------------------------------
# Game components


@component_kind
class CGlyph(Component):
    kind = "CGlyph"


@component_kind
class CPawn(Component):
    kind = "CPawn"

    def accept(self, msg: Message) -> bool:
        if msg.mtype == "KILLED" and msg.target and self.entity and \
                msg.target.name == self.entity.name:
            self.entity.attrs["dead"] = True
            return True
        return False


@component_kind
class CSwitchState(Component):
    """Hold-style switch: pressed while occupied; relays the press/release
    edge to its wired door (Open/Close) or ray (DEACTIVATE/ACTIVATE)."""

    kind = "CSwitchState"

    _EFFECTS = {"Door": ("Open", "Close"), "Ray": ("DEACTIVATE", "ACTIVATE")}

    def _relay(self, rising: bool) -> None:
        assert self.entity is not None and self.world is not None
        target = self.world.entity(self.entity.attrs["target"])
        on_m, off_m = self._EFFECTS[target.etype]
        self.world.send(Message.make(self.world.tick,
                                     on_m if rising else off_m,
                                     self.entity.ref(), target.ref()))

    def accept(self, msg: Message) -> bool:
        if msg.target is None or self.entity is None or \
                msg.target.name != self.entity.name:
            return False
        if msg.mtype == "PRESSED":
            self.entity.attrs["pressed"] = True
            self._relay(rising=True)
            return True
        if msg.mtype == "RELEASED":
            self.entity.attrs["pressed"] = False
            self._relay(rising=False)
            return True
        return False


@component_kind
class CDoorState(Component):
    kind = "CDoorState"

    def accept(self, msg: Message) -> bool:
        if msg.target is None or self.entity is None or \
                msg.target.name != self.entity.name:
            return False
        if msg.mtype == "Open":
            self.entity.attrs["open"] = True
            return True
        if msg.mtype == "Close":
            self.entity.attrs["open"] = False
            return True
        return False


@component_kind
class CRayState(Component):
    kind = "CRayState"

    def accept(self, msg: Message) -> bool:
        if msg.target is None or self.entity is None or \
                msg.target.name != self.entity.name:
            return False
        if msg.mtype == "DEACTIVATE":
            self.entity.attrs["active"] = False
            return True
        if msg.mtype == "ACTIVATE":
            self.entity.attrs["active"] = True
            return True
        return False


@component_kind
class CPortalState(Component):
    kind = "CPortalState"

    def accept(self, msg: Message) -> bool:
        if msg.mtype == "TOUCH" and msg.target and self.entity and \
                msg.target.name == self.entity.name:
            self.entity.attrs["touched"] = True
            return True
        return False


@component_kind
class CTriggerState(Component):
    kind = "CTriggerState"

    def accept(self, msg: Message) -> bool:
        if msg.mtype == "TOUCHED" and msg.target and self.entity and \
                msg.target.name == self.entity.name:
            self.entity.attrs["touched"] = True
            return True
        return False


@component_kind
class CPlatformState(Component):
    kind = "CPlatformState"


@component_kind
class CState(Component):
    """Inert attribute bag, for blueprints composed purely in data."""

    kind = "CState"


# ---------------------------------------------------------------------------
# Actors


@dataclass
class Actor:
    name: str
    etype: str
    pos: tuple[int, int]
    alive: bool = True
    held: dict[str, int] = field(default_factory=dict)
    script: list[RawInputEvent] | None = None
    script_len: int = 0
    moves: str = ""                 # scripted NPC move string, one code/tick

    def snapshot(self) -> tuple:
        return (self.name, self.pos, self.alive,
                tuple(sorted(self.held.items())), self.script_len)


_MOVE_LETTER = {"U": "UP", "D": "DOWN", "L": "LEFT", "R": "RIGHT", "W": "WAIT"}


# ---------------------------------------------------------------------------
# Predicate registry


PredicateFn = Callable[["GameWorld", Entity], tuple[bool, str | None]]
_PREDICATES: dict[tuple[str, str], PredicateFn] = {}


def predicate(etype: str, key: str):
    def deco(fn: PredicateFn) -> PredicateFn:
        _PREDICATES[(etype, key)] = fn
        return fn
    return deco


def _occupant_etype(world: "GameWorld", cell: tuple[int, int]) -> str | None:
    for actor in world.actors():
        if actor.alive and actor.pos == cell:
            return actor.etype
    return None


@predicate("Door", "isOpen")
def _door_open(world, ent):
    return bool(ent.attrs["open"]), ent.etype


@predicate("Door", "isClosed")
def _door_closed(world, ent):
    return not ent.attrs["open"], ent.etype


def _pressed(world, ent):
    occ = _occupant_etype(world, tuple(ent.attrs["cell"]))
    return bool(ent.attrs["pressed"]), occ or ent.etype


def _unpressed(world, ent):
    ok, _ = _pressed(world, ent)
    return not ok, ent.etype


_PREDICATES[("DoorButton", "isPressed")] = _pressed
_PREDICATES[("DoorButton", "isUnpressed")] = _unpressed
_PREDICATES[("RaySwitch", "isPressed")] = _pressed
_PREDICATES[("RaySwitch", "isUnpressed")] = _unpressed


@predicate("Ray", "isActive")
def _ray_active(world, ent):
    return bool(ent.attrs["active"]), ent.etype


@predicate("Ray", "isInactive")
def _ray_inactive(world, ent):
    return not ent.attrs["active"], ent.etype


@predicate("EndPortal", "isReached")
def _portal_reached(world, ent):
    return bool(ent.attrs["touched"]), ent.etype


@predicate("Trigger", "isTouched")
def _trigger_touched(world, ent):
    return bool(ent.attrs["touched"]), ent.etype


@predicate("Player", "isAlive")
def _pawn_alive(world, ent):
    actor = world.actor_by_name(ent.name)
    return bool(actor and actor.alive), ent.etype


# ---------------------------------------------------------------------------
# Navigation


@dataclass
class NavPlan:
    reachable: bool
    next_code: str | None = None    # None when already at target; WAIT = ride
    distance: int | None = None
    path: list[tuple[int, int]] = field(default_factory=list)


class GameWorld:
    """One level in play. Single-threaded; all mutation happens in step()."""

    def __init__(self, level: LevelMap, registry: BlueprintRegistry,
                 rng_seed: int = 0):
        self.level = level
        self.registry = registry
        self.rng_seed = rng_seed
        self.tick = 0
        self.entities = EntityWorld(registry)
        self.clone_scripts: list[list[RawInputEvent]] = []
        self.current_life_inputs: list[RawInputEvent] = []
        self._script_lengths: list[int] = []
        self._press_seq = 0

        self.entities.spawn("Player", "Player")
        for sw in level.switches:
            self.entities.spawn("DoorButton", sw["name"],
                                {"cell": sw["cell"], "pressed": False,
                                 "target": sw["target"], "glyph": sw["glyph"]})
        for d in level.doors:
            self.entities.spawn("Door", d["name"],
                                {"cell": d["cell"], "open": False,
                                 "glyph": d["glyph"]})
        for sw in level.ray_switches:
            self.entities.spawn("RaySwitch", sw["name"],
                                {"cell": sw["cell"], "pressed": False,
                                 "target": sw["target"]})
        if level.ray_cells:
            self.entities.spawn("Ray", "Ray1",
                                {"cells": list(level.ray_cells), "active": True})
        if level.track:
            # period 0 leaves the track bare: every track cell is a gap
            start_index = 0 if level.period > 0 else -1
            self.entities.spawn("Platform", "Platform1",
                                {"track": list(level.track),
                                 "pos_index": start_index})
        for name, cell in level.portals:
            self.entities.spawn("EndPortal", name, {"cell": cell,
                                                    "touched": False})
        for trig in level.triggers:
            self.entities.spawn("Trigger", trig["name"],
                                {"cell": trig["cell"], "touched": False})

        self.avatar = Actor("Player", "Player", level.player_start)
        self.ghosts: list[Actor] = []
        self.npcs: list[Actor] = []
        for npc in level.npcs:
            self.entities.spawn(npc["etype"], npc["name"], {"cell": npc["cell"]})
            self.npcs.append(Actor(npc["name"], npc["etype"], npc["cell"],
                                   moves=npc["moves"]))

    # -- actor plumbing -------------------------------------------------

    def actors(self) -> list[Actor]:
        return [self.avatar] + self.ghosts + self.npcs

    def actor_by_name(self, name: str) -> Actor | None:
        for actor in self.actors():
            if actor.name == name:
                return actor
        return None

    # -- platform -------------------------------------------------------

    def _platform(self) -> Entity | None:
        return self.entities.find("Platform1")

    def platform_cell(self) -> tuple[int, int] | None:
        plat = self._platform()
        if plat is None or plat.attrs["pos_index"] < 0:
            return None
        return tuple(plat.attrs["track"][plat.attrs["pos_index"]])

    def _platform_advances_at(self, tick: int) -> bool:
        plat = self._platform()
        if plat is None or plat.attrs["pos_index"] < 0:
            return False
        return tick > 0 and self.level.period > 0 and \
            tick % self.level.period == 0

    def platform_cell_after(self, tick: int) -> tuple[int, int] | None:
        """Where the platform sits once the step for ``tick`` has run phase 1."""
        plat = self._platform()
        if plat is None or plat.attrs["pos_index"] < 0:
            return None
        idx = plat.attrs["pos_index"]
        if self._platform_advances_at(tick):
            idx = (idx + 1) % len(plat.attrs["track"])
        return tuple(plat.attrs["track"][idx])

    # -- queries ----------------------------------------------------------

    def query_state(self, q: GameStateQuery | tuple[str, str]) -> bool:
        ok, _ = self.query_state_with_witness(q)
        return ok

    def query_state_with_witness(self, q: GameStateQuery | tuple[str, str]
                                 ) -> tuple[bool, str | None]:
        if isinstance(q, tuple):
            q = GameStateQuery(*q)
        ent = self.entities.entity(q.entity)
        fn = _PREDICATES.get((ent.etype, q.key))
        if fn is None:
            raise UnknownPredicate(ent.etype, q.key)
        return fn(self, ent)

    def is_cell_passable(self, cell: tuple[int, int],
                         platform_at: tuple[int, int] | None = None) -> bool:
        """Static passability used by the navigator. Track cells are passable
        only where the platform sits; active ray cells and closed doors are
        not."""
        if self.level.is_wall(cell):
            return False
        for d in self.level.doors:
            if d["cell"] == cell:
                return bool(self.entities.entity(d["name"]).attrs["open"])
        if cell in self.level.ray_cells:
            ray = self.entities.entity("Ray1")
            return not ray.attrs["active"]
        if cell in self.level.track:
            if platform_at is None:
                platform_at = self.platform_cell()
            return cell == platform_at
        return True

    def entity_cell(self, name: str) -> tuple[int, int]:
        actor = self.actor_by_name(name)
        if actor is not None:
            return actor.pos
        ent = self.entities.entity(name)
        if "cell" in ent.attrs:
            return tuple(ent.attrs["cell"])
        if "cells" in ent.attrs:
            return tuple(ent.attrs["cells"][0])
        if "track" in ent.attrs:
            cell = self.platform_cell()
            if cell is not None:
                return cell
            return tuple(ent.attrs["track"][0])
        raise UnknownEntity(name)

    def _platform_index_at(self, tick: int) -> int:
        """Platform track index in effect during tick ``tick`` (after its
        phase-1 advance)."""
        if tick < 0 or self.level.period <= 0 or not self.level.track:
            return 0
        return (tick // self.level.period) % len(self.level.track)

    def navigate(self, target_name: str) -> NavPlan:
        """Shortest input plan toward the named entity, returning the move
        for the next tick (or WAIT while riding the platform, or None when
        already there).

        The search is breadth-first over (cell, tick) states. Doors and rays
        are taken as they currently stand, but the platform's deterministic
        motion is modelled: a track cell is passable exactly when the
        platform occupies it on that tick, and standing on the platform when
        it advances carries the walker along. The planner never issues a
        movement on a tick where it is being carried (it rides instead), so
        a platform that moves every tick can be boarded but never stepped
        off; such hops are beyond the game AI by design. Callers re-plan
        every tick, which keeps plans valid as doors and rays change.
        """
        goal = self.entity_cell(target_name)
        start = self.avatar.pos
        if start == goal:
            return NavPlan(True, None, 0, [])

        track = self.level.track
        period = self.level.period
        n = len(track)
        cycle = period * n if period > 0 and n else 1
        has_platform = bool(n) and period > 0 and \
            self._platform() is not None and \
            self._platform().attrs["pos_index"] >= 0

        def plat_at(tick: int) -> tuple[int, int] | None:
            if not has_platform:
                return None
            return track[self._platform_index_at(tick)]

        def advances(tick: int) -> bool:
            return has_platform and tick > 0 and tick % period == 0

        def passable(cell: tuple[int, int], tick: int) -> bool:
            if self.level.is_wall(cell):
                return False
            for d in self.level.doors:
                if d["cell"] == cell:
                    return bool(self.entities.entity(d["name"]).attrs["open"])
            if cell in self.level.ray_cells:
                return not self.entities.entity("Ray1").attrs["active"]
            if cell in track:
                return cell == plat_at(tick)
            return True

        # state: (cell, absolute tick mod cycle); BFS layers are ticks
        t0 = self.tick
        start_state = (start, t0 % cycle)
        parents: dict[tuple, tuple[tuple, str] | None] = {start_state: None}
        frontier = [start_state]
        depth = 0
        while frontier and depth <= len(self.level.rows) * self.level.width \
                * cycle + cycle:
            depth += 1
            tick = t0 + depth - 1   # the tick on which this move executes
            nxt: list[tuple] = []
            for state in frontier:
                cell, _ = state
                carried = advances(tick) and cell == plat_at(tick - 1)
                here = plat_at(tick) if carried else cell
                if carried and here != cell and not passable(here, tick):
                    continue      # carried into an unsafe cell: dead branch
                moves: list[tuple[str, tuple[int, int]]] = []
                if not carried:
                    for code in ("UP", "DOWN", "LEFT", "RIGHT"):
                        dx, dy = MOVE_DELTAS[code]
                        moves.append((code, (here[0] + dx, here[1] + dy)))
                moves.append(("WAIT", here))
                for code, dest in moves:
                    if code != "WAIT" and not passable(dest, tick):
                        continue
                    if code == "WAIT" and dest in track and \
                            dest != plat_at(tick):
                        continue  # waiting on bare track is death
                    new_state = (dest, (tick + 1) % cycle)
                    if new_state in parents:
                        continue
                    parents[new_state] = (state, code)
                    if dest == goal:
                        steps: list[str] = []
                        path: list[tuple[int, int]] = []
                        cur: tuple | None = new_state
                        while parents[cur] is not None:
                            prev, c = parents[cur]
                            steps.append(c)
                            path.append(cur[0])
                            cur = prev
                        steps.reverse()
                        path.reverse()
                        return NavPlan(True, steps[0], len(steps), path)
                    nxt.append(new_state)
            frontier = nxt
        return NavPlan(False)

    # -- stepping ---------------------------------------------------------

    def _emit(self, mtype: str, source: EntityRef, target: EntityRef | None,
              payload: dict[str, Any] | None = None) -> None:
        self.entities.send(Message.make(self.tick, mtype, source, target,
                                        payload))

    def _actor_ref(self, actor: Actor) -> EntityRef:
        if self.entities.has_entity(actor.name):
            return self.entities.ref(actor.name)
        return EntityRef(actor.name, actor.etype)

    def _apply_edges(self, actor: Actor, edges: Iterable[RawInputEvent]) -> None:
        for ev in edges:
            if ev.code not in MOVE_DELTAS:
                continue
            if ev.edge == "DOWN":
                self._press_seq += 1
                actor.held[ev.code] = self._press_seq
            else:
                actor.held.pop(ev.code, None)

    def _move_actor(self, actor: Actor) -> None:
        if not actor.alive or not actor.held:
            return
        code = max(actor.held, key=actor.held.__getitem__)
        dx, dy = MOVE_DELTAS[code]
        target = (actor.pos[0] + dx, actor.pos[1] + dy)
        if self.level.is_wall(target):
            return
        for d in self.level.doors:
            if d["cell"] == target and \
                    not self.entities.entity(d["name"]).attrs["open"]:
                return
        actor.pos = target

    def step(self, inputs: list[RawInputEvent] | None = None) -> list[Message]:
        inputs = inputs or []
        for ev in inputs:
            if ev.tick != self.tick:
                raise TickMismatch(ev.tick, self.tick)
        self.entities.tick = self.tick
        prev_pos = {a.name: a.pos for a in self.actors()}

        clone_edge = any(ev.code == "CLONE" and ev.edge == "DOWN"
                         for ev in inputs)
        if clone_edge and self.avatar.alive:
            self._do_clone()
            return self.entities.drain_sent()

        # 1. platform
        plat = self._platform()
        if self._platform_advances_at(self.tick):
            old = self.platform_cell()
            plat.attrs["pos_index"] = \
                (plat.attrs["pos_index"] + 1) % len(plat.attrs["track"])
            new = self.platform_cell()
            for actor in self.actors():
                if actor.alive and actor.pos == old:
                    actor.pos = new

        # 2. ghosts and scripted actors replay
        for ghost in self.ghosts:
            if not ghost.alive:
                continue
            if self.tick < ghost.script_len:
                self._apply_edges(
                    ghost, [ev for ev in ghost.script if ev.tick == self.tick])
                self._move_actor(ghost)
            else:
                ghost.held.clear()
        for npc in self.npcs:
            if not npc.alive:
                continue
            if self.tick < len(npc.moves):
                code = _MOVE_LETTER.get(npc.moves[self.tick])
                if code and code != "WAIT":
                    npc.held = {code: 1}
                    self._move_actor(npc)
                    npc.held = {}

        # 3. avatar
        self._apply_edges(self.avatar, inputs)
        for ev in inputs:
            if ev.code != "CLONE":
                self.current_life_inputs.append(
                    RawInputEvent(self.tick, ev.code, ev.edge, ev.device))
        self._move_actor(self.avatar)

        # 4. switch occupancy edges, then door crush
        for ent in self.entities.entities():
            if ent.etype not in ("DoorButton", "RaySwitch"):
                continue
            cell = tuple(ent.attrs["cell"])
            occupants = [a for a in self.actors() if a.alive and a.pos == cell]
            was = bool(ent.attrs["pressed"])
            if occupants and not was:
                self._emit("PRESSED", self._actor_ref(occupants[0]), ent.ref())
            elif not occupants and was:
                leaver = next((a for a in self.actors()
                               if prev_pos.get(a.name) == cell), None)
                src = self._actor_ref(leaver) if leaver else ent.ref()
                self._emit("RELEASED", src, ent.ref())
        for d in self.level.doors:
            ent = self.entities.entity(d["name"])
            if not ent.attrs["open"]:
                for actor in self.actors():
                    if actor.alive and actor.pos == d["cell"]:
                        self._emit("KILLED", ent.ref(), self._actor_ref(actor))
                        actor.alive = False

        # 5. kill checks: rays, then gaps
        if self.level.ray_cells:
            ray = self.entities.entity("Ray1")
            if ray.attrs["active"]:
                for actor in self.actors():
                    if actor.alive and actor.pos in self.level.ray_cells:
                        self._emit("KILLED", ray.ref(), self._actor_ref(actor))
                        actor.alive = False
        if self.level.track:
            plat_cell = self.platform_cell()
            plat_ref = self.entities.ref("Platform1")
            for actor in self.actors():
                if actor.alive and actor.pos in self.level.track and \
                        actor.pos != plat_cell:
                    self._emit("KILLED", plat_ref, self._actor_ref(actor))
                    actor.alive = False

        # 6. touch edges
        for name, cell in self.level.portals:
            for actor in self.actors():
                if actor.alive and actor.pos == cell and \
                        prev_pos.get(actor.name) != cell:
                    self._emit("TOUCH", self._actor_ref(actor),
                               self.entities.ref(name))
        for trig in self.level.triggers:
            for actor in self.actors():
                if actor.alive and actor.pos == trig["cell"] and \
                        prev_pos.get(actor.name) != trig["cell"]:
                    self._emit("TOUCHED", self._actor_ref(actor),
                               self.entities.ref(trig["name"]))

        self.entities.update_components(self.tick)
        self.tick += 1
        self.entities.tick = self.tick
        return self.entities.drain_sent()

    # -- cloning ----------------------------------------------------------

    def _do_clone(self) -> None:
        self._emit("CLONE", self.entities.ref("Player"), None)
        self.clone_scripts.append(list(self.current_life_inputs))
        self._script_lengths.append(self.tick)
        ghost_name = f"Ghost{len(self.clone_scripts)}"
        if not self.entities.has_entity(ghost_name):
            self.entities.spawn("Player", ghost_name)
        self._reset_to_initial()

    def clone(self) -> list[Message]:
        """Restart the level, appending the current life as a new ghost
        script. Returns the messages emitted (the CLONE record)."""
        if not self.avatar.alive:
            raise InvariantViolation("cannot clone a dead avatar")
        self.entities.tick = self.tick
        self._do_clone()
        return self.entities.drain_sent()

    def _reset_to_initial(self) -> None:
        self.tick = 0
        self.entities.tick = 0
        self.entities.reset_attrs()
        self.avatar = Actor("Player", "Player", self.level.player_start)
        self.ghosts = [
            Actor(f"Ghost{i + 1}", "Player", self.level.player_start,
                  script=script, script_len=length)
            for i, (script, length) in enumerate(
                zip(self.clone_scripts, self._script_lengths))]
        self.npcs = [Actor(n["name"], n["etype"], n["cell"], moves=n["moves"])
                     for n in self.level.npcs]
        self.current_life_inputs = []

    # -- hashing ------------------------------------------------------------

    def state_hash(self) -> str:
        """Digest of all gameplay-relevant state at the current tick."""
        blob = repr((
            self.tick,
            self.rng_seed,
            [a.snapshot() for a in self.actors()],
            [tuple((e.tick, e.code, e.edge) for e in s)
             for s in self.clone_scripts],
            tuple((e.tick, e.code, e.edge) for e in self.current_life_inputs),
            self.entities.canonical_state(),
        ))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()
