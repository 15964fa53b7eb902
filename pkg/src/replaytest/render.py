"""Glyph-grid terminal view of a world. No game state is read back from
here; rendering is strictly an output surface, so headless runs are
behaviourally identical."""
from __future__ import annotations

from .game import GameWorld


def render_grid(world: GameWorld) -> list[str]:
    """Grid rows with live feature states: open doors become ``/``, pressed
    switches ``*``, inactive ray cells ``'``, the platform ``=``; the avatar
    is ``@``, ghosts ``g``, other scripted actors ``E``."""
    rows = [list(r) for r in world.level.rows]

    def put(cell, ch):
        x, y = cell
        rows[y][x] = ch

    for d in world.level.doors:
        if world.entities.entity(d["name"]).attrs["open"]:
            put(d["cell"], "/")
    for sw in world.level.switches + world.level.ray_switches:
        if world.entities.entity(sw["name"]).attrs["pressed"]:
            put(sw["cell"], "*")
    if world.level.ray_cells and \
            not world.entities.entity("Ray1").attrs["active"]:
        for cell in world.level.ray_cells:
            put(cell, "'")
    plat = world.platform_cell()
    if plat is not None:
        put(plat, "=")
    for trig in world.level.triggers:
        put(trig["cell"], "T")
    for npc in world.npcs:
        if npc.alive:
            put(npc.pos, "E")
    for ghost in world.ghosts:
        if ghost.alive:
            put(ghost.pos, "g")
    if world.avatar.alive:
        put(world.avatar.pos, "@")
    return ["".join(r) for r in rows]


def render(world: GameWorld) -> str:
    header = f"tick {world.tick}  ghosts {len(world.ghosts)}"
    return "\n".join([header] + render_grid(world))
