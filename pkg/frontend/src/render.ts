// Frame rendering. The cell model is pure (testable without a DOM); the
// painter at the bottom writes it into a <pre> grid.

import { StateFrame } from "./protocol.js";

export interface Cell {
    ch: string;
    cls: string;
}

const GLYPH_CLASSES: Record<string, string> = {
    "#": "wall",
    ".": "floor",
    "P": "floor",
    "G": "portal",
    "~": "track",
    "=": "platform",
    "!": "ray",
    "'": "ray-off",
    "/": "door-open",
};

function baseClass(ch: string): string {
    if (GLYPH_CLASSES[ch]) {
        return GLYPH_CLASSES[ch];
    }
    if (ch >= "A" && ch <= "D") {
        return "door";
    }
    if ((ch >= "a" && ch <= "d") || ch === "r") {
        return "switch";
    }
    return "floor";
}

export function frameToCells(frame: StateFrame): Cell[][] {
    const rows: Cell[][] = frame.grid.map((row) =>
        [...row].map((ch) => ({ ch, cls: baseClass(ch) })),
    );
    for (const actor of frame.actors) {
        if (!actor.alive) {
            continue;
        }
        const [x, y] = actor.cell;
        if (y < 0 || y >= rows.length || x < 0 || x >= rows[y].length) {
            continue;
        }
        if (actor.kind === "avatar") {
            rows[y][x] = { ch: "@", cls: "avatar" };
        } else if (actor.kind === "ghost" && rows[y][x].cls !== "avatar") {
            rows[y][x] = { ch: "g", cls: "ghost" };
        } else if (actor.kind === "npc" && rows[y][x].cls !== "avatar") {
            rows[y][x] = { ch: "E", cls: "npc" };
        }
    }
    return rows;
}

export function renderText(frame: StateFrame): string {
    return frameToCells(frame)
        .map((row) => row.map((c) => c.ch).join(""))
        .join("\n");
}

export function statusLine(frame: StateFrame): string {
    const ghosts = frame.actors.filter((a) => a.kind === "ghost").length;
    const doors = frame.doors
        .map((d) => `${d.name}:${d.open ? "open" : "closed"}`)
        .join(" ");
    return `tick ${frame.tick} | ghosts ${ghosts} | ${doors}`;
}

export function renderInto(el: HTMLElement, frame: StateFrame): void {
    el.textContent = "";
    for (const row of frameToCells(frame)) {
        for (const cell of row) {
            const span = document.createElement("span");
            span.textContent = cell.ch;
            span.className = `c-${cell.cls}`;
            el.appendChild(span);
        }
        el.appendChild(document.createTextNode("\n"));
    }
}
