import { describe, expect, it } from "vitest";

import { StateFrame } from "../src/protocol.js";
import { frameToCells, renderText, statusLine } from "../src/render.js";

function frame(overrides: Partial<StateFrame> = {}): StateFrame {
    return {
        kind: "frame",
        tick: 5,
        session_tick: 5,
        grid: ["#####", "#P/G#", "#####"],
        actors: [
            { name: "Player", kind: "avatar", cell: [1, 1], alive: true },
        ],
        doors: [{ name: "Door1", open: true }],
        switches: [{ name: "Button1", pressed: false }],
        recording: true,
        ...overrides,
    };
}

describe("frameToCells", () => {
    it("draws the avatar over the grid", () => {
        const cells = frameToCells(frame());
        expect(cells[1][1]).toEqual({ ch: "@", cls: "avatar" });
    });

    it("open doors are drawn passable", () => {
        const cells = frameToCells(frame());
        expect(cells[1][2].cls).toBe("door-open");
    });

    it("ghosts are distinct from the avatar", () => {
        const f = frame({
            actors: [
                { name: "Player", kind: "avatar", cell: [1, 1], alive: true },
                { name: "Ghost1", kind: "ghost", cell: [3, 1], alive: true },
                { name: "Ghost2", kind: "ghost", cell: [2, 1], alive: true },
            ],
        });
        const cells = frameToCells(f);
        expect(cells[1][1].cls).toBe("avatar");
        expect(cells[1][3].cls).toBe("ghost");
        expect(cells[1][2].ch).toBe("g");
    });

    it("two ghosts plus the avatar means three rendered actors", () => {
        const f = frame({
            actors: [
                { name: "Player", kind: "avatar", cell: [1, 1], alive: true },
                { name: "Ghost1", kind: "ghost", cell: [2, 1], alive: true },
                { name: "Ghost2", kind: "ghost", cell: [3, 1], alive: true },
            ],
        });
        const text = renderText(f);
        expect([...text].filter((c) => c === "@" || c === "g")).toHaveLength(3);
    });

    it("dead actors disappear", () => {
        const f = frame({
            actors: [
                { name: "Player", kind: "avatar", cell: [1, 1], alive: false },
            ],
        });
        expect(renderText(f)).not.toContain("@");
    });

    it("an avatar is never overdrawn by a ghost", () => {
        const f = frame({
            actors: [
                { name: "Player", kind: "avatar", cell: [1, 1], alive: true },
                { name: "Ghost1", kind: "ghost", cell: [1, 1], alive: true },
            ],
        });
        expect(frameToCells(f)[1][1].cls).toBe("avatar");
    });
});

describe("statusLine", () => {
    it("shows tick, ghost count and door states", () => {
        const line = statusLine(frame());
        expect(line).toContain("tick 5");
        expect(line).toContain("ghosts 0");
        expect(line).toContain("Door1:open");
    });
});
