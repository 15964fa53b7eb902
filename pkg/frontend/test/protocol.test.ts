import { describe, expect, it } from "vitest";

import {
    ProtocolVersionMismatch,
    parseServerMessage,
    serializeBye,
    serializeInput,
} from "../src/protocol.js";

const FRAME = JSON.stringify({
    kind: "frame",
    tick: 0,
    session_tick: 0,
    grid: ["###", "#P#", "###"],
    actors: [{ name: "Player", kind: "avatar", cell: [1, 1], alive: true }],
    doors: [],
    switches: [],
    recording: true,
});

describe("parseServerMessage", () => {
    it("accepts a matching hello", () => {
        const msg = parseServerMessage(
            '{"kind": "hello", "version": 1, "width": 13, "height": 3}');
        expect(msg.kind).toBe("hello");
        if (msg.kind === "hello") {
            expect(msg.width).toBe(13);
        }
    });

    it("rejects a version mismatch", () => {
        expect(() =>
            parseServerMessage('{"kind": "hello", "version": 2, "width": 1, "height": 1}'),
        ).toThrow(ProtocolVersionMismatch);
    });

    it("parses frames", () => {
        const msg = parseServerMessage(FRAME);
        expect(msg.kind).toBe("frame");
        if (msg.kind === "frame") {
            expect(msg.grid).toHaveLength(3);
            expect(msg.actors[0].kind).toBe("avatar");
        }
    });

    it("rejects unknown kinds", () => {
        expect(() => parseServerMessage('{"kind": "banana"}')).toThrow();
    });

    it("rejects malformed frames", () => {
        expect(() =>
            parseServerMessage('{"kind": "frame", "grid": 7}'),
        ).toThrow();
    });
});

describe("client message serialization", () => {
    it("input documents match the engine schema", () => {
        expect(JSON.parse(serializeInput("RIGHT", "DOWN"))).toEqual({
            kind: "input",
            code: "RIGHT",
            edge: "DOWN",
        });
    });

    it("bye", () => {
        expect(JSON.parse(serializeBye())).toEqual({ kind: "bye" });
    });
});
