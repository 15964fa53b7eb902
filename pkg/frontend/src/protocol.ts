// Wire protocol with the engine's serve mode: JSON documents over a
// WebSocket. The engine is authoritative for all game state and assigns
// every input its tick; the client only captures edges and draws frames.

export const PROTOCOL_VERSION = 1;

export type InputCode = "UP" | "DOWN" | "LEFT" | "RIGHT" | "CLONE" | "WAIT";
export type Edge = "DOWN" | "UP";

export interface ActorState {
    name: string;
    kind: "avatar" | "ghost" | "npc";
    cell: [number, number];
    alive: boolean;
}

export interface StateFrame {
    kind: "frame";
    tick: number;
    session_tick: number;
    grid: string[];
    actors: ActorState[];
    doors: { name: string; open: boolean }[];
    switches: { name: string; pressed: boolean }[];
    recording: boolean;
}

export interface Hello {
    kind: "hello";
    version: number;
    width: number;
    height: number;
}

export interface Ack {
    kind: "ack";
    code: InputCode;
    tick: number;
}

export interface ServerError {
    kind: "error";
    reason: string;
}

export type ServerMessage = Hello | StateFrame | Ack | ServerError;

export interface ClientInput {
    kind: "input";
    code: InputCode;
    edge: Edge;
}

export interface Bye {
    kind: "bye";
}

export type ClientMessage = ClientInput | Bye;

export class ProtocolVersionMismatch extends Error {
    constructor(public readonly got: number) {
        super(`engine speaks protocol v${got}, client v${PROTOCOL_VERSION}`);
    }
}

export function parseServerMessage(raw: string): ServerMessage {
    const doc = JSON.parse(raw);
    switch (doc.kind) {
        case "hello":
            if (doc.version !== PROTOCOL_VERSION) {
                throw new ProtocolVersionMismatch(doc.version);
            }
            return doc as Hello;
        case "frame":
            if (!Array.isArray(doc.grid) || !Array.isArray(doc.actors)) {
                throw new Error("malformed frame");
            }
            return doc as StateFrame;
        case "ack":
            return doc as Ack;
        case "error":
            return doc as ServerError;
        default:
            throw new Error(`unknown message kind ${doc.kind}`);
    }
}

export function serializeInput(code: InputCode, edge: Edge): string {
    const msg: ClientInput = { kind: "input", code, edge };
    return JSON.stringify(msg);
}

export function serializeBye(): string {
    const msg: Bye = { kind: "bye" };
    return JSON.stringify(msg);
}
