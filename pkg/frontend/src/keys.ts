// Keyboard capture: turns keydown/keyup into engine input edges. The
// browser auto-repeats keydown while a key is held, but the engine wants
// exactly one DOWN edge per physical press (it auto-repeats movement
// itself), so repeats are suppressed via the held set.

import { Edge, InputCode } from "./protocol.js";

const KEYMAP: Record<string, InputCode> = {
    ArrowUp: "UP",
    ArrowDown: "DOWN",
    ArrowLeft: "LEFT",
    ArrowRight: "RIGHT",
    w: "UP",
    s: "DOWN",
    a: "LEFT",
    d: "RIGHT",
    c: "CLONE",
};

export type EdgeSink = (code: InputCode, edge: Edge) => void;

export class KeyboardInput {
    private held = new Set<InputCode>();

    constructor(private sink: EdgeSink) {}

    handleKeyDown(key: string, repeat = false): boolean {
        const code = KEYMAP[key];
        if (!code || repeat || this.held.has(code)) {
            return false;
        }
        this.held.add(code);
        this.sink(code, "DOWN");
        return true;
    }

    handleKeyUp(key: string): boolean {
        const code = KEYMAP[key];
        if (!code || !this.held.has(code)) {
            return false;
        }
        this.held.delete(code);
        this.sink(code, "UP");
        return true;
    }

    releaseAll(): void {
        for (const code of [...this.held]) {
            this.held.delete(code);
            this.sink(code, "UP");
        }
    }

    attach(target: EventTarget): () => void {
        const down = (ev: Event) => {
            const e = ev as KeyboardEvent;
            if (this.handleKeyDown(e.key, e.repeat)) {
                e.preventDefault();
            }
        };
        const up = (ev: Event) => {
            const e = ev as KeyboardEvent;
            if (this.handleKeyUp(e.key)) {
                e.preventDefault();
            }
        };
        target.addEventListener("keydown", down);
        target.addEventListener("keyup", up);
        return () => {
            target.removeEventListener("keydown", down);
            target.removeEventListener("keyup", up);
        };
    }
}
