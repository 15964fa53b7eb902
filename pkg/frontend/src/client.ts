// Session wrapper around a WebSocket connection to the engine. The socket
// implementation is injected so node tests (the "ws" package) and the
// browser share the exact same code path.

import {
    Edge,
    Hello,
    InputCode,
    ProtocolVersionMismatch,
    StateFrame,
    parseServerMessage,
    serializeBye,
    serializeInput,
} from "./protocol.js";

export interface SocketLike {
    send(data: string): void;
    close(): void;
    addEventListener(type: "open" | "close", cb: () => void): void;
    addEventListener(type: "message", cb: (ev: { data: unknown }) => void): void;
    addEventListener(type: "error", cb: (ev: unknown) => void): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface SessionHandlers {
    onHello?(hello: Hello): void;
    onFrame?(frame: StateFrame): void;
    onAck?(code: InputCode, tick: number): void;
    onError?(reason: string): void;
    onClose?(): void;
}

export class SessionClosed extends Error {
    constructor() {
        super("session is closed");
    }
}

export class GameSession {
    private socket: SocketLike;
    private open = false;
    private closed = false;
    hello: Hello | null = null;
    lastFrame: StateFrame | null = null;

    constructor(url: string, private handlers: SessionHandlers,
                factory: SocketFactory) {
        this.socket = factory(url);
        this.socket.addEventListener("open", () => {
            this.open = true;
        });
        this.socket.addEventListener("close", () => {
            this.closed = true;
            this.handlers.onClose?.();
        });
        this.socket.addEventListener("error", () => {
            if (!this.open) {
                this.handlers.onError?.("connection refused");
            }
            this.closed = true;
        });
        this.socket.addEventListener("message", (ev) => {
            this.dispatch(String(ev.data));
        });
    }

    private dispatch(raw: string): void {
        let msg;
        try {
            msg = parseServerMessage(raw);
        } catch (err) {
            if (err instanceof ProtocolVersionMismatch) {
                this.handlers.onError?.(err.message);
                this.socket.close();
                return;
            }
            this.handlers.onError?.(`bad message: ${err}`);
            return;
        }
        switch (msg.kind) {
            case "hello":
                this.hello = msg;
                this.handlers.onHello?.(msg);
                break;
            case "frame":
                this.lastFrame = msg;
                this.handlers.onFrame?.(msg);
                break;
            case "ack":
                this.handlers.onAck?.(msg.code, msg.tick);
                break;
            case "error":
                this.handlers.onError?.(msg.reason);
                break;
        }
    }

    // Edges go out in call order; the engine assigns the authoritative tick.
    sendInput(code: InputCode, edge: Edge): void {
        if (this.closed) {
            throw new SessionClosed();
        }
        this.socket.send(serializeInput(code, edge));
    }

    bye(): void {
        if (!this.closed) {
            this.socket.send(serializeBye());
            this.socket.close();
        }
    }

    get isClosed(): boolean {
        return this.closed;
    }
}
