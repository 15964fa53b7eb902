// Browser entry point: connect form, live grid, recording indicator.

import { GameSession } from "./client.js";
import { KeyboardInput } from "./keys.js";
import { renderInto, statusLine } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) {
        throw new Error(`missing #${id}`);
    }
    return node as T;
}

function start(): void {
    const grid = el<HTMLPreElement>("grid");
    const status = el<HTMLElement>("status");
    const banner = el<HTMLElement>("banner");
    const recording = el<HTMLElement>("recording");
    const connectBtn = el<HTMLButtonElement>("connect");
    const urlInput = el<HTMLInputElement>("url");

    let session: GameSession | null = null;
    let detach: (() => void) | null = null;

    connectBtn.addEventListener("click", () => {
        if (session && !session.isClosed) {
            session.bye();
        }
        banner.textContent = "";
        const keys = new KeyboardInput((code, edge) => {
            session?.sendInput(code, edge);
        });
        session = new GameSession(
            urlInput.value,
            {
                onHello(hello) {
                    status.textContent =
                        `connected: ${hello.width}x${hello.height} grid`;
                },
                onFrame(frame) {
                    renderInto(grid, frame);
                    status.textContent = statusLine(frame);
                    recording.style.display = frame.recording ? "" : "none";
                },
                onError(reason) {
                    banner.textContent = reason;
                },
                onClose() {
                    keys.releaseAll();
                    detach?.();
                    banner.textContent = banner.textContent || "session ended";
                    recording.style.display = "none";
                },
            },
            (url) => new WebSocket(url),
        );
        detach = keys.attach(window);
    });
}

window.addEventListener("DOMContentLoaded", start);
