"""Serve-mode round trip: a scripted client plays level 1 over the wire and
the written logs replay locally byte for byte."""
import asyncio
import json

import pytest

from replaytest import load_level
from replaytest.executor import TestSpec, run_raw
from replaytest.recorder import (FixtureSource, SessionLog, attach_recorders,
                                 read_raw_log, run_session)
from replaytest.server import serve_session

from walkthroughs import asset, default_filter, spec_doc

websockets = pytest.importorskip("websockets")


async def scripted_client(port: int) -> list[dict]:
    """Completes level 1 by reacting to frames: hold RIGHT until a target
    column, release, clone, repeat. The engine assigns all ticks."""
    frames = []
    async with websockets.connect(f"ws://127.0.0.1:{port}") as ws:
        hello = json.loads(await ws.recv())
        assert hello["kind"] == "hello"
        assert hello["version"] == 1
        assert hello["width"] == 13 and hello["height"] == 3

        async def send(code, edge):
            await ws.send(json.dumps({"kind": "input", "code": code,
                                      "edge": edge}))

        # (target column, then clone?) per life; level 1 walkthrough
        plan = [(3, True), (7, True), (11, False)]
        stage = 0
        holding = False
        try:
            async for raw in ws:
                doc = json.loads(raw)
                if doc.get("kind") != "frame":
                    continue
                frames.append(doc)
                if stage >= len(plan):
                    continue
                avatar = next(a for a in doc["actors"]
                              if a["kind"] == "avatar")
                col, want_clone = plan[stage]
                if avatar["cell"][0] < col and not holding:
                    holding = True
                    await send("RIGHT", "DOWN")
                elif avatar["cell"][0] >= col and holding:
                    holding = False
                    await send("RIGHT", "UP")
                    if want_clone:
                        await send("CLONE", "DOWN")
                    stage += 1
        except websockets.exceptions.ConnectionClosed:
            pass    # server ends the session when the portal is touched
    return frames


def run_serve_round_trip(tmp_path):
    raw_path = str(tmp_path / "wire.rawlog")
    trace_path = str(tmp_path / "wire.trace")
    bound: dict = {}
    ready = asyncio.Event()

    async def run():
        server = asyncio.create_task(serve_session(
            asset("levels/level1.map"), 0, raw_path, trace_path,
            default_filter(), tick_rate=200, seed=0, ready=ready,
            bound=bound))
        await asyncio.wait_for(ready.wait(), 5)
        client = asyncio.create_task(scripted_client(bound["port"]))
        stats = await asyncio.wait_for(server, 30)
        frames = await asyncio.wait_for(client, 5)
        return stats, frames

    return asyncio.run(run()), raw_path, trace_path


def test_serve_round_trip(tmp_path):
    (stats, frames), raw_path, trace_path = run_serve_round_trip(tmp_path)
    assert stats["completed"], stats
    assert frames and frames[0]["tick"] == 0

    # wire determinism: replaying the server-written raw log locally
    # regenerates the identical trace, byte for byte
    world = load_level(asset("levels/level1.map"))
    session = SessionLog(default_filter())
    attach_recorders(world, session)
    run_session(world, FixtureSource(read_raw_log(raw_path), grace=40),
                session)
    from replaytest.recorder import write_trace_record
    regenerated = "".join(write_trace_record(r) + "\n"
                          for r in session.trace_records)
    assert regenerated == open(trace_path).read()

    # live round trip: the recording passes a raw test on the same level
    result = run_raw(TestSpec.from_doc(
        spec_doc("level1", "raw", trace_path, raw_path, max_time=5000)))
    assert result.verdict == "Pass"
    assert result.trace_diff.identical
