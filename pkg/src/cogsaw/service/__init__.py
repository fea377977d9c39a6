"""HTTP and WebSocket front of the round engine.

One process hosts many rounds. Each round owns an asyncio lock; every
operation, sweep, and read runs under it, preserving the total order
the log requires. Clients speak JSON messages over one WebSocket per
player; admin and asset traffic is plain HTTP.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, IO, List, Optional

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, PlainTextResponse
from pydantic import ValidationError

from ..config import Settings
from ..model import CandidateSolution, LabeledEdge, PuzzleSpec, validate_candidate
from ..pieces import PieceManifest, build_round_assets
from ..rounds import (InvalidOperation, Round, RoundParams, RoundUnsolved,
                      compute_metrics)
from .schemas import (CLIENT_MESSAGES, AcceptHintMsg, ConnectMsg,
                      CreateRoundRequest, CreateRoundResponse, DisconnectMsg,
                      EdgeModel, JoinMsg, MetricsResponse,
                      RoundStatusResponse, SweepResponse)

SWEEP_INTERVAL = 1.0


@dataclass
class RoundRuntime:
    """A live round plus everything the host needs to serve it."""

    round: Round
    manifest: PieceManifest
    assets_dir: Path
    log_file: Optional[IO[str]]
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    connections: Dict[str, WebSocket] = field(default_factory=dict)


def _edge_json(e: LabeledEdge) -> dict:
    return {"label": e.label.value, "first": e.first, "second": e.second}


def _feedback_payload(rec) -> dict:
    return {"type": "feedback", "mode": rec.mode, "policy": rec.policy,
            "edges": [_edge_json(e) for e in rec.edges],
            "version": rec.version}


def _solved_payload(rnd: Round) -> dict:
    return {"type": "solved", "winner": rnd.winner,
            "cp": rnd.solved_at - rnd.start}


def create_app(settings: Optional[Settings] = None) -> FastAPI:
    settings = settings or Settings()
    data_dir = Path(settings.data_dir)
    rounds: Dict[str, RoundRuntime] = {}

    @contextlib.asynccontextmanager
    async def lifespan(_: FastAPI):
        sweeper = asyncio.create_task(_sweep_loop())
        try:
            yield
        finally:
            sweeper.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await sweeper
            for rt in rounds.values():
                if rt.log_file is not None:
                    rt.log_file.close()

    app = FastAPI(title="cogsaw", lifespan=lifespan)
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    async def _sweep_loop() -> None:
        while True:
            await asyncio.sleep(SWEEP_INTERVAL)
            for rt in list(rounds.values()):
                if not rt.round.solved:
                    await _sweep_round(rt)

    async def _sweep_round(rt: RoundRuntime) -> int:
        """Run one stagnation pass and dispatch what it produced."""
        async with rt.lock:
            results = rt.round.sweep_stagnation(time.time())
            dispatched = 0
            solved = rt.round.solved
            for result in results:
                for rec in result.recommendations:
                    ws = rt.connections.get(rec.target)
                    if ws is not None:
                        await _send(ws, _feedback_payload(rec))
                    dispatched += 1
            if solved:
                await _broadcast(rt, _solved_payload(rt.round))
        return dispatched

    def _runtime(round_id: str) -> RoundRuntime:
        rt = rounds.get(round_id)
        if rt is None:
            raise HTTPException(404, "unknown round")
        return rt

    # -- admin endpoints ----------------------------------------------------

    @app.post("/rounds", response_model=CreateRoundResponse)
    async def create_round(req: CreateRoundRequest) -> CreateRoundResponse:
        round_id = req.round_id or uuid.uuid4().hex[:12]
        if round_id in rounds:
            raise HTTPException(409, "round id already exists")
        seed = req.seed if req.seed is not None else round_id
        spec: Optional[PuzzleSpec] = None
        if req.grid is not None:
            rows = len(req.grid)
            cols = len(req.grid[0]) if rows else 0
            candidate = CandidateSolution(
                tuple(tuple(int(p) for p in row) for row in req.grid))
            if not validate_candidate(candidate, rows, cols):
                raise HTTPException(422, "grid is not a valid layout")
            spec = PuzzleSpec(rows, cols, candidate)
        else:
            rows, cols = req.rows, req.cols
        params = RoundParams(
            phi=req.phi if req.phi is not None else settings.phi,
            epsilon=(req.epsilon if req.epsilon is not None
                     else settings.epsilon),
            stagnation_period=(req.stagnation_period
                               if req.stagnation_period is not None
                               else settings.stagnation_period),
            group_size=(req.group_size if req.group_size is not None
                        else settings.group_size),
            seed=seed)
        assets_dir = data_dir / round_id
        spec, manifest = build_round_assets(
            None, rows, cols, seed, assets_dir, round_id,
            erase_px=settings.erase_px, spec=spec)
        log_file = open(assets_dir / "round.jsonl", "w", encoding="utf-8")
        rnd = Round(spec, params, round_id=round_id, log_stream=log_file)
        rounds[round_id] = RoundRuntime(rnd, manifest, assets_dir, log_file)
        return CreateRoundResponse(
            round_id=round_id, rows=rows, cols=cols,
            piece_count=spec.piece_count, edge_total=spec.edge_total,
            group_size=params.group_size,
            manifest_url=f"/rounds/{round_id}/manifest",
            ws_url="/ws")

    @app.get("/rounds/{round_id}", response_model=RoundStatusResponse)
    async def round_status(round_id: str) -> RoundStatusResponse:
        rt = _runtime(round_id)
        async with rt.lock:
            status = rt.round.status()
        status["group_size"] = rt.round.params.group_size
        return RoundStatusResponse(**status)

    @app.get("/rounds/{round_id}/metrics", response_model=MetricsResponse)
    async def round_metrics(round_id: str) -> MetricsResponse:
        rt = _runtime(round_id)
        async with rt.lock:
            try:
                metrics = compute_metrics(rt.round.header, rt.round.entries)
            except RoundUnsolved as err:
                raise HTTPException(409, "round not solved yet") from err
        return MetricsResponse(**metrics.to_json())

    @app.get("/rounds/{round_id}/log")
    async def round_log(round_id: str) -> PlainTextResponse:
        rt = _runtime(round_id)
        async with rt.lock:
            lines = [json.dumps(rt.round.header.to_json())]
            lines += [json.dumps(e.to_json()) for e in rt.round.entries]
        return PlainTextResponse("\n".join(lines) + "\n",
                                 media_type="application/x-ndjson")

    @app.get("/rounds/{round_id}/cog")
    async def round_cog(round_id: str) -> PlainTextResponse:
        rt = _runtime(round_id)
        async with rt.lock:
            text = rt.round.export_opinions()
        return PlainTextResponse(text)

    @app.get("/rounds/{round_id}/manifest")
    async def round_manifest(round_id: str) -> dict:
        return _runtime(round_id).manifest.to_json()

    @app.get("/rounds/{round_id}/pieces/{asset}")
    async def round_piece(round_id: str, asset: str) -> FileResponse:
        rt = _runtime(round_id)
        known = {p["asset"] for p in rt.manifest.pieces}
        if asset not in known:
            raise HTTPException(404, "unknown asset")
        return FileResponse(rt.assets_dir / asset, media_type="image/png")

    @app.post("/rounds/{round_id}/sweep", response_model=SweepResponse)
    async def force_sweep(round_id: str) -> SweepResponse:
        """Run the stagnation pass now instead of waiting for the timer."""
        rt = _runtime(round_id)
        dispatched = await _sweep_round(rt)
        return SweepResponse(dispatched=dispatched, solved=rt.round.solved)

    # -- player websocket ---------------------------------------------------

    async def _send(ws: WebSocket, payload: dict) -> None:
        with contextlib.suppress(Exception):  # dead sockets drop silently
            await ws.send_json(payload)

    async def _broadcast(rt: RoundRuntime, payload: dict) -> None:
        for ws in list(rt.connections.values()):
            await _send(ws, payload)

    async def _dispatch_result(rt: RoundRuntime, ws: WebSocket,
                               result) -> None:
        await _send(ws, {"type": "ack", "seq": result.entries[0].seq,
                         "op": result.entries[0].op})
        for rec in result.recommendations:
            target = rt.connections.get(rec.target)
            if target is not None:
                await _send(target, _feedback_payload(rec))
        if result.solved:
            await _broadcast(rt, _solved_payload(rt.round))

    def _check_pieces(rt: RoundRuntime, *pieces: int) -> Optional[str]:
        count = rt.round.spec.piece_count
        for p in pieces:
            if not 0 <= p < count:
                return "unknown_piece"
        return None

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket) -> None:
        await ws.accept()
        rt: Optional[RoundRuntime] = None
        token: Optional[str] = None
        try:
            while True:
                try:
                    raw = await ws.receive_json()
                except json.JSONDecodeError:
                    await _send(ws, {"type": "reject", "reason": "bad_json"})
                    continue
                model = CLIENT_MESSAGES.get(
                    raw.get("type") if isinstance(raw, dict) else None)
                if model is None:
                    await _send(ws, {"type": "reject",
                                     "reason": "unknown_message"})
                    continue
                try:
                    msg = model.model_validate(raw)
                except ValidationError:
                    await _send(ws, {"type": "reject",
                                     "reason": "bad_message"})
                    continue
                if isinstance(msg, JoinMsg):
                    if rt is not None:
                        await _send(ws, {"type": "reject",
                                         "reason": "already_joined"})
                        continue
                    candidate = rounds.get(msg.round_id)
                    if candidate is None:
                        await _send(ws, {"type": "reject",
                                         "reason": "unknown_round"})
                        continue
                    async with candidate.lock:
                        if msg.token in candidate.connections:
                            await _send(ws, {"type": "reject",
                                             "reason": "token_in_use"})
                            continue
                        try:
                            result = candidate.round.join(msg.token)
                        except InvalidOperation as err:
                            await _send(ws, {"type": "reject",
                                             "reason": err.reason})
                            continue
                        rt, token = candidate, msg.token
                        rt.connections[token] = ws
                        await _send(ws, {
                            "type": "welcome",
                            "round_id": rt.round.round_id,
                            "player": token,
                            "seq": result.entries[0].seq,
                            "manifest": rt.manifest.to_json(),
                        })
                        if result.solved:  # joined an already-finished round
                            await _send(ws, _solved_payload(rt.round))
                    continue
                if rt is None or token is None:
                    await _send(ws, {"type": "reject",
                                     "reason": "join_first"})
                    continue
                if msg.type == "heartbeat":
                    await _send(ws, {"type": "ack", "seq": rt.round.seq,
                                     "op": "heartbeat"})
                    continue
                async with rt.lock:
                    try:
                        if isinstance(msg, ConnectMsg):
                            bad = _check_pieces(rt, msg.edge.first,
                                                msg.edge.second)
                            if bad:
                                raise InvalidOperation(bad)
                            result = rt.round.connect_edge(
                                token, msg.edge.to_edge())
                        elif isinstance(msg, DisconnectMsg):
                            bad = _check_pieces(rt, msg.piece)
                            if bad:
                                raise InvalidOperation(bad)
                            result = rt.round.disconnect_piece(
                                token, msg.piece)
                        elif isinstance(msg, AcceptHintMsg):
                            edges = [e.to_edge() for e in msg.edges]
                            bad = _check_pieces(
                                rt, *[p for e in edges
                                      for p in (e.first, e.second)])
                            if bad:
                                raise InvalidOperation(bad)
                            result = rt.round.accept_hint(token, edges)
                        else:
                            raise InvalidOperation("unknown_message")
                    except InvalidOperation as err:
                        await _send(ws, {"type": "reject",
                                         "reason": err.reason})
                        continue
                    await _dispatch_result(rt, ws, result)
        except WebSocketDisconnect:
            pass
        finally:
            if rt is not None and token is not None:
                async with rt.lock:
                    if rt.connections.get(token) is ws:
                        del rt.connections[token]
                        with contextlib.suppress(InvalidOperation):
                            rt.round.leave(token)

    return app


def main() -> None:  # manual entry point: python -m cogsaw.service
    import uvicorn

    settings = Settings()
    uvicorn.run(create_app(settings), host=settings.host,
                port=settings.port)


if __name__ == "__main__":
    main()
