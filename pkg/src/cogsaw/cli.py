"""Command-line front door.

Verbs: serve (host the round service), slice (cut a picture into a
round's assets), simulate (one agent-driven round), grid (experiment
sweep), fit (regression over sweep output), replay (re-run a log), and
rounds (thin HTTP client for a running server).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from .agents import AgentPolicy, SimulationStalled, run_agent_round
from .config import Settings, load_settings
from .experiments import (DegenerateData, ExperimentGrid, fit_models,
                          fit_report, read_fit_table, run_grid,
                          write_cells_csv, write_progress_csv, write_runs_csv)
from .pieces import ImageTooSmall, build_round_assets
from .rounds import (CorruptLog, RoundUnsolved, compute_metrics, load_round,
                     replay)

EXIT_CORRUPT_LOG = 3
EXIT_UNSOLVED = 4
EXIT_DEGENERATE = 5
EXIT_STALLED = 6
EXIT_BAD_INPUT = 7


def _settings(args) -> Settings:
    settings = load_settings(getattr(args, "config", None))
    overrides = {}
    for name in ("phi", "epsilon", "stagnation_period", "group_size",
                 "host", "port", "data_dir", "erase_px"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if not overrides:
        return settings
    from dataclasses import asdict
    merged = asdict(settings)
    merged.update(overrides)
    return Settings(**merged)


def _add_round_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--phi", type=float, help="confidence threshold")
    p.add_argument("--epsilon", type=float, help="prefix gap tolerance")
    p.add_argument("--stagnation-period", dest="stagnation_period",
                   type=float, help="seconds of quiet before a nudge")


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    settings = _settings(args)
    uvicorn.run(create_app(settings), host=settings.host,
                port=settings.port)
    return 0


def cmd_slice(args) -> int:
    from PIL import Image

    image = Image.open(args.image) if args.image else None
    out_dir = Path(args.out)
    spec, manifest = build_round_assets(
        image, args.rows, args.cols, args.seed, out_dir, args.round_id,
        erase_px=args.erase_px)
    print(json.dumps({"round_id": args.round_id,
                      "manifest": str(out_dir / "manifest.json"),
                      "pieces": spec.piece_count,
                      "edge_total": spec.edge_total}))
    return 0


def cmd_simulate(args) -> int:
    settings = _settings(args)
    policy = AgentPolicy(accuracy=args.accuracy, seed=args.seed,
                         accept_hints=not args.ignore_hints)
    stream = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        result = run_agent_round(
            args.rows, args.cols, args.group_size, policy,
            phi=settings.phi, epsilon=settings.epsilon,
            stagnation_period=settings.stagnation_period,
            round_id=args.round_id, log_stream=stream,
            budget=args.budget)
    finally:
        if stream:
            stream.close()
    print(json.dumps(result.metrics.to_json(), indent=2))
    return 0


def cmd_grid(args) -> int:
    grid = ExperimentGrid.load(args.grid_config)
    records, cells = run_grid(grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_runs_csv(records, out / "runs.csv")
    write_cells_csv(cells, out / "cells.csv")
    write_progress_csv(records, out / "progress.csv")
    summary = {
        "cells": [{"rows": c.rows, "cols": c.cols, "ps": c.ps,
                   "gs": c.group_size, "runs": c.runs,
                   "failures": c.failures, "mean_cp": c.mean_cp,
                   "mean_fr": c.mean_fr, "mean_fp": c.mean_fp}
                  for c in cells],
        "failures": sum(c.failures for c in cells),
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    print(json.dumps({"out": str(out), "runs": len(records),
                      "cells": len(cells),
                      "failures": summary["failures"]}))
    return 0


def cmd_fit(args) -> int:
    rows = read_fit_table(args.table)
    fits = fit_models(rows)
    sys.stdout.write(fit_report(fits))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({form: fit.to_json() for form, fit in fits.items()},
                      fh, indent=2)
    return 0


def cmd_replay(args) -> int:
    header, entries = load_round(args.log)
    rnd, samples = replay(header, entries)
    if args.cog_out:
        with open(args.cog_out, "w", encoding="utf-8") as fh:
            fh.write(rnd.export_opinions())
    out = {"round_id": header.round_id, "entries": len(entries),
           "solved": rnd.solved, "winner": rnd.winner}
    if rnd.solved:
        out["metrics"] = compute_metrics(header, entries).to_json()
    print(json.dumps(out, indent=2))
    return 0


def cmd_rounds(args) -> int:
    import httpx

    base = args.server.rstrip("/")
    with httpx.Client(base_url=base, timeout=30.0) as client:
        if args.round_cmd == "create":
            body = {}
            if args.grid:
                body["grid"] = json.loads(args.grid)
            else:
                body["rows"], body["cols"] = args.rows, args.cols
            for key in ("group_size", "phi", "epsilon", "stagnation_period",
                        "seed", "round_id"):
                value = getattr(args, key, None)
                if value is not None:
                    body[key] = value
            resp = client.post("/rounds", json=body)
        elif args.round_cmd == "status":
            resp = client.get(f"/rounds/{args.round_id}")
        elif args.round_cmd == "metrics":
            resp = client.get(f"/rounds/{args.round_id}/metrics")
        elif args.round_cmd == "log":
            resp = client.get(f"/rounds/{args.round_id}/log")
        elif args.round_cmd == "cog":
            resp = client.get(f"/rounds/{args.round_id}/cog")
        else:
            resp = client.post(f"/rounds/{args.round_id}/sweep")
        if resp.status_code >= 400:
            print(f"{resp.status_code}: {resp.text}", file=sys.stderr)
            return EXIT_BAD_INPUT
        text = resp.text
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cogsaw",
        description="collaborative jigsaw rounds, simulation, and analysis")
    parser.add_argument("--config", help="JSON settings file")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("serve", help="run the round service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--data-dir", dest="data_dir")
    _add_round_params(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("slice", help="cut an image into round assets")
    p.add_argument("--image", help="source picture; generated if omitted")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--erase-px", dest="erase_px", type=int, default=2)
    p.add_argument("--out", required=True)
    p.add_argument("--round-id", dest="round_id", default="round")
    p.add_argument("--seed", default="0")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("simulate", help="run one agent-driven round")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--group-size", dest="group_size", type=int, default=1)
    p.add_argument("--accuracy", type=float, default=0.8)
    p.add_argument("--seed", default="0")
    p.add_argument("--round-id", dest="round_id", default="sim")
    p.add_argument("--log", help="write the round log here")
    p.add_argument("--budget", type=int, help="max log entries before abort")
    p.add_argument("--ignore-hints", action="store_true")
    _add_round_params(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("grid", help="run an experiment sweep")
    p.add_argument("grid_config", help="sweep config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("fit", help="fit cp = f(ps, gs) model forms")
    p.add_argument("table", help="runs.csv or cells.csv from a sweep")
    p.add_argument("--out", help="write fits as JSON here")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("replay", help="re-run a round log")
    p.add_argument("log", help="round log (line-delimited JSON)")
    p.add_argument("--cog-out", dest="cog_out",
                   help="write the final opinion-graph export here")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("rounds", help="talk to a running server")
    p.add_argument("--server", default="http://127.0.0.1:8750")
    rsub = p.add_subparsers(dest="round_cmd", required=True)
    c = rsub.add_parser("create")
    c.add_argument("--rows", type=int)
    c.add_argument("--cols", type=int)
    c.add_argument("--grid", help="explicit layout as JSON rows")
    c.add_argument("--group-size", dest="group_size", type=int)
    c.add_argument("--seed")
    c.add_argument("--round-id", dest="round_id")
    _add_round_params(c)
    for name in ("status", "metrics", "log", "cog", "sweep"):
        rc = rsub.add_parser(name)
        rc.add_argument("round_id")
    p.set_defaults(func=cmd_rounds)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CorruptLog as err:
        print(f"corrupt log: {err}", file=sys.stderr)
        return EXIT_CORRUPT_LOG
    except RoundUnsolved as err:
        print(f"round unsolved: {err}", file=sys.stderr)
        return EXIT_UNSOLVED
    except DegenerateData as err:
        print(f"degenerate data: {err}", file=sys.stderr)
        return EXIT_DEGENERATE
    except SimulationStalled as err:
        print(f"simulation stalled: {err}", file=sys.stderr)
        return EXIT_STALLED
    except (FileNotFoundError, ImageTooSmall, ValueError,
            json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
