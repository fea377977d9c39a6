"""Experiment sweeps over puzzle size and group size, plus curve fitting.

run_grid drives simulated rounds for every (puzzle size, group size) cell
and aggregates completion time, feedback ratio, and feedback precision.
fit_models fits the three candidate forms for cp = f(ps, gs) by ordinary
least squares on log cp, with ps the scalar side length max(M, N).
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .agents import AgentPolicy, AgentRoundResult, SimulationStalled, run_agent_round

FORM_INVERSE_GS = "inverse_gs"
FORM_SHIFTED_INVERSE_GS = "shifted_inverse_gs"
FORM_EXP_GS = "exp_gs"
FORMS = (FORM_INVERSE_GS, FORM_SHIFTED_INVERSE_GS, FORM_EXP_GS)


class DegenerateData(Exception):
    """The table cannot identify the model parameters."""


def parse_size(value) -> Tuple[int, int]:
    """Accept "6x6", [6, 6], or (6, 6) and return (rows, cols)."""
    if isinstance(value, str):
        rows, _, cols = value.lower().partition("x")
        return int(rows), int(cols)
    rows, cols = value
    return int(rows), int(cols)


@dataclass(frozen=True)
class ExperimentGrid:
    """One sweep: every size crossed with every group size, repeated."""

    sizes: Tuple[Tuple[int, int], ...]
    group_sizes: Tuple[int, ...]
    repetitions: int = 5
    policy: AgentPolicy = field(default_factory=AgentPolicy)
    phi: float = 0.618
    epsilon: float = 0.02
    stagnation_period: float = 30.0
    seed: str = "grid"
    workers: int = 1

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.sizes or not self.group_sizes:
            raise ValueError("sizes and group_sizes must be non-empty")

    @classmethod
    def from_json(cls, data: Mapping) -> "ExperimentGrid":
        policy = AgentPolicy(**data.get("policy", {}))
        rnd = data.get("round", {})
        return cls(
            sizes=tuple(parse_size(s) for s in data["ps"]),
            group_sizes=tuple(int(g) for g in data["gs"]),
            repetitions=int(data.get("repetitions", 5)),
            policy=policy,
            phi=float(rnd.get("phi", 0.618)),
            epsilon=float(rnd.get("epsilon", 0.02)),
            stagnation_period=float(rnd.get("stagnation_period", 30.0)),
            seed=str(data.get("seed", "grid")),
            workers=int(data.get("workers", 1)),
        )

    @classmethod
    def load(cls, path) -> "ExperimentGrid":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one simulated round inside a grid sweep."""

    rows: int
    cols: int
    group_size: int
    rep: int
    seed: str
    status: str                      # "ok" or "stalled"
    cp: Optional[float] = None
    fr: Optional[float] = None
    fp: Optional[float] = None
    entries: int = 0
    progress: Tuple[Tuple[int, float], ...] = ()

    @property
    def ps(self) -> int:
        return max(self.rows, self.cols)


@dataclass(frozen=True)
class CellSummary:
    rows: int
    cols: int
    group_size: int
    runs: int
    failures: int
    mean_cp: Optional[float]
    mean_fr: Optional[float]
    mean_fp: Optional[float]         # over runs where fp is defined

    @property
    def ps(self) -> int:
        return max(self.rows, self.cols)


def _run_one(args) -> RunRecord:
    rows, cols, gs, rep, seed, policy, phi, epsilon, period = args
    try:
        result: AgentRoundResult = run_agent_round(
            rows, cols, gs, policy, phi=phi, epsilon=epsilon,
            stagnation_period=period, round_id=f"grid-{rows}x{cols}-{gs}-{rep}")
        m = result.metrics
        return RunRecord(rows, cols, gs, rep, seed, "ok",
                         cp=m.completion_seconds, fr=m.feedback_ratio,
                         fp=m.feedback_precision, entries=m.entry_count,
                         progress=m.progress_samples)
    except SimulationStalled:
        return RunRecord(rows, cols, gs, rep, seed, "stalled")


def run_grid(grid: ExperimentGrid) -> Tuple[List[RunRecord], List[CellSummary]]:
    """Run every cell of the grid; deterministic for a fixed grid config."""
    jobs = []
    for rows, cols in grid.sizes:
        for gs in grid.group_sizes:
            for rep in range(grid.repetitions):
                seed = f"{grid.seed}:{rows}x{cols}:gs{gs}:rep{rep}"
                policy = AgentPolicy(
                    accuracy=grid.policy.accuracy,
                    think_mean=grid.policy.think_mean,
                    think_jitter=grid.policy.think_jitter,
                    dwell_mean=grid.policy.dwell_mean,
                    dwell_jitter=grid.policy.dwell_jitter,
                    accept_hints=grid.policy.accept_hints,
                    seed=seed)
                jobs.append((rows, cols, gs, rep, seed, policy,
                             grid.phi, grid.epsilon, grid.stagnation_period))
    if grid.workers > 1:
        with ProcessPoolExecutor(max_workers=grid.workers) as pool:
            records = list(pool.map(_run_one, jobs))
    else:
        records = [_run_one(j) for j in jobs]

    cells: List[CellSummary] = []
    for rows, cols in grid.sizes:
        for gs in grid.group_sizes:
            bucket = [r for r in records
                      if (r.rows, r.cols, r.group_size) == (rows, cols, gs)]
            ok = [r for r in bucket if r.status == "ok"]
            fps = [r.fp for r in ok if r.fp is not None]
            cells.append(CellSummary(
                rows, cols, gs, len(bucket), len(bucket) - len(ok),
                mean_cp=_mean([r.cp for r in ok]),
                mean_fr=_mean([r.fr for r in ok]),
                mean_fp=_mean(fps)))
    return records, cells


def _mean(values: Sequence[Optional[float]]) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6f}"


def write_runs_csv(records: Sequence[RunRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rows", "cols", "ps", "gs", "rep", "seed", "status",
                    "cp", "fr", "fp", "entries"])
        for r in records:
            w.writerow([r.rows, r.cols, r.ps, r.group_size, r.rep, r.seed,
                        r.status, _fmt(r.cp), _fmt(r.fr), _fmt(r.fp),
                        r.entries])


def write_cells_csv(cells: Sequence[CellSummary], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rows", "cols", "ps", "gs", "runs", "failures",
                    "mean_cp", "mean_fr", "mean_fp"])
        for c in cells:
            w.writerow([c.rows, c.cols, c.ps, c.group_size, c.runs,
                        c.failures, _fmt(c.mean_cp), _fmt(c.mean_fr),
                        _fmt(c.mean_fp)])


def write_progress_csv(records: Sequence[RunRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rows", "cols", "ps", "gs", "rep", "seq", "progress"])
        for r in records:
            for seq, value in r.progress:
                w.writerow([r.rows, r.cols, r.ps, r.group_size, r.rep,
                            seq, f"{value:.6f}"])


@dataclass(frozen=True)
class FitResult:
    """Fitted parameters of one cp = f(ps, gs) form and its r² on log cp."""

    form: str
    mu: float
    upsilon: float
    omega: Optional[float]
    r2: float

    def predict(self, ps: float, gs: float) -> float:
        base = self.mu * math.exp(self.upsilon * ps)
        if self.form == FORM_INVERSE_GS:
            return base / gs
        if self.form == FORM_SHIFTED_INVERSE_GS:
            return base / (gs + self.omega)
        if self.form == FORM_EXP_GS:
            return base * math.exp(-self.omega * gs)
        raise ValueError(f"unknown form {self.form!r}")

    def formula(self) -> str:
        if self.form == FORM_INVERSE_GS:
            return f"cp = {self.mu:.4f} * exp({self.upsilon:.4f}*ps) / gs"
        if self.form == FORM_SHIFTED_INVERSE_GS:
            return (f"cp = {self.mu:.4f} * exp({self.upsilon:.4f}*ps)"
                    f" / (gs + {self.omega:.4f})")
        return (f"cp = {self.mu:.4f} * exp({self.upsilon:.4f}*ps)"
                f" * exp(-{self.omega:.4f}*gs)")

    def to_json(self) -> Dict:
        return {"form": self.form, "mu": self.mu, "upsilon": self.upsilon,
                "omega": self.omega, "r2": self.r2,
                "formula": self.formula()}


def _check_table(rows: Sequence[Tuple[float, float, float]]) -> Tuple[
        np.ndarray, np.ndarray, np.ndarray]:
    if len(rows) < 4:
        raise DegenerateData("need at least 4 rows")
    ps = np.array([r[0] for r in rows], dtype=float)
    gs = np.array([r[1] for r in rows], dtype=float)
    cp = np.array([r[2] for r in rows], dtype=float)
    if np.any(cp <= 0):
        raise DegenerateData("cp values must be positive")
    if np.all(ps == ps[0]) or np.all(gs == gs[0]):
        raise DegenerateData("ps and gs must each take at least two values")
    return ps, gs, cp


def _ols(design: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, float]:
    beta, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ beta
    return beta, float(resid @ resid)


def _r2(ss_res: float, log_cp: np.ndarray) -> float:
    centered = log_cp - log_cp.mean()
    ss_tot = float(centered @ centered)
    if ss_tot == 0.0:
        return 1.0 if ss_res <= 1e-12 else float("-inf")
    return 1.0 - ss_res / ss_tot

# scanning upper bound for the gs shift; paper-scale data sits near 3.4
_OMEGA_GRID = np.linspace(0.0, 50.0, 501)


def fit_models(rows: Sequence[Tuple[float, float, float]]
               ) -> Dict[str, FitResult]:
    """Fit all three candidate forms to (ps, gs, cp) rows.

    Forms 1 and 3 are log-linear and solved directly; form 2 scans the
    gs shift on a grid and refines the best point by golden-section.
    """
    ps, gs, cp = _check_table(rows)
    log_cp = np.log(cp)
    ones = np.ones_like(ps)
    fits: Dict[str, FitResult] = {}

    # form 1: log cp + log gs = log mu + upsilon*ps
    beta, ss = _ols(np.column_stack([ones, ps]), log_cp + np.log(gs))
    fits[FORM_INVERSE_GS] = FitResult(
        FORM_INVERSE_GS, math.exp(beta[0]), float(beta[1]), None,
        _r2(ss, log_cp))

    # form 3: log cp = log mu + upsilon*ps - omega*gs
    beta, ss = _ols(np.column_stack([ones, ps, gs]), log_cp)
    fits[FORM_EXP_GS] = FitResult(
        FORM_EXP_GS, math.exp(beta[0]), float(beta[1]), float(-beta[2]),
        _r2(ss, log_cp))

    # form 2: log cp + log(gs + omega) = log mu + upsilon*ps, omega scanned
    design = np.column_stack([ones, ps])

    def residual(omega: float) -> float:
        if np.any(gs + omega <= 0):
            return float("inf")
        _, ss = _ols(design, log_cp + np.log(gs + omega))
        return ss

    losses = [residual(w) for w in _OMEGA_GRID]
    best = int(np.argmin(losses))
    omega = float(_OMEGA_GRID[best])
    if 0 < best < len(_OMEGA_GRID) - 1:
        lo, mid, hi = (_OMEGA_GRID[best - 1], _OMEGA_GRID[best],
                       _OMEGA_GRID[best + 1])
        if residual(mid) < min(residual(lo), residual(hi)):
            refined = minimize_scalar(residual, bracket=(lo, mid, hi),
                                      method="golden",
                                      options={"xtol": 1e-10})
            if refined.fun <= residual(omega):
                omega = float(refined.x)
    beta, ss = _ols(design, log_cp + np.log(gs + omega))
    fits[FORM_SHIFTED_INVERSE_GS] = FitResult(
        FORM_SHIFTED_INVERSE_GS, math.exp(beta[0]), float(beta[1]), omega,
        _r2(ss, log_cp))
    return fits


def form_values(form: str, mu: float, upsilon: float, omega: Optional[float],
                sizes: Sequence[int], group_sizes: Sequence[int]
                ) -> List[Tuple[float, float, float]]:
    """Noise-free (ps, gs, cp) rows generated exactly from one form."""
    probe = FitResult(form, mu, upsilon, omega, 1.0)
    return [(float(ps), float(gs), probe.predict(ps, gs))
            for ps in sizes for gs in group_sizes]


def fit_report(fits: Mapping[str, FitResult]) -> str:
    lines = []
    for form in FORMS:
        fit = fits[form]
        lines.append(f"{form:20s} {fit.formula():58s} r2={fit.r2:.6f}")
    return "\n".join(lines) + "\n"


def read_fit_table(path) -> List[Tuple[float, float, float]]:
    """Read (ps, gs, cp) rows from a runs or cells CSV."""
    rows: List[Tuple[float, float, float]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for record in csv.DictReader(fh):
            cp = record.get("cp") or record.get("mean_cp")
            if not cp:
                continue
            rows.append((float(record["ps"]), float(record["gs"]),
                         float(cp)))
    return rows
