"""Round lifecycle: the single-writer integrator, its log, and replay.

A round owns one puzzle, a set of player workspaces, the collective
opinion graph, and an append-only log.  Every state change enters
through apply(), lands in the log with a strictly increasing sequence
number, and updates the opinion graph before the next operation is
admitted.  Connecting actions produced by feedback are applied by the
round itself and logged with the feedback flag set, so the log alone
reconstructs the full history: replaying it yields identical player
states, an identical opinion graph, and identical metrics.

Nothing here is thread-safe; the owner must serialize calls per round.
"""

from __future__ import annotations

import dataclasses
import json
import random
import time
from dataclasses import dataclass, field
from typing import Dict, IO, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .feedback import (CONNECTING_ACTION, Recommendation, StagnationConfig,
                       StagnationTracker, responsive_feedback,
                       stimulative_feedback)
from .model import (CandidateSolution, ConnectError, ConnectedComponent,
                    LabeledEdge, PartialSolution, PuzzleSpec, RejectedEdgeSet,
                    connect as model_connect, disconnect as model_disconnect,
                    edge, is_solved)
from .opinion import (CollectiveOpinionGraph, EffectiveSetParams, PlayerTraces,
                      strong_effective_set)

JOIN = "join"
LEAVE = "leave"
CONNECT = "connect"
DISCONNECT = "disconnect"
ACCEPT_HINT = "accept_hint"


class InvalidOperation(Exception):
    """An operation the round refuses; reason is machine-readable."""

    def __init__(self, reason: str, msg: str = "") -> None:
        super().__init__(msg or reason)
        self.reason = reason


class CorruptLog(Exception):
    """A log that cannot have been produced by a round."""


class RoundUnsolved(Exception):
    """Metrics are only defined once somebody solved the puzzle."""


@dataclass(frozen=True)
class RoundParams:
    phi: float = 0.618
    epsilon: float = 0.02
    stagnation_period: float = 30.0
    group_size: int = 4
    seed: str = "0"

    def effective(self) -> EffectiveSetParams:
        return EffectiveSetParams(self.phi, self.epsilon)


@dataclass(frozen=True)
class LogEntry:
    seq: int
    player: str
    t: float
    op: str
    feedback: bool = False
    edge: Optional[LabeledEdge] = None
    piece: Optional[int] = None
    edges: Tuple[LabeledEdge, ...] = ()

    def to_json(self) -> dict:
        out = {"seq": self.seq, "player": self.player, "t": self.t,
               "op": self.op, "feedback": self.feedback}
        if self.edge is not None:
            out["edge"] = _edge_json(self.edge)
        if self.piece is not None:
            out["piece"] = self.piece
        if self.edges:
            out["edges"] = [_edge_json(e) for e in self.edges]
        return out

    @staticmethod
    def from_json(obj: dict) -> "LogEntry":
        try:
            return LogEntry(
                seq=int(obj["seq"]), player=str(obj["player"]),
                t=float(obj["t"]), op=str(obj["op"]),
                feedback=bool(obj.get("feedback", False)),
                edge=_edge_parse(obj["edge"]) if "edge" in obj else None,
                piece=int(obj["piece"]) if "piece" in obj else None,
                edges=tuple(_edge_parse(x) for x in obj.get("edges", ())))
        except (KeyError, TypeError, ValueError) as err:
            raise CorruptLog(f"bad entry {obj!r}: {err}") from err


def _edge_json(e: LabeledEdge) -> dict:
    return {"label": e.label.value, "first": e.first, "second": e.second}


def _edge_parse(obj: dict) -> LabeledEdge:
    return edge(obj["label"], int(obj["first"]), int(obj["second"]))


@dataclass(frozen=True)
class RoundHeader:
    round_id: str
    rows: int
    cols: int
    grid: Tuple[Tuple[int, ...], ...]
    params: RoundParams
    start: float

    def to_json(self) -> dict:
        return {"header": True, "round_id": self.round_id,
                "rows": self.rows, "cols": self.cols,
                "grid": [list(row) for row in self.grid],
                "phi": self.params.phi, "epsilon": self.params.epsilon,
                "stagnation_period": self.params.stagnation_period,
                "group_size": self.params.group_size,
                "seed": self.params.seed, "start": self.start}

    @staticmethod
    def from_json(obj: dict) -> "RoundHeader":
        try:
            params = RoundParams(
                phi=float(obj["phi"]), epsilon=float(obj["epsilon"]),
                stagnation_period=float(obj["stagnation_period"]),
                group_size=int(obj["group_size"]), seed=str(obj["seed"]))
            return RoundHeader(
                round_id=str(obj["round_id"]), rows=int(obj["rows"]),
                cols=int(obj["cols"]),
                grid=tuple(tuple(int(p) for p in row) for row in obj["grid"]),
                params=params, start=float(obj["start"]))
        except (KeyError, TypeError, ValueError) as err:
            raise CorruptLog(f"bad header: {err}") from err

    def spec(self) -> PuzzleSpec:
        return PuzzleSpec(self.rows, self.cols, CandidateSolution(self.grid))


@dataclass
class PlayerState:
    solution: PartialSolution
    rejected: RejectedEdgeSet
    active: bool = True


@dataclass(frozen=True)
class ApplyResult:
    entries: Tuple[LogEntry, ...]
    recommendations: Tuple[Recommendation, ...]
    solved: bool


class Round:
    """One live puzzle round.  All mutation funnels through here."""

    def __init__(self, spec: PuzzleSpec, params: RoundParams,
                 round_id: str = "round", clock=None,
                 log_stream: Optional[IO[str]] = None,
                 replaying: bool = False) -> None:
        self.spec = spec
        self.params = params
        self.round_id = round_id
        self._clock = clock if clock is not None else time.time
        self._log_stream = log_stream
        self._replaying = replaying
        self.start = self._clock()
        self.header = RoundHeader(round_id, spec.rows, spec.cols,
                                  spec.solution.grid, params, self.start)
        self.entries: List[LogEntry] = []
        self.states: Dict[str, PlayerState] = {}
        self.graph = CollectiveOpinionGraph()
        self.stagnation = StagnationTracker(
            StagnationConfig(params.stagnation_period))
        self.seq = 0
        self.winner: Optional[str] = None
        self.solved_at: Optional[float] = None
        self.solved_seq: Optional[int] = None
        if self._log_stream is not None:
            self._log_stream.write(json.dumps(self.header.to_json()) + "\n")
            self._log_stream.flush()

    # -- public operations ------------------------------------------------

    @property
    def solved(self) -> bool:
        return self.winner is not None

    def now(self) -> float:
        return self._clock()

    def join(self, player: str) -> ApplyResult:
        return self._admit(player, LogEntry(0, player, 0.0, JOIN))

    def leave(self, player: str) -> ApplyResult:
        return self._admit(player, LogEntry(0, player, 0.0, LEAVE))

    def connect_edge(self, player: str, e: LabeledEdge) -> ApplyResult:
        return self._admit(player, LogEntry(0, player, 0.0, CONNECT, edge=e))

    def disconnect_piece(self, player: str, piece: int) -> ApplyResult:
        return self._admit(player, LogEntry(0, player, 0.0, DISCONNECT,
                                            piece=piece))

    def accept_hint(self, player: str,
                    edges: Sequence[LabeledEdge]) -> ApplyResult:
        return self._admit(player, LogEntry(0, player, 0.0, ACCEPT_HINT,
                                            edges=tuple(edges)))

    def sweep_stagnation(self, now: Optional[float] = None
                         ) -> List[ApplyResult]:
        """Nudge every player whose quiet time ran out.

        Connecting actions are applied and logged with the feedback
        flag; hints only produce recommendations to dispatch.
        """
        if self.solved:
            return []
        now = self._clock() if now is None else now
        results = []
        for player in self.stagnation.due(now):
            state = self.states.get(player)
            if state is None or not state.active:
                continue
            rng = random.Random(f"{self.params.seed}:stim:{player}:{self.seq}")
            rec = stimulative_feedback(player, state.solution, state.rejected,
                                       self.graph, self.params.effective(),
                                       rng)
            if rec is None:
                continue
            self.stagnation.mark_fired(player)
            entries: List[LogEntry] = []
            solved_now = False
            if rec.mode == CONNECTING_ACTION:
                entry = self._append(LogEntry(0, player, 0.0, CONNECT,
                                              feedback=True,
                                              edge=rec.edges[0]), now=now)
                entries.append(entry)
                solved_now = self.solved
            results.append(ApplyResult(tuple(entries), (rec,), solved_now))
            if self.solved:
                break
        return results

    # -- derived views ----------------------------------------------------

    def player_solution(self, player: str) -> PartialSolution:
        return self.states[player].solution

    def player_rejected(self, player: str) -> RejectedEdgeSet:
        return self.states[player].rejected

    def progress(self) -> float:
        """Share of true edges currently surfaced by some strong set."""
        params = self.params.effective()
        hits = 0
        memo: Dict[Tuple[int, str], List[LabeledEdge]] = {}
        for e in self.spec.ground_truth():
            if e.label.value == "LR":
                sides = ((e.first, "R"), (e.second, "L"))
            else:
                sides = ((e.first, "B"), (e.second, "T"))
            for piece, side in sides:
                strong = memo.get((piece, side))
                if strong is None:
                    strong = strong_effective_set(self.graph, piece, side,
                                                  params)
                    memo[(piece, side)] = strong
                if e in strong:
                    hits += 1
                    break
        return hits / self.spec.edge_total

    def export_opinions(self) -> str:
        return self.graph.export_text()

    def status(self) -> dict:
        return {
            "round_id": self.round_id,
            "rows": self.spec.rows,
            "cols": self.spec.cols,
            "state": "solved" if self.solved else "open",
            "players": sorted(self.states),
            "active_players": sorted(p for p, s in self.states.items()
                                     if s.active),
            "seq": self.seq,
            "winner": self.winner,
            "start": self.start,
            "solved_at": self.solved_at,
        }

    # -- internals ---------------------------------------------------------

    def _admit(self, player: str, proto: LogEntry) -> ApplyResult:
        if self.solved:
            raise InvalidOperation("round_closed")
        if proto.op == JOIN:
            if player not in self.states \
                    and len(self.states) >= self.params.group_size:
                raise InvalidOperation("round_full")
        elif player not in self.states:
            raise InvalidOperation("unknown_player")
        elif not self.states[player].active:
            raise InvalidOperation("player_left")
        if proto.op == ACCEPT_HINT:
            # log only the edges that will actually land, in order, so a
            # replay applies the entry verbatim
            proto = self._filter_hint(player, proto)
        entry = self._append(proto)
        recs: List[Recommendation] = []
        if not self.solved and entry.op in (CONNECT, DISCONNECT, ACCEPT_HINT):
            extra, recs = self._responsive(entry)
        else:
            extra = []
        return ApplyResult((entry, *extra), tuple(recs), self.solved)

    def _filter_hint(self, player: str, proto: LogEntry) -> LogEntry:
        solution = self.states[player].solution
        usable: List[LabeledEdge] = []
        for e in proto.edges:
            try:
                solution = _connect_checked(solution, e)
            except ConnectError:
                continue
            usable.append(e)
        if not usable:
            raise InvalidOperation("hint_not_applicable")
        return dataclasses.replace(proto, edges=tuple(usable))

    def _append(self, proto: LogEntry, now: Optional[float] = None) -> LogEntry:
        """Assign seq and time, execute, then persist."""
        entry = LogEntry(self.seq + 1, proto.player,
                         self._clock() if now is None else now,
                         proto.op, proto.feedback, proto.edge, proto.piece,
                         proto.edges)
        self._execute(entry)
        self.entries.append(entry)
        if self._log_stream is not None:
            self._log_stream.write(json.dumps(entry.to_json()) + "\n")
            self._log_stream.flush()
        return entry

    def _execute(self, entry: LogEntry) -> None:
        """Apply one entry to player state and the opinion graph."""
        if entry.seq != self.seq + 1:
            raise CorruptLog(f"expected seq {self.seq + 1}, got {entry.seq}")
        player = entry.player
        if entry.op == JOIN:
            state = self.states.get(player)
            if state is None:
                self.states[player] = PlayerState(
                    PartialSolution.initial(self.spec.piece_count),
                    RejectedEdgeSet())
                self.graph.update_player(
                    player, self._traces(player), (), entry.seq)
            else:
                state.active = True
            self.stagnation.note_change(player, entry.t)
        elif entry.op == LEAVE:
            state = self._known(player)
            state.active = False
            # traces stay in the opinion graph: work left behind keeps
            # informing the group
            self.stagnation.forget(player)
        elif entry.op == CONNECT:
            state = self._known(player)
            try:
                new_solution = state.solution
                new_solution = _connect_checked(new_solution, entry.edge)
            except ConnectError as err:
                raise InvalidOperation(f"connect_{err.reason}", str(err))
            merged = new_solution.component_of(entry.edge.first)
            state.solution = new_solution
            state.rejected = state.rejected.without(merged.edges)
            self.graph.update_player(player, self._traces(player),
                                     merged.edges, entry.seq)
            self.stagnation.note_change(player, entry.t)
            self._check_solved(entry)
        elif entry.op == DISCONNECT:
            state = self._known(player)
            before = state.solution.component_of(entry.piece) \
                if entry.piece in state.solution.pieces else None
            if before is None:
                raise InvalidOperation("unknown_piece")
            if before.is_singleton():
                raise InvalidOperation("piece_isolated")
            new_solution, removed, context = model_disconnect(
                state.solution, entry.piece)
            state.solution = new_solution
            state.rejected = state.rejected.record(removed, context)
            self.graph.update_player(player, self._traces(player),
                                     before.edges, entry.seq)
            self.stagnation.note_change(player, entry.t)
        elif entry.op == ACCEPT_HINT:
            state = self._known(player)
            if not entry.edges:
                raise InvalidOperation("empty_hint")
            solution = state.solution
            rejected = state.rejected
            dirty: Set[LabeledEdge] = set()
            for e in entry.edges:
                try:
                    solution = _connect_checked(solution, e)
                except ConnectError as exc:
                    if self._replaying:
                        raise CorruptLog(
                            f"hint edge {e} does not apply at seq {entry.seq}")
                    raise InvalidOperation("hint_not_applicable", str(exc))
                merged = solution.component_of(e.first)
                rejected = rejected.without(merged.edges)
                dirty |= merged.edges
            state.solution = solution
            state.rejected = rejected
            self.graph.update_player(player, self._traces(player),
                                     dirty, entry.seq)
            self.stagnation.note_change(player, entry.t)
            self._check_solved(entry)
        else:
            raise CorruptLog(f"unknown op {entry.op!r}")
        self.seq = entry.seq
        self.graph.version = entry.seq

    def _responsive(self, entry: LogEntry
                    ) -> Tuple[List[LogEntry], List[Recommendation]]:
        """Run the after-operation policy for the acting player.

        A produced connecting action is applied and logged immediately;
        it does not trigger another responsive pass.
        """
        player = entry.player
        state = self.states[player]
        focused = self._focused_component(entry, state)
        if focused is None:
            return [], []
        rng = random.Random(f"{self.params.seed}:resp:{entry.seq}")
        rec = responsive_feedback(player, state.solution, state.rejected,
                                  self.graph, focused,
                                  self.params.effective(), rng)
        if rec is None:
            return [], []
        if rec.mode != CONNECTING_ACTION:
            return [], [rec]
        applied = self._append(LogEntry(0, player, 0.0, CONNECT,
                                        feedback=True, edge=rec.edges[0]))
        return [applied], [rec]

    def _focused_component(self, entry: LogEntry,
                           state: PlayerState) -> Optional[ConnectedComponent]:
        if entry.op == CONNECT:
            return state.solution.component_of(entry.edge.first)
        if entry.op == DISCONNECT:
            return state.solution.component_of(entry.piece)
        if entry.op == ACCEPT_HINT:
            for e in reversed(entry.edges):
                if state.solution.has_edge(e):
                    return state.solution.component_of(e.first)
        return None

    def _check_solved(self, entry: LogEntry) -> None:
        if is_solved(self.states[entry.player].solution, self.spec):
            self.winner = entry.player
            self.solved_at = entry.t
            self.solved_seq = entry.seq

    def _traces(self, player: str) -> PlayerTraces:
        state = self.states[player]
        return PlayerTraces(state.solution, state.rejected)

    def _known(self, player: str) -> PlayerState:
        state = self.states.get(player)
        if state is None:
            raise InvalidOperation("unknown_player")
        return state


def _connect_checked(solution: PartialSolution,
                     e: Optional[LabeledEdge]) -> PartialSolution:
    if e is None:
        raise InvalidOperation("missing_edge")
    return model_connect(solution, e)


# -- metrics and replay -----------------------------------------------------


@dataclass(frozen=True)
class RoundMetrics:
    """Outcome figures for one solved round."""

    winner: str
    completion_seconds: float        # solve time minus round start
    feedback_ratio: float            # flagged edges in the winning layout
    feedback_precision: Optional[float]  # correct share of connecting actions
    progress_samples: Tuple[Tuple[int, float], ...]  # (seq, progress)
    entry_count: int

    def to_json(self) -> dict:
        return {
            "winner": self.winner,
            "completion_seconds": self.completion_seconds,
            "feedback_ratio": self.feedback_ratio,
            "feedback_precision": self.feedback_precision,
            "progress_samples": [list(s) for s in self.progress_samples],
            "entry_count": self.entry_count,
        }


PROGRESS_SAMPLE_EVERY = 10


def parse_log(lines: Iterable[str]) -> Tuple[RoundHeader, List[LogEntry]]:
    header: Optional[RoundHeader] = None
    entries: List[LogEntry] = []
    for i, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as err:
            raise CorruptLog(f"line {i + 1} is not JSON: {err}") from err
        if obj.get("header"):
            if header is not None:
                raise CorruptLog("duplicate header")
            header = RoundHeader.from_json(obj)
        else:
            if header is None:
                raise CorruptLog("entry before header")
            entries.append(LogEntry.from_json(obj))
    if header is None:
        raise CorruptLog("missing header")
    return header, entries


def replay(header: RoundHeader, entries: Sequence[LogEntry],
           sample_every: int = PROGRESS_SAMPLE_EVERY
           ) -> Tuple[Round, List[Tuple[int, float]]]:
    """Mechanically re-apply a log.  Returns the rebuilt round and the
    progress curve sampled every `sample_every` entries plus the final one.
    """
    rnd = Round(header.spec(), header.params, header.round_id,
                clock=lambda: header.start, replaying=True)
    samples: List[Tuple[int, float]] = []
    for entry in entries:
        if rnd.solved:
            raise CorruptLog(f"entry {entry.seq} after the round was solved")
        try:
            rnd._execute(entry)
        except InvalidOperation as err:
            raise CorruptLog(
                f"entry {entry.seq} rejected on replay: {err.reason}") from err
        rnd.entries.append(entry)
        if entry.seq % sample_every == 0 or rnd.solved:
            samples.append((entry.seq, rnd.progress()))
    return rnd, samples


def compute_metrics(header: RoundHeader, entries: Sequence[LogEntry],
                    sample_every: int = PROGRESS_SAMPLE_EVERY) -> RoundMetrics:
    """Replay a finished log and distill the outcome figures."""
    rnd, samples = replay(header, entries, sample_every)
    if not rnd.solved:
        raise RoundUnsolved(f"round {header.round_id} never solved")
    winner = rnd.winner
    spec = rnd.spec
    final_edges = rnd.states[winner].solution.edges()
    flagged = [e for e in entries
               if e.feedback and e.op == CONNECT and e.player == winner]
    flagged_edges = {e.edge for e in flagged}
    truth = spec.ground_truth()
    precision: Optional[float]
    if flagged:
        precision = sum(1 for e in flagged if e.edge in truth) / len(flagged)
    else:
        precision = None
    return RoundMetrics(
        winner=winner,
        completion_seconds=rnd.solved_at - header.start,
        feedback_ratio=len(flagged_edges & final_edges) / spec.edge_total,
        feedback_precision=precision,
        progress_samples=tuple(samples),
        entry_count=len(entries),
    )


def load_round(path) -> Tuple[RoundHeader, List[LogEntry]]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_log(fh)
