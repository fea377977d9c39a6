"""Collective opinion graph: shared evidence about placement claims.

Every edge that any player currently holds, or once held and removed,
gets an opinion.  Supporters back an edge with the size (edge count) of
the component it sits in; rejecters count against it with the size of
the component it was last removed from.  Confidence is the share of
positive weight.  The graph is the only cross-player state: players
never see each other's layouts, only recommendations derived from the
weights here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .model import EdgeLabel, LabeledEdge, PartialSolution, RejectedEdgeSet


@dataclass(frozen=True)
class PlayerTraces:
    """The opinion-relevant slice of one player's state."""

    solution: PartialSolution
    rejected: RejectedEdgeSet


@dataclass(frozen=True)
class EdgeOpinion:
    edge: LabeledEdge
    supporters: FrozenSet[str]
    rejecters: FrozenSet[str]
    positive: int  # sum of supporters' containing-component edge counts
    negative: int  # sum of rejecters' recorded context sizes

    def confidence(self) -> float:
        total = self.positive + self.negative
        if total == 0:
            raise DegenerateOpinion(f"opinion on {self.edge} carries no weight")
        return self.positive / total


class DegenerateOpinion(Exception):
    """An opinion whose weights sum to zero has no defined confidence."""


def confidence(positive: int, negative: int) -> float:
    if positive + negative == 0:
        raise DegenerateOpinion("zero total weight")
    return positive / (positive + negative)


def rebuild_opinion(e: LabeledEdge,
                    players: Mapping[str, PlayerTraces]) -> Optional[EdgeOpinion]:
    """Compute one edge's opinion from scratch across all players.

    Returns None when no player holds or has rejected the edge.  This
    is the reference computation; the incremental graph below must
    always agree with it.
    """
    supporters = []
    rejecters = []
    positive = 0
    negative = 0
    for pid in sorted(players):
        traces = players[pid]
        comp = traces.solution.component_of(e.first) \
            if e.first in traces.solution.pieces else None
        if comp is not None and e in comp.edges:
            supporters.append(pid)
            positive += len(comp.edges)
        if e in traces.rejected:
            rejecters.append(pid)
            negative += traces.rejected.context(e)
    if not supporters and not rejecters:
        return None
    return EdgeOpinion(e, frozenset(supporters), frozenset(rejecters),
                       positive, negative)


def rebuild_graph(players: Mapping[str, PlayerTraces]
                  ) -> Dict[LabeledEdge, EdgeOpinion]:
    """Full from-scratch rebuild, the test oracle for the incremental path."""
    keys: Set[LabeledEdge] = set()
    for traces in players.values():
        keys |= traces.solution.edges()
        keys |= set(traces.rejected.entries)
    out = {}
    for e in keys:
        op = rebuild_opinion(e, players)
        if op is not None:
            out[e] = op
    return out


# side -> (edge label, role the piece plays); "second" means the edge
# points at the piece, e.g. the left side of v collects <u, LR, v>
_SIDE_ROLE = {
    "L": (EdgeLabel.LR, "second"),
    "R": (EdgeLabel.LR, "first"),
    "T": (EdgeLabel.TB, "second"),
    "B": (EdgeLabel.TB, "first"),
}


class CollectiveOpinionGraph:
    """Incrementally maintained opinions, owned by a round's integrator.

    Single-writer: only the round's integrator mutates it, so readers
    inside the integrator may use it directly.  External readers take
    snapshot() copies tagged with the version (the round's last applied
    sequence number).
    """

    def __init__(self) -> None:
        self._players: Dict[str, PlayerTraces] = {}
        self._opinions: Dict[LabeledEdge, EdgeOpinion] = {}
        self._by_side: Dict[Tuple[int, str], Set[LabeledEdge]] = {}
        self.version = 0

    def __len__(self) -> int:
        return len(self._opinions)

    def __contains__(self, e: LabeledEdge) -> bool:
        return e in self._opinions

    def get(self, e: LabeledEdge) -> Optional[EdgeOpinion]:
        return self._opinions.get(e)

    def opinions(self) -> Mapping[LabeledEdge, EdgeOpinion]:
        return self._opinions

    def player_traces(self, pid: str) -> Optional[PlayerTraces]:
        return self._players.get(pid)

    def update_player(self, pid: str, traces: PlayerTraces,
                      dirty: Iterable[LabeledEdge], version: int) -> None:
        """Replace one player's traces and recompute the touched opinions.

        `dirty` must cover every edge whose membership or weight could
        have changed: the edges of every component the triggering
        operation touched (before and after) plus any rejected-set
        changes.  Callers in this package pass the union of the old and
        new containing components' edges, which covers removals,
        closure-deduced additions, and rejected-set deltas.
        """
        self._players[pid] = traces
        for e in dirty:
            fresh = rebuild_opinion(e, self._players)
            if fresh is None:
                if self._opinions.pop(e, None) is not None:
                    self._unindex(e)
            else:
                if e not in self._opinions:
                    self._index(e)
                self._opinions[e] = fresh
        self.version = version

    def drop_player(self, pid: str) -> None:
        """Forget a player entirely (admin reset, not part of normal rounds)."""
        traces = self._players.pop(pid, None)
        if traces is None:
            return
        dirty = traces.solution.edges() | frozenset(traces.rejected.entries)
        for e in dirty:
            fresh = rebuild_opinion(e, self._players)
            if fresh is None:
                if self._opinions.pop(e, None) is not None:
                    self._unindex(e)
            else:
                self._opinions[e] = fresh

    def _index(self, e: LabeledEdge) -> None:
        for piece, side in _edge_sides(e):
            self._by_side.setdefault((piece, side), set()).add(e)

    def _unindex(self, e: LabeledEdge) -> None:
        for piece, side in _edge_sides(e):
            bucket = self._by_side.get((piece, side))
            if bucket is not None:
                bucket.discard(e)
                if not bucket:
                    del self._by_side[(piece, side)]

    def side_edges(self, piece: int, side: str) -> Set[LabeledEdge]:
        """All opined edges that would attach at `side` of `piece`."""
        if side not in _SIDE_ROLE:
            raise ValueError(f"unknown side {side!r}")
        return set(self._by_side.get((piece, side), ()))

    def snapshot(self) -> "OpinionSnapshot":
        return OpinionSnapshot(dict(self._opinions), self.version)

    def export_text(self) -> str:
        return export_text(self._opinions, self.version)


def _edge_sides(e: LabeledEdge) -> Tuple[Tuple[int, str], Tuple[int, str]]:
    if e.label is EdgeLabel.LR:
        return ((e.first, "R"), (e.second, "L"))
    return ((e.first, "B"), (e.second, "T"))


@dataclass(frozen=True)
class OpinionSnapshot:
    """Immutable copy handed to readers outside the integrator."""

    opinions: Mapping[LabeledEdge, EdgeOpinion]
    version: int

    def side_edges(self, piece: int, side: str) -> Set[LabeledEdge]:
        label, role = _SIDE_ROLE[side]
        out = set()
        for e in self.opinions:
            if e.label is label and getattr(e, role) == piece:
                out.add(e)
        return out

    def export_text(self) -> str:
        return export_text(self.opinions, self.version)


def export_text(opinions: Mapping[LabeledEdge, EdgeOpinion], version: int) -> str:
    """Line format: label first second positive negative confidence."""
    lines = [f"# opinion-graph v{version} edges={len(opinions)}"]
    for e in sorted(opinions, key=lambda e: e.key()):
        op = opinions[e]
        lines.append(f"{e.label.value} {e.first} {e.second} "
                     f"{op.positive} {op.negative} {op.confidence():.6f}")
    return "\n".join(lines) + "\n"


class EmptySequence(Exception):
    """The distinguished prefix of nothing is undefined."""


def epsilon_prefix(seq: Sequence[float], eps: float) -> List[float]:
    """Leading run of a non-increasing sequence up to its sharpest drop.

    If every adjacent gap a[i] - a[i+1] stays within eps * |a[i]|, the
    whole sequence is returned.  Otherwise the cut lands at the first
    occurrence of the maximum gap and everything before it survives.

    Comparisons carry a tiny relative tolerance: decimal inputs like
    9.9 - 9.8 land a few ulps off the exact value, and both the
    threshold test and the tie between equal gaps must follow real
    arithmetic, not float rounding.
    """
    if len(seq) == 0:
        raise EmptySequence("cannot take the distinguished prefix of []")
    for i in range(len(seq) - 1):
        if seq[i] < seq[i + 1]:
            raise ValueError("sequence must be non-increasing")
    gaps = [seq[i] - seq[i + 1] for i in range(len(seq) - 1)]
    if not gaps:
        return list(seq)
    tol = 1e-9 * max(abs(seq[0]), 1.0)
    if all(gap <= eps * abs(seq[i]) + tol for i, gap in enumerate(gaps)):
        return list(seq)
    top = max(gaps)
    cut = next(i for i, gap in enumerate(gaps) if gap >= top - tol)
    return list(seq[:cut + 1])


@dataclass(frozen=True)
class EffectiveSetParams:
    """Thresholds for turning opinions into recommendations."""

    phi: float = 0.618   # minimum confidence to count at all
    epsilon: float = 0.02  # relative gap tolerated inside the strong prefix

    def __post_init__(self) -> None:
        if not (0.0 <= self.phi <= 1.0):
            raise ValueError("phi must lie in [0, 1]")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be non-negative")


def effective_set(graph, piece: int, side: str,
                  phi: float) -> Set[LabeledEdge]:
    """Side candidates whose confidence clears the phi threshold."""
    out = set()
    for e in graph.side_edges(piece, side):
        op = graph.get(e) if hasattr(graph, "get") else graph.opinions.get(e)
        if op is not None and op.confidence() >= phi:
            out.add(e)
    return out


def strong_effective_set(graph, piece: int, side: str,
                         params: EffectiveSetParams) -> List[LabeledEdge]:
    """The clearly-leading candidates for one side of one piece.

    Survivors of the confidence filter are ranked by positive weight
    (ties broken by edge key so the ranking is reproducible) and cut to
    the distinguished prefix of their weight sequence.  Returned in
    ranked order; empty when nothing clears the filter.
    """
    lookup = graph.get if hasattr(graph, "get") else graph.opinions.get
    survivors = []
    for e in graph.side_edges(piece, side):
        op = lookup(e)
        if op is not None and op.confidence() >= params.phi:
            survivors.append(op)
    if not survivors:
        return []
    survivors.sort(key=lambda op: (-op.positive, op.edge.key()))
    weights = [op.positive for op in survivors]
    keep = len(epsilon_prefix(weights, params.epsilon))
    return [op.edge for op in survivors[:keep]]
