"""Recommendation policies driven by the collective opinion graph.

Two triggers, two shapes.  Responsive feedback runs right after a
player changes their layout and inspects the component they touched;
stimulative feedback runs when a player has gone quiet for a while and
searches the whole graph for mutually-confirmed candidates.  Either can
produce a connecting action (one edge the environment applies to the
player's layout on their behalf) or an edge hint (highlighted
candidates the player may take or leave).  State never flows between
players directly; everything is mediated by the opinion weights.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .model import (SIDES, ConnectedComponent, ConnectError, LabeledEdge,
                    PartialSolution, RejectedEdgeSet, connect)
from .opinion import EffectiveSetParams, strong_effective_set

CONNECTING_ACTION = "connecting_action"
EDGE_HINT = "edge_hint"

RESPONSIVE = "responsive"
STIMULATIVE = "stimulative"


@dataclass(frozen=True)
class Recommendation:
    """One unit of feedback addressed to a single player."""

    target: str
    mode: str                      # CONNECTING_ACTION or EDGE_HINT
    edges: Tuple[LabeledEdge, ...]  # exactly one edge for connecting actions
    policy: str                    # RESPONSIVE or STIMULATIVE
    version: int                   # opinion-graph version it was computed from

    def __post_init__(self) -> None:
        if self.mode == CONNECTING_ACTION and len(self.edges) != 1:
            raise ValueError("a connecting action carries exactly one edge")
        if not self.edges:
            raise ValueError("a recommendation must name at least one edge")


def responsive_feedback(target: str,
                        solution: PartialSolution,
                        rejected: RejectedEdgeSet,
                        graph,
                        focused: ConnectedComponent,
                        params: EffectiveSetParams,
                        rng: random.Random) -> Optional[Recommendation]:
    """Inspect the component the player just touched.

    Walk its pieces in reading order (ascending relative row, then
    column), and for each open side compute the strong effective set.
    The first singleton whose edge connects cleanly onto the player's
    layout wins and becomes a connecting action.  If no side qualifies,
    one of the non-empty sets seen during the walk is picked uniformly
    at random and returned whole as an edge hint.  Returns None when
    the walk saw nothing.

    An edge the player has personally rejected is never forced back in
    through a connecting action; the player's own veto outranks the
    group weight.  Such edges still flow through hints, which the
    player is free to ignore.
    """
    hint_pool: List[List[LabeledEdge]] = []
    order = sorted(focused.pieces, key=lambda p: focused.coords[p])
    for piece in order:
        if focused.degree(piece) >= 4:
            continue
        for side in SIDES:
            if not focused.side_open(piece, side):
                continue
            strong = strong_effective_set(graph, piece, side, params)
            if not strong:
                continue
            if len(strong) == 1:
                candidate = strong[0]
                if candidate not in rejected \
                        and _connectable(solution, candidate):
                    return Recommendation(target, CONNECTING_ACTION,
                                          (candidate,), RESPONSIVE,
                                          graph.version)
            hint_pool.append(strong)
    if not hint_pool:
        return None
    chosen = hint_pool[rng.randrange(len(hint_pool))]
    return Recommendation(target, EDGE_HINT, tuple(chosen), RESPONSIVE,
                          graph.version)


def _connectable(solution: PartialSolution, e: LabeledEdge) -> bool:
    if solution.has_edge(e):
        return False
    try:
        connect(solution, e)
    except ConnectError:
        return False
    return True


def best_buddy_edges(solution: PartialSolution, graph,
                     params: EffectiveSetParams) -> List[LabeledEdge]:
    """Edges both endpoints agree on, absent from the player's layout.

    An edge qualifies when it is the entire strong effective set of the
    side it leaves and of the side it enters.  Returned sorted by edge
    key so callers can shuffle it reproducibly.
    """
    out = []
    for e in _opined_edges(graph):
        if solution.has_edge(e):
            continue
        if e.label.value == "LR":
            sides = ((e.first, "R"), (e.second, "L"))
        else:
            sides = ((e.first, "B"), (e.second, "T"))
        if all(strong_effective_set(graph, piece, side, params) == [e]
               for piece, side in sides):
            out.append(e)
    out.sort(key=lambda e: e.key())
    return out


def _opined_edges(graph):
    ops = graph.opinions() if callable(getattr(graph, "opinions", None)) \
        else graph.opinions
    return list(ops)


def stimulative_feedback(target: str,
                         solution: PartialSolution,
                         rejected: RejectedEdgeSet,
                         graph,
                         params: EffectiveSetParams,
                         rng: random.Random) -> Optional[Recommendation]:
    """Nudge a stalled player with a mutually-confirmed edge.

    Best-buddy candidates are tried in a shuffled order; the first one
    that connects cleanly onto the player's layout is applied as a
    connecting action.  If none connects but candidates exist, one is
    picked at random and sent as a single-edge hint.  No candidates,
    no feedback.  As with responsive feedback, the player's own
    rejections are exempt from forced connections.
    """
    buddies = best_buddy_edges(solution, graph, params)
    if not buddies:
        return None
    order = list(buddies)
    rng.shuffle(order)
    for e in order:
        if e not in rejected and _connectable(solution, e):
            return Recommendation(target, CONNECTING_ACTION, (e,),
                                  STIMULATIVE, graph.version)
    pick = buddies[rng.randrange(len(buddies))]
    return Recommendation(target, EDGE_HINT, (pick,), STIMULATIVE,
                          graph.version)


@dataclass
class StagnationConfig:
    period: float = 30.0  # seconds without a layout change

    def __post_init__(self) -> None:
        if self.period <= 0:
            raise ValueError("stagnation period must be positive")


class StagnationTracker:
    """Per-player quiet-time bookkeeping.

    A player becomes due once `period` elapses after their last layout
    change, fires at most once per quiet episode, and re-arms only when
    a new change lands.
    """

    def __init__(self, config: StagnationConfig) -> None:
        self.config = config
        self._last_change: Dict[str, float] = {}
        self._fired: Set[str] = set()

    def note_change(self, player: str, now: float) -> None:
        self._last_change[player] = now
        self._fired.discard(player)

    def forget(self, player: str) -> None:
        self._last_change.pop(player, None)
        self._fired.discard(player)

    def last_change(self, player: str) -> Optional[float]:
        return self._last_change.get(player)

    def next_deadline(self, player: str) -> Optional[float]:
        t = self._last_change.get(player)
        if t is None or player in self._fired:
            return None
        return t + self.config.period

    def due(self, now: float) -> List[str]:
        out = []
        for player in sorted(self._last_change):
            if player in self._fired:
                continue
            if now - self._last_change[player] >= self.config.period:
                out.append(player)
        return out

    def mark_fired(self, player: str) -> None:
        self._fired.add(player)


def detect_stagnation(last_change: Dict[str, float], now: float,
                      config: StagnationConfig,
                      already_fired: Set[str]) -> List[str]:
    """Players whose quiet time reached the period and who were not yet nudged."""
    return [p for p in sorted(last_change)
            if p not in already_fired
            and now - last_change[p] >= config.period]
