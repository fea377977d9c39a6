"""Scripted players on a virtual clock.

An agent models a human of a given accuracy: each turn it either lays
a true edge consistent with its layout or, with the complementary
probability, a wrong one that it will notice and pull apart after a
dwell delay.  Feedback flows through the same round machinery as for
live players: connecting actions mutate the agent's layout directly,
and hints are taken or ignored per policy.  Time is simulated, so a
whole round runs in milliseconds and identical seeds give identical
logs.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .feedback import CONNECTING_ACTION, EDGE_HINT, Recommendation
from .model import (ConnectError, LabeledEdge, PuzzleSpec, all_edges, connect,
                    edge)
from .rounds import (ApplyResult, InvalidOperation, Round, RoundMetrics,
                     RoundParams, compute_metrics)


class SimulationStalled(Exception):
    """The round burned its operation budget without a winner."""


@dataclass(frozen=True)
class AgentPolicy:
    """Behavior knobs for scripted players."""

    accuracy: float = 0.8      # chance a move follows the ground truth
    think_mean: float = 5.0    # seconds between moves
    think_jitter: float = 2.0
    dwell_mean: float = 20.0   # how long a wrong edge survives
    dwell_jitter: float = 5.0
    accept_hints: bool = True
    seed: str = "0"

    def __post_init__(self) -> None:
        if not (0.0 <= self.accuracy <= 1.0):
            raise ValueError("accuracy must lie in [0, 1]")
        if self.think_mean <= 0:
            raise ValueError("think_mean must be positive")


@dataclass
class _Agent:
    player: str
    rng: random.Random
    pending_hint: Optional[Tuple[LabeledEdge, ...]] = None
    watched: Set[LabeledEdge] = field(default_factory=set)


@dataclass(frozen=True)
class AgentRoundResult:
    round: Round
    metrics: RoundMetrics
    operations: int


def run_agent_round(rows: int, cols: int, group_size: int,
                    policy: AgentPolicy,
                    phi: float = 0.618, epsilon: float = 0.02,
                    stagnation_period: float = 30.0,
                    round_id: str = "sim", log_stream=None,
                    budget: Optional[int] = None) -> AgentRoundResult:
    """Run one fully scripted round to completion on simulated time."""
    params = RoundParams(phi=phi, epsilon=epsilon,
                         stagnation_period=stagnation_period,
                         group_size=group_size, seed=policy.seed)
    spec = PuzzleSpec.shuffled(rows, cols, f"puzzle:{policy.seed}")
    if budget is None:
        budget = 400 * rows * cols * max(1, group_size)

    now = [0.0]
    rnd = Round(spec, params, round_id, clock=lambda: now[0],
                log_stream=log_stream)
    truth_set = spec.ground_truth()
    truth = sorted(truth_set, key=lambda e: e.key())
    universe = sorted(all_edges(spec.piece_count), key=lambda e: e.key())

    agents: Dict[str, _Agent] = {}
    heap: List[Tuple[float, int, str, str, object]] = []
    counter = [0]

    def push(t: float, kind: str, player: str,
             payload: object = None) -> None:
        counter[0] += 1
        heapq.heappush(heap, (t, counter[0], kind, player, payload))

    def think(agent: _Agent) -> float:
        lo = policy.think_mean - policy.think_jitter
        hi = policy.think_mean + policy.think_jitter
        return max(0.05, agent.rng.uniform(lo, hi))

    def dwell(agent: _Agent) -> float:
        lo = policy.dwell_mean - policy.dwell_jitter
        hi = policy.dwell_mean + policy.dwell_jitter
        return max(0.1, agent.rng.uniform(lo, hi))

    for i in range(group_size):
        player = f"a{i:02d}"
        agents[player] = _Agent(player, random.Random(f"{policy.seed}:agent:{i}"))
        rnd.join(player)
    for player in sorted(agents):
        push(think(agents[player]), "act", player)
        _arm_stagnation(rnd, player, push)

    def watch(player: str, anchor: int, t: float) -> None:
        """Schedule a future second look at every wrong edge in the
        component holding `anchor`.  Deduction closure can materialize
        wrong edges the player never placed explicitly, so the scan
        covers the whole component, not just the connected edge."""
        agent = agents[player]
        comp = rnd.player_solution(player).component_of(anchor)
        for e in comp.edges:
            if e not in truth_set and e not in agent.watched:
                agent.watched.add(e)
                push(t + dwell(agent), "cleanup", player, e)

    def absorb(result: ApplyResult, t: float) -> None:
        """Handle side effects attached to an operation result."""
        for entry in result.entries:
            if entry.op == "connect" and entry.edge is not None:
                watch(entry.player, entry.edge.first, t)
            elif entry.op == "accept_hint":
                for e in entry.edges:
                    if rnd.player_solution(entry.player).has_edge(e):
                        watch(entry.player, e.first, t)
        for rec in result.recommendations:
            if rec.mode == EDGE_HINT and policy.accept_hints:
                agents[rec.target].pending_hint = rec.edges
            _arm_stagnation(rnd, rec.target, push)

    def act(agent: _Agent, t: float) -> None:
        solution = rnd.player_solution(agent.player)
        if agent.pending_hint is not None:
            edges = agent.pending_hint
            agent.pending_hint = None
            rejected = rnd.player_rejected(agent.player)
            # the agent trusts hints except where its own experiment failed
            usable = [e for e in edges
                      if e not in rejected and _connectable(solution, e)]
            if usable:
                absorb(rnd.accept_hint(agent.player, usable), t)
                _arm_stagnation(rnd, agent.player, push)
                return
        wants_truth = agent.rng.random() < policy.accuracy
        chosen: Optional[LabeledEdge] = None
        wrong = False
        if wants_truth:
            options = [e for e in truth if _connectable(solution, e)]
            if options:
                chosen = options[agent.rng.randrange(len(options))]
        if chosen is None:
            chosen = _random_wrong_edge(agent.rng, universe, solution,
                                        truth_set)
            wrong = chosen is not None
        if chosen is None and not wants_truth:
            # wanted a mistake but found none; a true move keeps things going
            options = [e for e in truth if _connectable(solution, e)]
            if options:
                chosen = options[agent.rng.randrange(len(options))]
        if chosen is None:
            return
        result = rnd.connect_edge(agent.player, chosen)
        absorb(result, t)
        _arm_stagnation(rnd, agent.player, push)

    def cleanup(agent: _Agent, bad: LabeledEdge, t: float) -> None:
        agent.watched.discard(bad)
        solution = rnd.player_solution(agent.player)
        if not solution.has_edge(bad):
            return
        piece = _cleanup_target(solution, bad, truth_set)
        absorb(rnd.disconnect_piece(agent.player, piece), t)
        if not rnd.solved and agent.rng.random() < policy.accuracy:
            # having noticed the mismatch, put the piece where it belongs
            solution = rnd.player_solution(agent.player)
            fixes = [e for e in truth
                     if (e.first == piece or e.second == piece)
                     and _connectable(solution, e)]
            if fixes:
                pick = fixes[agent.rng.randrange(len(fixes))]
                absorb(rnd.connect_edge(agent.player, pick), t)
        _arm_stagnation(rnd, agent.player, push)

    operations = 0
    event_budget = max(100_000, 20 * budget)
    while heap and not rnd.solved:
        t, _, kind, player, payload = heapq.heappop(heap)
        now[0] = t
        if len(rnd.entries) > budget or operations > event_budget:
            raise SimulationStalled(
                f"{round_id}: {len(rnd.entries)} entries / {operations} "
                f"events without a solve")
        agent = agents[player]
        if kind == "act":
            act(agent, t)
            if not rnd.solved:
                push(t + think(agent), "act", player)
        elif kind == "cleanup":
            cleanup(agent, payload, t)
        elif kind == "stagnation":
            for result in rnd.sweep_stagnation(now=t):
                absorb(result, t)
        operations += 1

    if not rnd.solved:
        raise SimulationStalled(f"{round_id}: event queue drained unsolved")
    metrics = compute_metrics(rnd.header, rnd.entries)
    return AgentRoundResult(rnd, metrics, operations)


def _arm_stagnation(rnd: Round, player: str, push) -> None:
    deadline = rnd.stagnation.next_deadline(player)
    if deadline is not None:
        push(deadline, "stagnation", player)


def _connectable(solution, e: LabeledEdge) -> bool:
    if solution.has_edge(e):
        return False
    try:
        connect(solution, e)
    except ConnectError:
        return False
    return True


def _random_wrong_edge(rng: random.Random, universe: Sequence[LabeledEdge],
                       solution, truth) -> Optional[LabeledEdge]:
    for _ in range(40):
        e = universe[rng.randrange(len(universe))]
        if e in truth or not _connectable(solution, e):
            continue
        return e
    return None


def _cleanup_target(solution, bad: LabeledEdge, truth) -> int:
    """Which endpoint of a wrong edge to pull out: the one with fewer
    true edges anchoring it, so the correction destroys less good work."""
    comp = solution.component_of(bad.first)

    def true_degree(p: int) -> int:
        return sum(1 for e in comp.edges
                   if (e.first == p or e.second == p) and e in truth)

    return bad.first if true_degree(bad.first) < true_degree(bad.second) \
        else bad.second
