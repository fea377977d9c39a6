"""Feedback-policy tests: responsive, stimulative, stagnation tracking."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogsaw.feedback import (CONNECTING_ACTION, EDGE_HINT, RESPONSIVE,
                             STIMULATIVE, Recommendation, StagnationConfig,
                             StagnationTracker, best_buddy_edges,
                             detect_stagnation, responsive_feedback,
                             stimulative_feedback)
from cogsaw.model import PartialSolution, RejectedEdgeSet, connect, edge
from cogsaw.opinion import (CollectiveOpinionGraph, EffectiveSetParams,
                            PlayerTraces, rebuild_opinion)
from invariants import assert_valid_state, random_walk

PARAMS = EffectiveSetParams()


def graph_of(players) -> CollectiveOpinionGraph:
    g = CollectiveOpinionGraph()
    for version, (pid, traces) in enumerate(sorted(players.items()), start=1):
        dirty = traces.solution.edges() | frozenset(traces.rejected.entries)
        g.update_player(pid, traces, dirty, version)
    return g


def holding(edges, universe: int = 9) -> PlayerTraces:
    ps = PartialSolution.initial(universe)
    for e in edges:
        if not ps.has_edge(e):
            ps = connect(ps, e)
    return PlayerTraces(ps, RejectedEdgeSet())


def fresh(universe: int = 9):
    return PartialSolution.initial(universe), RejectedEdgeSet()


# ----------------------------------------------------------- recommendation

def test_connecting_action_carries_exactly_one_edge():
    e, f = edge("LR", 0, 1), edge("LR", 1, 2)
    with pytest.raises(ValueError):
        Recommendation("p", CONNECTING_ACTION, (e, f), RESPONSIVE, 1)
    with pytest.raises(ValueError):
        Recommendation("p", EDGE_HINT, (), RESPONSIVE, 1)
    ok = Recommendation("p", CONNECTING_ACTION, (e,), STIMULATIVE, 3)
    assert ok.edges == (e,)


# ------------------------------------------------------- responsive policy

def test_singleton_strong_set_becomes_connecting_action():
    e = edge("LR", 0, 1)
    g = graph_of({"other": holding([e])})
    solution, rejected = fresh()
    rec = responsive_feedback("me", solution, rejected, g,
                              solution.component_of(0), PARAMS,
                              random.Random(0))
    assert rec.mode == CONNECTING_ACTION
    assert rec.edges == (e,)
    assert rec.policy == RESPONSIVE
    assert rec.version == g.version


def test_assembled_neighbour_pulls_in_a_fresh_singleton():
    # A already joined pieces 1 and 2; B just placed piece 2 alone.  The
    # group weight points B at the same join, and it applies cleanly.
    true_edge = edge("LR", 1, 2)
    players = {"A": holding([edge("LR", 0, 1), true_edge, edge("TB", 0, 3)])}
    op = rebuild_opinion(true_edge, players)
    assert op.supporters == frozenset({"A"})
    assert op.positive == 3
    assert op.confidence() == 1.0
    g = graph_of(players)
    solution, rejected = fresh()
    rec = responsive_feedback("B", solution, rejected, g,
                              solution.component_of(2), PARAMS,
                              random.Random(1))
    assert rec.mode == CONNECTING_ACTION
    assert rec.edges == (true_edge,)
    applied = connect(solution, true_edge)
    assert_valid_state(applied, 9)


def test_competing_candidates_fall_back_to_a_hint():
    rivals = {edge("LR", 1, 0), edge("LR", 2, 0)}
    g = graph_of({"p": holding([edge("LR", 1, 0)]),
                  "q": holding([edge("LR", 2, 0)])})
    solution, rejected = fresh()
    rec = responsive_feedback("me", solution, rejected, g,
                              solution.component_of(0), PARAMS,
                              random.Random(0))
    assert rec.mode == EDGE_HINT
    assert set(rec.edges) == rivals
    assert rec.policy == RESPONSIVE


def test_quiet_graph_yields_no_feedback():
    g = CollectiveOpinionGraph()
    solution, rejected = fresh()
    assert responsive_feedback("me", solution, rejected, g,
                               solution.component_of(0), PARAMS,
                               random.Random(0)) is None


def test_own_rejection_downgrades_action_to_hint():
    e = edge("LR", 0, 1)
    g = graph_of({"other": holding([e])})
    solution = PartialSolution.initial(9)
    rejected = RejectedEdgeSet().record([e], 3)
    rec = responsive_feedback("me", solution, rejected, g,
                              solution.component_of(0), PARAMS,
                              random.Random(0))
    # the veto blocks the forced connect but the evidence still shows
    assert rec.mode == EDGE_HINT
    assert rec.edges == (e,)


def test_traversal_prefers_earlier_sides_and_pieces():
    solution = connect(PartialSolution.initial(9), edge("TB", 4, 7))
    g = graph_of({"x": holding([edge("LR", 3, 4)]),
                  "y": holding([edge("TB", 1, 4)])})
    rec = responsive_feedback("me", solution, RejectedEdgeSet(), g,
                              solution.component_of(4), PARAMS,
                              random.Random(0))
    # piece 4's L side is visited before its T side
    assert rec.edges == (edge("LR", 3, 4),)

    g2 = graph_of({"x": holding([edge("LR", 7, 8)]),
                   "y": holding([edge("TB", 1, 4)])})
    rec2 = responsive_feedback("me", solution, RejectedEdgeSet(), g2,
                               solution.component_of(4), PARAMS,
                               random.Random(0))
    # piece 4 sits above piece 7, so its sides are traversed first
    assert rec2.edges == (edge("TB", 1, 4),)


def test_recommended_edges_never_sit_in_the_target_layout():
    e = edge("LR", 0, 1)
    solution = connect(PartialSolution.initial(9), e)
    g = graph_of({"me": PlayerTraces(solution, RejectedEdgeSet()),
                  "other": holding([e])})
    rec = responsive_feedback("me", solution, RejectedEdgeSet(), g,
                              solution.component_of(0), PARAMS,
                              random.Random(0))
    assert rec is None or all(not solution.has_edge(x) for x in rec.edges)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_connecting_actions_always_apply_cleanly(seed):
    rng = random.Random(seed)
    players = {}
    for i in range(2):
        sol, rej = random_walk(seed * 7 + i, 3, 3, validate=False)
        players[f"p{i}"] = PlayerTraces(sol, rej)
    g = graph_of(players)
    target_sol, target_rej = random_walk(seed * 7 + 5, 3, 3, validate=False)
    seen = set()
    for piece in range(9):
        comp = target_sol.component_of(piece)
        anchor = min(comp.pieces)
        if anchor in seen:
            continue
        seen.add(anchor)
        rec = responsive_feedback("t", target_sol, target_rej, g, comp,
                                  PARAMS, rng)
        if rec is None:
            continue
        assert all(not target_sol.has_edge(x) for x in rec.edges)
        if rec.mode == CONNECTING_ACTION:
            assert rec.edges[0] not in target_rej
            assert_valid_state(connect(target_sol, rec.edges[0]), 9)


def test_same_seed_reproduces_the_hint():
    g = graph_of({"p": holding([edge("LR", 1, 0)]),
                  "q": holding([edge("LR", 2, 0)]),
                  "r": holding([edge("TB", 3, 0)]),
                  "s": holding([edge("TB", 4, 0)])})
    solution, rejected = fresh()

    def run(seed):
        return responsive_feedback("me", solution, rejected, g,
                                   solution.component_of(0), PARAMS,
                                   random.Random(seed))

    assert run(9) == run(9)


# ------------------------------------------------------------- best buddies

def test_mutual_singleton_sets_make_a_best_buddy():
    e = edge("LR", 0, 1)
    g = graph_of({"A": holding([e])})
    target = PartialSolution.initial(9)
    assert best_buddy_edges(target, g, PARAMS) == [e]


def test_contested_side_breaks_best_buddy_status():
    g = graph_of({"A": holding([edge("LR", 0, 1)]),
                  "B": holding([edge("LR", 2, 1)])})
    target = PartialSolution.initial(9)
    assert best_buddy_edges(target, g, PARAMS) == []


def test_edges_already_held_are_not_buddies():
    e = edge("LR", 0, 1)
    g = graph_of({"A": holding([e])})
    target = connect(PartialSolution.initial(9), e)
    assert best_buddy_edges(target, g, PARAMS) == []


def test_buddies_come_back_in_key_order():
    held = [edge("TB", 2, 5), edge("LR", 0, 1), edge("TB", 0, 3)]
    g = graph_of({"A": holding(held)})
    target = PartialSolution.initial(9)
    out = best_buddy_edges(target, g, PARAMS)
    assert out == sorted(out, key=lambda e: e.key())
    assert set(out) == set(held)


# ------------------------------------------------------- stimulative policy

def test_single_addable_buddy_becomes_connecting_action():
    e = edge("LR", 0, 1)
    g = graph_of({"A": holding([e])})
    solution, rejected = fresh()
    rec = stimulative_feedback("me", solution, rejected, g, PARAMS,
                               random.Random(0))
    assert rec.mode == CONNECTING_ACTION
    assert rec.edges == (e,)
    assert rec.policy == STIMULATIVE
    assert rec.version == g.version


def test_conflicting_buddies_arrive_as_a_hint():
    e = edge("LR", 0, 1)
    g = graph_of({"A": holding([e])})
    # the target's right side of 0 is already taken by a different join
    solution = connect(PartialSolution.initial(9), edge("LR", 0, 2))
    rec = stimulative_feedback("me", solution, RejectedEdgeSet(), g, PARAMS,
                               random.Random(0))
    assert rec.mode == EDGE_HINT
    assert rec.edges == (e,)


def test_rejected_buddy_is_hinted_not_forced():
    e = edge("LR", 0, 1)
    g = graph_of({"A": holding([e])})
    solution = PartialSolution.initial(9)
    rejected = RejectedEdgeSet().record([e], 2)
    rec = stimulative_feedback("me", solution, rejected, g, PARAMS,
                               random.Random(0))
    assert rec.mode == EDGE_HINT
    assert rec.edges == (e,)


def test_no_buddies_means_no_nudge():
    g = CollectiveOpinionGraph()
    solution, rejected = fresh()
    assert stimulative_feedback("me", solution, rejected, g, PARAMS,
                                random.Random(0)) is None


def test_stimulative_choice_is_seed_deterministic():
    held = [edge("LR", 0, 1), edge("TB", 2, 5), edge("TB", 6, 3)]
    g = graph_of({"A": holding(held)})
    solution, rejected = fresh()

    def run(seed):
        return stimulative_feedback("me", solution, rejected, g, PARAMS,
                                    random.Random(seed))

    assert run(5) == run(5)
    picked = {run(s).edges[0] for s in range(12)}
    assert picked <= set(held)
    assert len(picked) > 1  # the shuffle actually varies with the seed


# ---------------------------------------------------------------- stagnation

def test_stagnation_thresholds():
    cfg = StagnationConfig(period=30.0)
    assert detect_stagnation({"p": 0.0}, 40.0, cfg, set()) == ["p"]
    assert detect_stagnation({"p": 30.0}, 40.0, cfg, set()) == []
    assert detect_stagnation({"p": 10.0}, 40.0, cfg, set()) == ["p"]
    assert detect_stagnation({"p": 0.0}, 40.0, cfg, {"p"}) == []
    assert detect_stagnation({"p": 0.0, "q": 35.0}, 40.0, cfg, set()) == ["p"]


def test_stagnation_config_must_be_positive():
    with pytest.raises(ValueError):
        StagnationConfig(period=0.0)


def test_tracker_fires_once_per_quiet_episode():
    tracker = StagnationTracker(StagnationConfig(period=30.0))
    tracker.note_change("p", 0.0)
    assert tracker.due(29.9) == []
    assert tracker.due(30.0) == ["p"]
    tracker.mark_fired("p")
    assert tracker.due(100.0) == []
    tracker.note_change("p", 100.0)  # new activity re-arms the nudge
    assert tracker.due(129.0) == []
    assert tracker.due(130.0) == ["p"]


def test_tracker_deadline_and_forget():
    tracker = StagnationTracker(StagnationConfig(period=10.0))
    assert tracker.next_deadline("p") is None
    tracker.note_change("p", 5.0)
    assert tracker.last_change("p") == 5.0
    assert tracker.next_deadline("p") == 15.0
    tracker.mark_fired("p")
    assert tracker.next_deadline("p") is None
    tracker.forget("p")
    assert tracker.last_change("p") is None
    assert tracker.due(1000.0) == []


def test_tracker_orders_due_players_by_name():
    tracker = StagnationTracker(StagnationConfig(period=1.0))
    tracker.note_change("zed", 0.0)
    tracker.note_change("amy", 0.5)
    assert tracker.due(5.0) == ["amy", "zed"]
