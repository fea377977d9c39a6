"""Core domain model for collaborative jigsaw rounds.

Pieces are opaque integer ids.  A placement claim is a labeled directed
edge: <first, LR, second> says `second` sits immediately right of
`first`; <first, TB, second> says `second` sits immediately below
`first`.  A player's workspace is a partial solution: a set of
connected components that partition all pieces, where every component
carries a consistent relative coordinate map and is closed under
deduction (any adjacency implied by the coordinates is materialized as
an edge).

All types here are immutable values.  Operations are pure functions
returning new states; invalid operations raise instead of mutating.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple


class EdgeLabel(str, Enum):
    LR = "LR"  # second is the right-side neighbor of first
    TB = "TB"  # second is the bottom-side neighbor of first


# (row, col) offset from first to second, rows grow downward
_OFFSET = {EdgeLabel.LR: (0, 1), EdgeLabel.TB: (1, 0)}

# sides of a piece, in the fixed traversal order used by feedback
SIDES = ("L", "R", "T", "B")


@dataclass(frozen=True, order=True)
class LabeledEdge:
    """A directed neighbor claim between two distinct pieces."""

    label: EdgeLabel
    first: int
    second: int

    def __post_init__(self) -> None:
        if self.first == self.second:
            raise ValueError("edge endpoints must be distinct pieces")

    def offset(self) -> Tuple[int, int]:
        return _OFFSET[self.label]

    def key(self) -> Tuple[str, int, int]:
        return (self.label.value, self.first, self.second)


def edge(label: str | EdgeLabel, first: int, second: int) -> LabeledEdge:
    """Shorthand constructor, accepts "LR"/"TB" strings."""
    return LabeledEdge(EdgeLabel(label), first, second)


def all_edges(piece_count: int) -> Iterator[LabeledEdge]:
    """Every labeled edge over `piece_count` pieces (both labels, both orders)."""
    for label in (EdgeLabel.LR, EdgeLabel.TB):
        for a in range(piece_count):
            for b in range(piece_count):
                if a != b:
                    yield LabeledEdge(label, a, b)


class DeductionConflict(Exception):
    """Raised when an edge set admits no consistent injective coordinate map."""


class ConnectError(Exception):
    """A connect that would break the partial-solution invariants.

    reason is one of "side_occupied", "overlap", "same_label_loop".
    """

    def __init__(self, reason: str, msg: str = "") -> None:
        super().__init__(msg or reason)
        self.reason = reason


def _solve_coordinates(pieces: FrozenSet[int],
                       edges: FrozenSet[LabeledEdge]) -> Dict[int, Tuple[int, int]]:
    """Assign relative (row, col) coordinates from the edge constraints.

    Raises DeductionConflict if a piece would need two positions (a loop
    whose label arithmetic is inconsistent) or two pieces would share one
    cell.  Also rejects edge sets that do not span a single connected
    graph over `pieces`.
    """
    if not pieces:
        raise DeductionConflict("component must contain at least one piece")
    adj: Dict[int, List[Tuple[int, Tuple[int, int]]]] = {p: [] for p in pieces}
    for e in edges:
        if e.first not in adj or e.second not in adj:
            raise DeductionConflict(f"edge {e} leaves the piece set")
        dr, dc = e.offset()
        adj[e.first].append((e.second, (dr, dc)))
        adj[e.second].append((e.first, (-dr, -dc)))

    anchor = min(pieces)
    coords: Dict[int, Tuple[int, int]] = {anchor: (0, 0)}
    stack = [anchor]
    while stack:
        p = stack.pop()
        pr, pc = coords[p]
        for q, (dr, dc) in adj[p]:
            pos = (pr + dr, pc + dc)
            seen = coords.get(q)
            if seen is None:
                coords[q] = pos
                stack.append(q)
            elif seen != pos:
                raise DeductionConflict(
                    f"piece {q} pinned to both {seen} and {pos}")
    if len(coords) != len(pieces):
        raise DeductionConflict("edges do not connect all pieces of the component")

    occupied: Dict[Tuple[int, int], int] = {}
    for p, pos in coords.items():
        other = occupied.get(pos)
        if other is not None:
            raise DeductionConflict(f"pieces {other} and {p} overlap at {pos}")
        occupied[pos] = p

    # normalize so the top-left occupied cell is (0, 0); makes equal
    # components compare equal regardless of construction order
    min_r = min(r for r, _ in coords.values())
    min_c = min(c for _, c in coords.values())
    if (min_r, min_c) != (0, 0):
        coords = {p: (r - min_r, c - min_c) for p, (r, c) in coords.items()}
    return coords


def _implied_edges(coords: Mapping[int, Tuple[int, int]]) -> FrozenSet[LabeledEdge]:
    """All adjacencies present in the coordinate map."""
    cells = {pos: p for p, pos in coords.items()}
    out = set()
    for p, (r, c) in coords.items():
        right = cells.get((r, c + 1))
        if right is not None:
            out.add(LabeledEdge(EdgeLabel.LR, p, right))
        below = cells.get((r + 1, c))
        if below is not None:
            out.add(LabeledEdge(EdgeLabel.TB, p, below))
    return frozenset(out)


@dataclass(frozen=True)
class ConnectedComponent:
    """One rigid cluster of pieces with consistent relative coordinates.

    coords maps each piece to its (row, col) offset, normalized so the
    smallest occupied row and column are zero.  Derived fields are
    excluded from equality; two components are equal iff they hold the
    same pieces and edges.
    """

    pieces: FrozenSet[int]
    edges: FrozenSet[LabeledEdge]
    coords: Mapping[int, Tuple[int, int]] = field(compare=False, repr=False, default=None)  # type: ignore[assignment]
    cells: Mapping[Tuple[int, int], int] = field(compare=False, repr=False, default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.coords is None:
            object.__setattr__(self, "coords",
                               _solve_coordinates(self.pieces, self.edges))
        object.__setattr__(self, "cells",
                           {pos: p for p, pos in self.coords.items()})

    @staticmethod
    def singleton(piece: int) -> "ConnectedComponent":
        return ConnectedComponent(frozenset([piece]), frozenset(),
                                  coords={piece: (0, 0)})

    def is_singleton(self) -> bool:
        return len(self.pieces) == 1

    def side_open(self, piece: int, side: str) -> bool:
        """True when nothing occupies the neighbor cell at `side` of `piece`."""
        r, c = self.coords[piece]
        dr, dc = {"L": (0, -1), "R": (0, 1), "T": (-1, 0), "B": (1, 0)}[side]
        return (r + dr, c + dc) not in self.cells

    def degree(self, piece: int) -> int:
        return 4 - sum(1 for s in SIDES if self.side_open(piece, s))


def deduction_closure(component: ConnectedComponent) -> ConnectedComponent:
    """Add every edge implied by the component's coordinates.

    Idempotent.  Raises DeductionConflict only if the component's own
    edge set was inconsistent to begin with (cannot happen for values
    built through connect/disconnect).
    """
    implied = _implied_edges(component.coords)
    if implied == component.edges:
        return component
    return ConnectedComponent(component.pieces, implied, coords=component.coords)


def component_from_edges(pieces: Iterable[int],
                         edges: Iterable[LabeledEdge],
                         closed: bool = True) -> ConnectedComponent:
    """Build a component from raw sets, optionally closing it under deduction."""
    comp = ConnectedComponent(frozenset(pieces), frozenset(edges))
    return deduction_closure(comp) if closed else comp


@dataclass(frozen=True)
class PartialSolution:
    """A full partition of the pieces into connected components."""

    components: Tuple[ConnectedComponent, ...]
    _by_piece: Mapping[int, ConnectedComponent] = field(
        compare=False, repr=False, default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        by_piece: Dict[int, ConnectedComponent] = {}
        for comp in self.components:
            for p in comp.pieces:
                by_piece[p] = comp
        object.__setattr__(self, "_by_piece", by_piece)

    @staticmethod
    def initial(piece_count: int) -> "PartialSolution":
        return PartialSolution(tuple(
            ConnectedComponent.singleton(p) for p in range(piece_count)))

    @property
    def pieces(self) -> FrozenSet[int]:
        return frozenset(self._by_piece)

    def component_of(self, piece: int) -> ConnectedComponent:
        return self._by_piece[piece]

    def edges(self) -> FrozenSet[LabeledEdge]:
        out: set = set()
        for comp in self.components:
            out |= comp.edges
        return frozenset(out)

    def has_edge(self, e: LabeledEdge) -> bool:
        comp = self._by_piece.get(e.first)
        return comp is not None and e in comp.edges

    def _replace(self, drop: Sequence[ConnectedComponent],
                 add: Sequence[ConnectedComponent]) -> "PartialSolution":
        dropped = set(map(id, drop))
        kept = [c for c in self.components if id(c) not in dropped]
        kept.extend(add)
        kept.sort(key=lambda c: min(c.pieces))
        return PartialSolution(tuple(kept))


def connect(ps: PartialSolution, e: LabeledEdge) -> PartialSolution:
    """Join two components with edge `e` and close the merge under deduction.

    Raises ConnectError("side_occupied") if either attachment side is
    taken, ConnectError("overlap") if aligning the two components would
    place two pieces in one cell, and ConnectError("same_label_loop")
    if both endpoints already sit in one component at a mismatched
    offset (adding e would close an inconsistent cycle).  Connecting an
    edge the solution already holds is a no-op rejected as overlap-free
    "same_label_loop"-free duplicate: it raises ConnectError("duplicate").
    """
    ca = ps.component_of(e.first)
    cb = ps.component_of(e.second)
    dr, dc = e.offset()

    if ca is cb:
        if e in ca.edges:
            raise ConnectError("duplicate", f"{e} already present")
        ar, ac = ca.coords[e.first]
        br, bc = ca.coords[e.second]
        if (br, bc) == (ar + dr, ac + dc):
            # coordinates agree, so closure would already have added it
            raise ConnectError("duplicate", f"{e} implied but missing (corrupt state)")
        raise ConnectError("same_label_loop",
                           f"{e} closes an inconsistent cycle")

    side_a, side_b = ("R", "L") if e.label is EdgeLabel.LR else ("B", "T")
    if not ca.side_open(e.first, side_a):
        raise ConnectError("side_occupied",
                           f"piece {e.first} side {side_a} already taken")
    if not cb.side_open(e.second, side_b):
        raise ConnectError("side_occupied",
                           f"piece {e.second} side {side_b} already taken")

    # align cb so that e.second lands next to e.first
    ar, ac = ca.coords[e.first]
    br, bc = cb.coords[e.second]
    shift_r = ar + dr - br
    shift_c = ac + dc - bc
    moved = {p: (r + shift_r, c + shift_c) for p, (r, c) in cb.coords.items()}
    for pos in moved.values():
        if pos in ca.cells:
            raise ConnectError("overlap",
                               f"cell {pos} occupied in both components")

    coords = dict(ca.coords)
    coords.update(moved)
    merged = ConnectedComponent(
        ca.pieces | cb.pieces,
        _implied_edges(coords) | frozenset([e]),
        coords=_normalize(coords))
    return ps._replace((ca, cb), (merged,))


def _normalize(coords: Dict[int, Tuple[int, int]]) -> Dict[int, Tuple[int, int]]:
    min_r = min(r for r, _ in coords.values())
    min_c = min(c for _, c in coords.values())
    if (min_r, min_c) == (0, 0):
        return coords
    return {p: (r - min_r, c - min_c) for p, (r, c) in coords.items()}


def disconnect(ps: PartialSolution, piece: int
               ) -> Tuple[PartialSolution, FrozenSet[LabeledEdge], int]:
    """Pull one piece out of its component.

    Returns (new solution, removed edges, context size) where context
    size is the edge count of the component the piece was pulled from,
    measured before removal.  Detaching a piece that is already alone
    returns the solution unchanged with no removed edges and context 0.
    """
    comp = ps.component_of(piece)
    if comp.is_singleton():
        return ps, frozenset(), 0

    removed = frozenset(e for e in comp.edges
                        if e.first == piece or e.second == piece)
    context = len(comp.edges)
    rest_pieces = comp.pieces - {piece}
    rest_edges = comp.edges - removed

    # split the remainder into connected fragments; fragments of a closed
    # component stay closed, so no re-closure pass is needed
    adj: Dict[int, List[int]] = {p: [] for p in rest_pieces}
    for e in rest_edges:
        adj[e.first].append(e.second)
        adj[e.second].append(e.first)
    unseen = set(rest_pieces)
    fragments: List[ConnectedComponent] = []
    while unseen:
        start = unseen.pop()
        group = {start}
        stack = [start]
        while stack:
            p = stack.pop()
            for q in adj[p]:
                if q in unseen:
                    unseen.discard(q)
                    group.add(q)
                    stack.append(q)
        fragments.append(ConnectedComponent(
            frozenset(group),
            frozenset(e for e in rest_edges
                      if e.first in group and e.second in group),
            coords=_normalize({p: comp.coords[p] for p in group})))
    fragments.append(ConnectedComponent.singleton(piece))
    return ps._replace((comp,), tuple(fragments)), removed, context


@dataclass(frozen=True)
class RejectedEdgeSet:
    """Edges a player once held and later removed.

    Each edge maps to the edge count of the component it was last
    removed from; a later removal of the same edge overwrites the
    earlier record.
    """

    entries: Mapping[LabeledEdge, int] = field(default_factory=dict)

    def __contains__(self, e: LabeledEdge) -> bool:
        return e in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def context(self, e: LabeledEdge) -> int:
        return self.entries[e]

    def record(self, removed: Iterable[LabeledEdge], context: int
               ) -> "RejectedEdgeSet":
        merged = dict(self.entries)
        for e in removed:
            merged[e] = context
        return RejectedEdgeSet(merged)

    def without(self, edges: Iterable[LabeledEdge]) -> "RejectedEdgeSet":
        drop = set(edges) & set(self.entries)
        if not drop:
            return self
        return RejectedEdgeSet(
            {e: n for e, n in self.entries.items() if e not in drop})


def reject_record(rs: RejectedEdgeSet, removed: Iterable[LabeledEdge],
                  context: int) -> RejectedEdgeSet:
    """Record removed edges with the context size of their old component."""
    return rs.record(removed, context)


@dataclass(frozen=True)
class CandidateSolution:
    """A complete arrangement: an M x N grid of piece ids."""

    grid: Tuple[Tuple[int, ...], ...]

    @property
    def rows(self) -> int:
        return len(self.grid)

    @property
    def cols(self) -> int:
        return len(self.grid[0]) if self.grid else 0

    def induced_edges(self) -> FrozenSet[LabeledEdge]:
        out = set()
        for r in range(self.rows):
            for c in range(self.cols):
                if c + 1 < self.cols:
                    out.add(LabeledEdge(EdgeLabel.LR,
                                        self.grid[r][c], self.grid[r][c + 1]))
                if r + 1 < self.rows:
                    out.add(LabeledEdge(EdgeLabel.TB,
                                        self.grid[r][c], self.grid[r + 1][c]))
        return frozenset(out)


def validate_candidate(sol: CandidateSolution, rows: int, cols: int) -> bool:
    """True iff `sol` is an `rows` x `cols` bijective arrangement of pieces 0..n-1."""
    if sol.rows != rows or any(len(row) != cols for row in sol.grid):
        return False
    flat = [p for row in sol.grid for p in row]
    return sorted(flat) == list(range(rows * cols))


@dataclass(frozen=True)
class PuzzleSpec:
    """Server-side description of one puzzle instance.

    solution is the ground-truth arrangement; it is never shipped to
    players.  Piece ids are shuffled into the grid with the round seed,
    so an id carries no positional information.
    """

    rows: int
    cols: int
    solution: CandidateSolution

    def __post_init__(self) -> None:
        if self.rows * self.cols < 2:
            raise ValueError("a puzzle needs at least two pieces")
        if not validate_candidate(self.solution, self.rows, self.cols):
            raise ValueError("solution is not a bijective grid")

    @property
    def piece_count(self) -> int:
        return self.rows * self.cols

    @property
    def edge_total(self) -> int:
        # straight from the grid structure: N*(M-1) + M*(N-1)
        return 2 * self.rows * self.cols - self.rows - self.cols

    def ground_truth(self) -> FrozenSet[LabeledEdge]:
        return self.solution.induced_edges()

    @staticmethod
    def shuffled(rows: int, cols: int, seed) -> "PuzzleSpec":
        import random as _random
        ids = list(range(rows * cols))
        _random.Random(seed).shuffle(ids)
        grid = tuple(tuple(ids[r * cols + c] for c in range(cols))
                     for r in range(rows))
        return PuzzleSpec(rows, cols, CandidateSolution(grid))


def is_solved(ps: PartialSolution, spec: PuzzleSpec) -> bool:
    """True when the solution is one component matching the ground truth."""
    if len(ps.components) != 1:
        return False
    return ps.components[0].edges == spec.ground_truth()
