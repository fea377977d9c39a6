/** Local mirror of this player's server-side layout.
 *
 * The server is authoritative: the mirror only applies edges the server
 * has ack'd (or delivered as connecting-actions), so it never needs the
 * server's validation rules.  Components carry grid coordinates; the edge
 * set of a component is always exactly what its coordinates imply, which
 * keeps the mirror deduction-closed by construction.
 */

import { WireEdge, edgeOffset } from "./protocol.js";

export type Coord = readonly [number, number];

function cellKey(r: number, c: number): string {
  return `${r},${c}`;
}

export class MirrorDesync extends Error {}

export class LayoutMirror {
  readonly pieceCount: number;
  private compOf: number[];
  private comps = new Map<number, Map<number, Coord>>();
  private nextComp = 0;

  constructor(pieceCount: number) {
    if (pieceCount < 1) throw new Error("pieceCount must be positive");
    this.pieceCount = pieceCount;
    this.compOf = new Array(pieceCount);
    for (let p = 0; p < pieceCount; p++) {
      this.compOf[p] = this.nextComp;
      this.comps.set(this.nextComp, new Map([[p, [0, 0] as Coord]]));
      this.nextComp++;
    }
  }

  private comp(piece: number): Map<number, Coord> {
    const id = this.compOf[piece];
    const comp = id === undefined ? undefined : this.comps.get(id);
    if (comp === undefined) throw new MirrorDesync(`no component for ${piece}`);
    return comp;
  }

  /** Pieces grouped with `piece`, itself included. */
  componentPieces(piece: number): number[] {
    return [...this.comp(piece).keys()].sort((a, b) => a - b);
  }

  /** Copy of the component's coordinate map. */
  coordsOf(piece: number): Map<number, Coord> {
    return new Map(this.comp(piece));
  }

  isIsolated(piece: number): boolean {
    return this.comp(piece).size === 1;
  }

  /** True when the layout already implies this edge. */
  holds(e: WireEdge): boolean {
    if (this.compOf[e.first] !== this.compOf[e.second]) return false;
    const comp = this.comp(e.first);
    const a = comp.get(e.first)!;
    const b = comp.get(e.second)!;
    const [dr, dc] = edgeOffset(e.label);
    return b[0] - a[0] === dr && b[1] - a[1] === dc;
  }

  /** Every edge implied by every component (the deduction closure). */
  edges(): WireEdge[] {
    const out: WireEdge[] = [];
    for (const comp of this.comps.values()) {
      const byCell = new Map<string, number>();
      for (const [p, [r, c]] of comp) byCell.set(cellKey(r, c), p);
      for (const [p, [r, c]] of comp) {
        const right = byCell.get(cellKey(r, c + 1));
        if (right !== undefined) out.push({ label: "LR", first: p, second: right });
        const below = byCell.get(cellKey(r + 1, c));
        if (below !== undefined) out.push({ label: "TB", first: p, second: below });
      }
    }
    return out;
  }

  /** Apply a server-confirmed connect, merging the two components. */
  connect(e: WireEdge): void {
    const [dr, dc] = edgeOffset(e.label);
    const idA = this.compOf[e.first];
    const idB = this.compOf[e.second];
    if (idA === undefined || idB === undefined) {
      throw new MirrorDesync("edge names an unknown piece");
    }
    if (idA === idB) {
      // already implied by closure; anything else means we lost sync
      if (!this.holds(e)) throw new MirrorDesync(`conflicting edge ${e.label}`);
      return;
    }
    const compA = this.comps.get(idA)!;
    const compB = this.comps.get(idB)!;
    const a = compA.get(e.first)!;
    const b = compB.get(e.second)!;
    const tr = a[0] + dr - b[0];
    const tc = a[1] + dc - b[1];
    const occupied = new Set<string>();
    for (const [, [r, c]] of compA) occupied.add(cellKey(r, c));
    for (const [p, [r, c]] of compB) {
      const moved: Coord = [r + tr, c + tc];
      if (occupied.has(cellKey(moved[0], moved[1]))) {
        throw new MirrorDesync("components overlap");
      }
      compA.set(p, moved);
      this.compOf[p] = idA;
    }
    this.comps.delete(idB);
  }

  /** Apply a server-confirmed disconnect: the piece leaves its group and
   *  the remainder falls apart into its connected fragments. */
  disconnect(piece: number): void {
    const id = this.compOf[piece]!;
    const comp = this.comps.get(id)!;
    comp.delete(piece);
    this.comps.delete(id);

    this.compOf[piece] = this.nextComp;
    this.comps.set(this.nextComp, new Map([[piece, [0, 0] as Coord]]));
    this.nextComp++;

    const byCell = new Map<string, number>();
    for (const [p, [r, c]] of comp) byCell.set(cellKey(r, c), p);
    const unseen = new Set(comp.keys());
    while (unseen.size > 0) {
      const start: number = unseen.values().next().value!;
      const frag = new Map<number, Coord>();
      const queue = [start];
      unseen.delete(start);
      while (queue.length > 0) {
        const p = queue.pop()!;
        const [r, c] = comp.get(p)!;
        frag.set(p, [r, c]);
        for (const [nr, nc] of [[r, c + 1], [r, c - 1], [r + 1, c], [r - 1, c]]) {
          const q = byCell.get(cellKey(nr!, nc!));
          if (q !== undefined && unseen.has(q)) {
            unseen.delete(q);
            queue.push(q);
          }
        }
      }
      for (const p of frag.keys()) this.compOf[p] = this.nextComp;
      this.comps.set(this.nextComp, frag);
      this.nextComp++;
    }
  }
}
