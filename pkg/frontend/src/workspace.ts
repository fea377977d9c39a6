/** The visible puzzle table: free-floating piece sprites, drag-to-snap
 *  connecting, live feedback rendering.
 *
 * Moves are optimistic: a snapped piece sits in place while the connect
 * is in flight and slides back if the server rejects it.  The layout
 * mirror only changes on acks and connecting-actions, so it always equals
 * the server's view of this player after the last ack.
 */

import { LayoutMirror } from "./mirror.js";
import {
  edgeKey,
  edgeOffset,
  FeedbackMsg,
  Manifest,
  SolvedMsg,
  WireEdge,
} from "./protocol.js";
import { RejectError, RoundClient } from "./client.js";

export interface WorkspaceOptions {
  /** Prefix for piece asset URLs, e.g. "http://host/rounds/r1/pieces". */
  assetBase?: string;
  /** Snap distance as a share of the piece edge length. */
  snapRatio?: number;
}

export type DropResult =
  | { kind: "moved" }
  | { kind: "connected"; edge: WireEdge }
  | { kind: "rejected"; edge: WireEdge; reason: string };

interface Point {
  x: number;
  y: number;
}

interface ActiveHint {
  edge: WireEdge;
  color: string;
  pieces: [number, number];
  elements: [HTMLElement, HTMLElement];
}

interface DragState {
  piece: number;
  start: Map<number, Point>;
  grab: Point;
}

const HINT_PALETTE = [
  "#e6194b", "#3cb44b", "#ffe119", "#4363d8",
  "#f58231", "#911eb4", "#46f0f0", "#f032e6",
];

/** The two facing sides named by an edge: (first's side, second's side). */
function facingSides(e: WireEdge): ["R", "L"] | ["B", "T"] {
  return e.label === "LR" ? ["R", "L"] : ["B", "T"];
}

export class Workspace {
  readonly mirror: LayoutMirror;
  readonly board: HTMLElement;

  private readonly doc: Document;
  private readonly client: RoundClient;
  private readonly statusEl: HTMLElement;
  private readonly pieceW: number;
  private readonly pieceH: number;
  private readonly snapRatio: number;
  private readonly sprites = new Map<number, HTMLElement>();
  private readonly positions = new Map<number, Point>();
  private readonly hints = new Map<string, ActiveHint>();
  private drag: DragState | null = null;

  constructor(root: HTMLElement, manifest: Manifest, client: RoundClient,
              options: WorkspaceOptions = {}) {
    this.doc = root.ownerDocument;
    this.client = client;
    this.pieceW = manifest.piece_width;
    this.pieceH = manifest.piece_height;
    this.snapRatio = options.snapRatio ?? 0.25;

    this.board = this.doc.createElement("div");
    this.board.className = "board";
    this.statusEl = this.doc.createElement("div");
    this.statusEl.className = "status";
    root.appendChild(this.statusEl);
    root.appendChild(this.board);

    const assetBase = options.assetBase ?? "";
    const perRow = Math.ceil(Math.sqrt(manifest.pieces.length)) + 1;
    manifest.display_order.forEach((id, slot) => {
      const meta = manifest.pieces.find((p) => p.id === id);
      if (meta === undefined) throw new Error(`manifest misses piece ${id}`);
      const el = this.doc.createElement("div");
      el.className = "piece";
      el.dataset.piece = String(id);
      el.style.position = "absolute";
      el.style.width = `${meta.width}px`;
      el.style.height = `${meta.height}px`;
      if (assetBase) {
        el.style.backgroundImage = `url(${assetBase}/${meta.asset})`;
      }
      el.addEventListener("mousedown", (ev) => {
        const at = this.positions.get(id)!;
        this.beginDrag(id, { x: ev.clientX - at.x, y: ev.clientY - at.y });
      });
      el.addEventListener("dblclick", () => {
        void this.detach(id);
      });
      this.board.appendChild(el);
      this.sprites.set(id, el);
      // tray shuffle: generous spacing so nothing starts inside snap range
      this.positions.set(id, {
        x: 10 + (slot % perRow) * meta.width * 1.5,
        y: 10 + Math.floor(slot / perRow) * meta.height * 1.5,
      });
      this.paint(id);
    });

    this.board.addEventListener("mousemove", (ev) => {
      if (this.drag === null) return;
      this.dragMove(ev.clientX - this.drag.grab.x, ev.clientY - this.drag.grab.y);
    });
    this.board.addEventListener("mouseup", () => {
      void this.endDrag();
    });

    this.mirror = new LayoutMirror(manifest.pieces.length);
    client.onStatus = () => this.refreshStatus();
    this.refreshStatus();
  }

  pieceElement(piece: number): HTMLElement {
    const el = this.sprites.get(piece);
    if (el === undefined) throw new Error(`unknown piece ${piece}`);
    return el;
  }

  positionOf(piece: number): Point {
    const at = this.positions.get(piece);
    if (at === undefined) throw new Error(`unknown piece ${piece}`);
    return { ...at };
  }

  activeHintKeys(): string[] {
    return [...this.hints.keys()];
  }

  // -- dragging ------------------------------------------------------------

  beginDrag(piece: number, grab: Point = { x: 0, y: 0 }): void {
    const start = new Map<number, Point>();
    for (const p of this.mirror.componentPieces(piece)) {
      start.set(p, { ...this.positions.get(p)! });
    }
    this.drag = { piece, start, grab };
  }

  /** Move the dragged piece (and its whole group) to an absolute position. */
  dragMove(x: number, y: number): void {
    if (this.drag === null) return;
    const origin = this.drag.start.get(this.drag.piece)!;
    const dx = x - origin.x;
    const dy = y - origin.y;
    for (const [p, at] of this.drag.start) {
      this.setPiecePos(p, at.x + dx, at.y + dy);
    }
  }

  /** Drop the dragged group: either a plain canvas move, or, when the
   *  dragged piece lands on another group's side, a staged connect. */
  async endDrag(): Promise<DropResult> {
    const drag = this.drag;
    if (drag === null) return { kind: "moved" };
    this.drag = null;

    const candidate = this.findSnap(drag.piece);
    if (candidate === null) {
      this.refreshStatus();
      return { kind: "moved" };
    }
    const { edge, anchor, expected } = candidate;

    // optimistic: show the snapped position while the server decides
    const at = this.positions.get(drag.piece)!;
    const dx = expected.x - at.x;
    const dy = expected.y - at.y;
    for (const p of this.mirror.componentPieces(drag.piece)) {
      const cur = this.positions.get(p)!;
      this.setPiecePos(p, cur.x + dx, cur.y + dy);
    }

    try {
      await this.client.connect(edge);
    } catch (err) {
      if (err instanceof RejectError) {
        for (const [p, was] of drag.start) this.setPiecePos(p, was.x, was.y);
        const sprite = this.sprites.get(drag.piece)!;
        sprite.classList.add("rollback");
        this.refreshStatus();
        return { kind: "rejected", edge, reason: err.reason };
      }
      throw err;
    }
    this.mirror.connect(edge);
    this.realign(anchor);
    this.refreshStatus();
    return { kind: "connected", edge };
  }

  /** Convenience for scripted sessions: one full grab-move-release. */
  dragTo(piece: number, x: number, y: number): Promise<DropResult> {
    this.beginDrag(piece);
    this.dragMove(x, y);
    return this.endDrag();
  }

  /** Pull one piece out of its group (double-click gesture). */
  async detach(piece: number): Promise<boolean> {
    if (this.mirror.isIsolated(piece)) return false;
    try {
      await this.client.disconnect(piece);
    } catch (err) {
      if (err instanceof RejectError) return false;
      throw err;
    }
    this.mirror.disconnect(piece);
    const at = this.positions.get(piece)!;
    this.setPiecePos(piece, at.x + this.pieceW * 0.6, at.y + this.pieceH * 0.6);
    this.refreshStatus();
    return true;
  }

  // -- feedback ------------------------------------------------------------

  renderFeedback(msg: FeedbackMsg): void {
    if (msg.mode === "connecting_action") {
      for (const edge of msg.edges) {
        if (!this.mirror.holds(edge)) {
          this.mirror.connect(edge);
          this.realign(edge.first);
        }
        this.sprites.get(edge.first)?.classList.add("snap");
        this.sprites.get(edge.second)?.classList.add("snap");
      }
      this.refreshStatus();
      return;
    }
    for (const edge of msg.edges) this.addHint(edge);
  }

  markSolved(msg: SolvedMsg): void {
    this.board.classList.add("solved");
    this.statusEl.textContent = `solved by ${msg.winner}`;
  }

  // -- internals -------------------------------------------------------------

  private addHint(edge: WireEdge): void {
    const key = edgeKey(edge);
    if (this.hints.has(key)) return;
    const used = new Set([...this.hints.values()].map((h) => h.color));
    const color = HINT_PALETTE.find((c) => !used.has(c))
      ?? HINT_PALETTE[this.hints.size % HINT_PALETTE.length]!;
    const sides = facingSides(edge);
    const pieces: [number, number] = [edge.first, edge.second];
    const overlay = (piece: number, side: "L" | "R" | "T" | "B"): HTMLElement => {
      const el = this.doc.createElement("div");
      el.className = `hint-side hint-${side}`;
      el.dataset.hintKey = key;
      el.dataset.side = side;
      el.dataset.color = color;
      el.style.position = "absolute";
      el.style.backgroundColor = color;
      this.placeOverlay(el, side);
      this.sprites.get(piece)!.appendChild(el);
      return el;
    };
    const elements: [HTMLElement, HTMLElement] = [
      overlay(pieces[0], sides[0]),
      overlay(pieces[1], sides[1]),
    ];
    this.hints.set(key, { edge, color, pieces, elements });
  }

  private placeOverlay(el: HTMLElement, side: "L" | "R" | "T" | "B"): void {
    const thick = "18%";
    if (side === "L" || side === "R") {
      el.style.top = "0";
      el.style.height = "100%";
      el.style.width = thick;
      el.style[side === "L" ? "left" : "right"] = "0";
    } else {
      el.style.left = "0";
      el.style.width = "100%";
      el.style.height = thick;
      el.style[side === "T" ? "top" : "bottom"] = "0";
    }
  }

  /** A hint dies as soon as either of its pieces moves. */
  private clearHintsTouching(piece: number): void {
    for (const [key, hint] of [...this.hints]) {
      if (hint.pieces.includes(piece)) {
        for (const el of hint.elements) el.remove();
        this.hints.delete(key);
      }
    }
  }

  private setPiecePos(piece: number, x: number, y: number): void {
    const at = this.positions.get(piece)!;
    if (at.x === x && at.y === y) return;
    at.x = x;
    at.y = y;
    this.paint(piece);
    this.clearHintsTouching(piece);
  }

  private paint(piece: number): void {
    const el = this.sprites.get(piece)!;
    const at = this.positions.get(piece)!;
    el.style.left = `${at.x}px`;
    el.style.top = `${at.y}px`;
  }

  /** Reposition a whole group from its grid coordinates, keeping `anchor`
   *  where it is on the canvas. */
  private realign(anchor: number): void {
    const coords = this.mirror.coordsOf(anchor);
    const [ar, ac] = coords.get(anchor)!;
    const base = this.positions.get(anchor)!;
    for (const [p, [r, c]] of coords) {
      this.setPiecePos(p,
                       base.x + (c - ac) * this.pieceW,
                       base.y + (r - ar) * this.pieceH);
    }
  }

  /** Find the side, if any, the dragged piece is within snap range of. */
  private findSnap(piece: number
                   ): { edge: WireEdge; anchor: number; expected: Point } | null {
    const at = this.positions.get(piece)!;
    const tol = this.snapRatio * Math.min(this.pieceW, this.pieceH);
    const own = new Set(this.mirror.componentPieces(piece));
    let best: { edge: WireEdge; anchor: number; expected: Point } | null = null;
    let bestDist = Infinity;
    for (const [other, there] of this.positions) {
      if (own.has(other)) continue;
      const slots: Array<[WireEdge, Point]> = [
        [{ label: "LR", first: other, second: piece },
         { x: there.x + this.pieceW, y: there.y }],
        [{ label: "LR", first: piece, second: other },
         { x: there.x - this.pieceW, y: there.y }],
        [{ label: "TB", first: other, second: piece },
         { x: there.x, y: there.y + this.pieceH }],
        [{ label: "TB", first: piece, second: other },
         { x: there.x, y: there.y - this.pieceH }],
      ];
      for (const [edge, expected] of slots) {
        const dist = Math.hypot(at.x - expected.x, at.y - expected.y);
        if (dist <= tol && dist < bestDist) {
          best = { edge, anchor: other, expected };
          bestDist = dist;
        }
      }
    }
    return best;
  }

  private refreshStatus(): void {
    this.statusEl.textContent =
      `${this.client.status} · seq ${this.client.lastAckSeq}`;
  }
}
