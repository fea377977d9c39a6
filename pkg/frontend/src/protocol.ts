/** Wire protocol spoken by the round service: message shapes and parsing. */

export type EdgeLabel = "LR" | "TB";

/** A neighboring claim between two pieces: LR puts `second` to the right
 *  of `first`, TB puts `second` below `first`. */
export interface WireEdge {
  label: EdgeLabel;
  first: number;
  second: number;
}

export function edgeKey(e: WireEdge): string {
  return `${e.label}:${e.first}:${e.second}`;
}

/** Grid offset (rowDelta, colDelta) from `first` to `second`. */
export function edgeOffset(label: EdgeLabel): [number, number] {
  return label === "LR" ? [0, 1] : [1, 0];
}

export interface ManifestPiece {
  id: number;
  asset: string;
  width: number;
  height: number;
}

export interface Manifest {
  round_id: string;
  rows: number;
  cols: number;
  piece_width: number;
  piece_height: number;
  pieces: ManifestPiece[];
  display_order: number[];
}

// client -> server

export interface JoinMsg {
  type: "join";
  roundId: string;
  token: string;
}

export interface ConnectMsg {
  type: "connect";
  edge: WireEdge;
}

export interface DisconnectMsg {
  type: "disconnect";
  piece: number;
}

export interface AcceptHintMsg {
  type: "accept_hint";
  edges: WireEdge[];
}

export interface HeartbeatMsg {
  type: "heartbeat";
}

export type ClientMessage =
  | JoinMsg
  | ConnectMsg
  | DisconnectMsg
  | AcceptHintMsg
  | HeartbeatMsg;

// server -> client

export interface WelcomeMsg {
  type: "welcome";
  round_id: string;
  player: string;
  seq: number;
  manifest: Manifest;
}

export interface AckMsg {
  type: "ack";
  seq: number;
  op: string;
}

export interface RejectMsg {
  type: "reject";
  reason: string;
}

export type FeedbackMode = "connecting_action" | "edge_hint";
export type FeedbackPolicy = "responsive" | "stimulative";

export interface FeedbackMsg {
  type: "feedback";
  mode: FeedbackMode;
  policy: FeedbackPolicy;
  edges: WireEdge[];
  version: number;
}

export interface SolvedMsg {
  type: "solved";
  winner: string;
  cp: number;
}

export type ServerMessage =
  | WelcomeMsg
  | AckMsg
  | RejectMsg
  | FeedbackMsg
  | SolvedMsg;

const SERVER_TYPES = new Set(["welcome", "ack", "reject", "feedback", "solved"]);

/** Parse one frame off the socket; null for anything we do not understand
 *  (the server never sends such frames, but a client must not crash). */
export function parseServerMessage(raw: string): ServerMessage | null {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const type = (obj as { type?: unknown }).type;
  if (typeof type !== "string" || !SERVER_TYPES.has(type)) return null;
  return obj as ServerMessage;
}
