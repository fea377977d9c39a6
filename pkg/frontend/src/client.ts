/** Round-service connection: one socket, ordered request/response.
 *
 * The server answers every client message with exactly one welcome, ack,
 * or reject, in order, so a FIFO of pending operations pairs replies with
 * their requests.  Feedback and solved frames arrive unsolicited and are
 * routed to handlers; feedback older than the newest version seen is
 * dropped as stale.
 */

import {
  AckMsg,
  ClientMessage,
  FeedbackMsg,
  parseServerMessage,
  SolvedMsg,
  WelcomeMsg,
  WireEdge,
} from "./protocol.js";

/** The subset of the browser WebSocket surface the client needs; the
 *  `ws` package implements the same shape in Node.  Handler parameters
 *  are left loose so both event hierarchies satisfy the interface. */
export interface SocketLike {
  readyState: number;
  send(data: string): void;
  close(): void;
  onopen: ((ev?: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  onclose: ((ev?: any) => void) | null;
  onerror: ((ev?: any) => void) | null;
}

export class RejectError extends Error {
  readonly reason: string;

  constructor(reason: string) {
    super(`server rejected the operation: ${reason}`);
    this.reason = reason;
  }
}

export type ConnectionStatus = "connecting" | "open" | "closed";

interface Pending {
  resolve: (msg: WelcomeMsg | AckMsg) => void;
  reject: (err: Error) => void;
}

const SOCKET_OPEN = 1;

export class RoundClient {
  onFeedback: ((msg: FeedbackMsg) => void) | null = null;
  onSolved: ((msg: SolvedMsg) => void) | null = null;
  onStatus: ((status: ConnectionStatus) => void) | null = null;

  status: ConnectionStatus;
  lastAckSeq = 0;
  solved: SolvedMsg | null = null;

  private socket: SocketLike;
  private pending: Pending[] = [];
  private openWaiters: Array<() => void> = [];
  private lastFeedbackVersion = -1;

  constructor(socket: SocketLike) {
    this.socket = socket;
    this.status = socket.readyState === SOCKET_OPEN ? "open" : "connecting";
    socket.onopen = () => {
      this.status = "open";
      this.onStatus?.(this.status);
      for (const wake of this.openWaiters.splice(0)) wake();
    };
    socket.onmessage = (ev) => this.route(String(ev.data));
    const drop = () => {
      if (this.status === "closed") return;
      this.status = "closed";
      this.onStatus?.(this.status);
      for (const wake of this.openWaiters.splice(0)) wake();
      for (const p of this.pending.splice(0)) {
        p.reject(new Error("connection closed"));
      }
    };
    socket.onclose = drop;
    socket.onerror = drop;
  }

  /** Resolves once the socket is open (immediately if it already is). */
  ready(): Promise<void> {
    if (this.status === "open") return Promise.resolve();
    if (this.status === "closed") {
      return Promise.reject(new Error("connection closed"));
    }
    return new Promise((resolve) => this.openWaiters.push(resolve));
  }

  close(): void {
    this.socket.close();
  }

  join(roundId: string, token: string): Promise<WelcomeMsg> {
    return this.request({ type: "join", roundId, token }) as Promise<WelcomeMsg>;
  }

  connect(edge: WireEdge): Promise<AckMsg> {
    return this.request({ type: "connect", edge }) as Promise<AckMsg>;
  }

  disconnect(piece: number): Promise<AckMsg> {
    return this.request({ type: "disconnect", piece }) as Promise<AckMsg>;
  }

  acceptHint(edges: WireEdge[]): Promise<AckMsg> {
    return this.request({ type: "accept_hint", edges }) as Promise<AckMsg>;
  }

  heartbeat(): Promise<AckMsg> {
    return this.request({ type: "heartbeat" }) as Promise<AckMsg>;
  }

  private request(msg: ClientMessage): Promise<WelcomeMsg | AckMsg> {
    if (this.status !== "open") {
      return Promise.reject(new Error(`connection is ${this.status}`));
    }
    return new Promise((resolve, reject) => {
      this.pending.push({ resolve, reject });
      this.socket.send(JSON.stringify(msg));
    });
  }

  private route(raw: string): void {
    const msg = parseServerMessage(raw);
    if (msg === null) return;
    switch (msg.type) {
      case "welcome":
      case "ack": {
        if (msg.type === "ack") this.lastAckSeq = msg.seq;
        const head = this.pending.shift();
        head?.resolve(msg);
        break;
      }
      case "reject": {
        const head = this.pending.shift();
        head?.reject(new RejectError(msg.reason));
        break;
      }
      case "feedback": {
        if (msg.version < this.lastFeedbackVersion) return; // stale
        this.lastFeedbackVersion = msg.version;
        this.onFeedback?.(msg);
        break;
      }
      case "solved": {
        this.solved = msg;
        this.onSolved?.(msg);
        break;
      }
    }
  }
}
