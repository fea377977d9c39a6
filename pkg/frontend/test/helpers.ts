/** Shared test plumbing: a real server process, a scriptable fake socket,
 *  and small builders. */

import { ChildProcess, spawn } from "node:child_process";
import { mkdtemp, rm } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";

import type { SocketLike } from "../src/client.js";
import type { Manifest } from "../src/protocol.js";

export interface LiveServer {
  base: string;
  wsUrl: string;
  stop(): Promise<void>;
}

/** Spawn the round service on an ephemeral port and wait until it is up. */
export async function startServer(): Promise<LiveServer> {
  const dataDir = await mkdtemp(join(tmpdir(), "cogsaw-web-"));
  const child: ChildProcess = spawn(
    "cogsaw", ["serve", "--port", "0", "--data-dir", dataDir],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  const port = await new Promise<number>((resolve, reject) => {
    let log = "";
    const timer = setTimeout(
      () => reject(new Error(`server never reported its port:\n${log}`)),
      30_000);
    const watch = (chunk: Buffer) => {
      log += chunk.toString();
      const m = log.match(/running on http:\/\/127\.0\.0\.1:(\d+)/);
      if (m !== null) {
        clearTimeout(timer);
        resolve(Number(m[1]));
      }
    };
    child.stdout?.on("data", watch);
    child.stderr?.on("data", watch);
    child.once("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`server exited with ${code} before startup:\n${log}`));
    });
  });
  return {
    base: `http://127.0.0.1:${port}`,
    wsUrl: `ws://127.0.0.1:${port}/ws`,
    stop: async () => {
      const gone = new Promise((resolve) => child.once("exit", resolve));
      child.kill("SIGTERM");
      await gone;
      await rm(dataDir, { recursive: true, force: true });
    },
  };
}

export async function waitFor(cond: () => boolean, ms = 10_000,
                              step = 20): Promise<void> {
  const deadline = Date.now() + ms;
  while (!cond()) {
    if (Date.now() > deadline) throw new Error("condition never became true");
    await new Promise((resolve) => setTimeout(resolve, step));
  }
}

/** An in-memory socket the test scripts both ends of. */
export class FakeSocket implements SocketLike {
  readyState = 1;
  sent: string[] = [];
  onopen: SocketLike["onopen"] = null;
  onmessage: SocketLike["onmessage"] = null;
  onclose: SocketLike["onclose"] = null;
  onerror: SocketLike["onerror"] = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.readyState = 3;
    this.onclose?.();
  }

  receive(payload: object): void {
    this.onmessage?.({ data: JSON.stringify(payload) });
  }

  lastSent(): unknown {
    if (this.sent.length === 0) throw new Error("nothing was sent");
    return JSON.parse(this.sent[this.sent.length - 1]!);
  }
}

export function testManifest(rows: number, cols: number,
                             pieceSize = 40): Manifest {
  const count = rows * cols;
  return {
    round_id: "t",
    rows,
    cols,
    piece_width: pieceSize,
    piece_height: pieceSize,
    pieces: Array.from({ length: count }, (_, id) => ({
      id,
      asset: `piece_${id}.png`,
      width: pieceSize,
      height: pieceSize,
    })),
    display_order: Array.from({ length: count }, (_, i) => i),
  };
}

/** A fresh mount point in the jsdom document. */
export function mountRoot(): HTMLElement {
  document.body.innerHTML = '<div id="app"></div>';
  return document.getElementById("app")!;
}
