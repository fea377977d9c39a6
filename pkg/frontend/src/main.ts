/** Browser entry point: join a round from the URL query and mount the
 *  workspace.  Example: index.html?round=r1&token=alice&server=host:8000
 */

import { RoundClient } from "./client.js";
import { Workspace } from "./workspace.js";

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const roundId = params.get("round");
  const token = params.get("token");
  const server = params.get("server") ?? window.location.host;
  const root = document.getElementById("app");
  if (root === null) throw new Error("missing #app element");
  if (roundId === null || token === null) {
    root.textContent = "pass ?round=<id>&token=<name> in the URL";
    return;
  }

  const client = new RoundClient(new WebSocket(`ws://${server}/ws`));
  await client.ready();
  const welcome = await client.join(roundId, token);
  const workspace = new Workspace(root, welcome.manifest, client, {
    assetBase: `http://${server}/rounds/${roundId}/pieces`,
  });
  client.onFeedback = (msg) => workspace.renderFeedback(msg);
  client.onSolved = (msg) => workspace.markSolved(msg);
}

void boot();
