/** Page bootstrap: wire the API client, controller, view, and keyboard. */

import { ApiClient } from "./api.js";
import { VoteController } from "./controller.js";
import { createDomView } from "./dom.js";

function apiBase(): string {
  // ?api=http://host:port overrides; same-origin by default (works when the
  // service mounts the built UI itself).
  const param = new URLSearchParams(window.location.search).get("api");
  return param ? param.replace(/\/$/, "") : "";
}

const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");

const api = new ApiClient(apiBase());
let controller: VoteController;
const view = createDomView(root, api, {
  onChoice: (choice) => void controller.vote(choice),
  onRetry: () => void controller.retry(),
});
controller = new VoteController(api, view);

document.addEventListener("keydown", (event) => {
  if (event.target instanceof HTMLElement) {
    const tag = event.target.tagName;
    if (tag === "INPUT" || tag === "TEXTAREA") return;
  }
  controller.handleKey(event.key);
});

void controller.start();
