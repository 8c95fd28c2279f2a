/** Real-DOM rendering for the voting flow. */

import { ApiClient } from "./api.js";
import { View } from "./controller.js";
import { TaskView } from "./types.js";

export interface Handlers {
  onChoice(choice: string): void;
  onRetry(): void;
}

export function createDomView(
  root: HTMLElement,
  api: ApiClient,
  handlers: Handlers
): View {
  root.innerHTML = `
    <header>
      <h1>What do you see?</h1>
      <span class="progress" aria-live="polite"></span>
    </header>
    <div class="banner" role="alert" hidden>
      <span class="banner-text"></span>
      <button type="button" class="retry">Retry</button>
    </div>
    <main>
      <div class="stage"></div>
      <div class="choices" role="group" aria-label="Classification choices"></div>
    </main>
    <div class="toast" role="status" hidden></div>
  `;
  const stage = root.querySelector<HTMLElement>(".stage")!;
  const choicesBox = root.querySelector<HTMLElement>(".choices")!;
  const progressBox = root.querySelector<HTMLElement>(".progress")!;
  const banner = root.querySelector<HTMLElement>(".banner")!;
  const bannerText = root.querySelector<HTMLElement>(".banner-text")!;
  const toast = root.querySelector<HTMLElement>(".toast")!;
  root.querySelector<HTMLButtonElement>(".retry")!
    .addEventListener("click", () => handlers.onRetry());

  let toastTimer: ReturnType<typeof setTimeout> | undefined;

  function renderProgress(progress: TaskView["progress"] | null): void {
    progressBox.textContent = progress
      ? `${progress.complete} / ${progress.total} images reviewed`
      : "";
  }

  return {
    showLoading() {
      banner.hidden = true;
      stage.innerHTML = `<p class="hint">Loading next image…</p>`;
      choicesBox.innerHTML = "";
    },

    showTask(task: TaskView) {
      banner.hidden = true;
      renderProgress(task.progress);
      stage.innerHTML = "";
      const img = document.createElement("img");
      img.src = api.resolve(task.image_url);
      img.alt = "Camera-trap crop awaiting classification";
      img.className = "crop";
      stage.appendChild(img);

      choicesBox.innerHTML = "";
      task.choices.forEach((choice, i) => {
        const button = document.createElement("button");
        button.type = "button";
        const label = choice === "nothing" ? "Nothing from the listed" : choice;
        button.textContent = i < 9 ? `${label} (${i + 1})` : label;
        button.setAttribute("aria-label", `Classify as ${label}`);
        button.dataset.choice = choice;
        button.addEventListener("click", () => handlers.onChoice(choice));
        choicesBox.appendChild(button);
      });
    },

    setSubmitting(submitting: boolean) {
      choicesBox.querySelectorAll("button").forEach((b) => {
        b.disabled = submitting;
      });
    },

    showDone(progress) {
      renderProgress(progress);
      stage.innerHTML = `<p class="done">All done — every open image has
        your vote. Thank you!</p>`;
      choicesBox.innerHTML = "";
    },

    showRetryBanner(message: string) {
      bannerText.textContent = `Cannot reach the voting service (${message}).`;
      banner.hidden = false;
    },

    showToast(message: string) {
      toast.textContent = message;
      toast.hidden = false;
      if (toastTimer) clearTimeout(toastTimer);
      toastTimer = setTimeout(() => {
        toast.hidden = true;
      }, 2500);
    },
  };
}
