/** The voting flow state machine, kept free of DOM specifics so it can be
 * driven headlessly in tests. The UI is stateless beyond the task on screen
 * and the session cookie: votes are never aggregated client-side. */

import { ApiClient, ApiError } from "./api.js";
import { TaskView } from "./types.js";

export type Phase = "loading" | "voting" | "submitting" | "done" | "error";

/** Everything the controller needs a rendering layer to do. */
export interface View {
  showLoading(): void;
  /** Render the crop and one button per choice, in server order. */
  showTask(task: TaskView): void;
  /** Disable/enable the choice buttons while a vote is in flight. */
  setSubmitting(submitting: boolean): void;
  /** Terminal screen once no open tasks remain for this voter. */
  showDone(progress: TaskView["progress"] | null): void;
  /** Network trouble: banner with a retry action, never a crash. */
  showRetryBanner(message: string): void;
  showToast(message: string): void;
}

export class VoteController {
  phase: Phase = "loading";
  current: TaskView | null = null;

  constructor(private api: ApiClient, private view: View) {}

  async start(): Promise<void> {
    await this.loadNext();
  }

  async loadNext(): Promise<void> {
    this.phase = "loading";
    this.view.showLoading();
    let response;
    try {
      response = await this.api.fetchNext();
    } catch (err) {
      this.phase = "error";
      this.current = null;
      this.view.showRetryBanner(describe(err));
      return;
    }
    if (response.done) {
      this.phase = "done";
      this.current = null;
      this.view.showDone(response.progress);
      return;
    }
    this.current = response;
    this.phase = "voting";
    this.view.showTask(response);
  }

  /** Submit a vote for the task on screen. Calls made while a vote is in
   * flight (double clicks) are ignored, so at most one request per task. */
  async vote(choice: string): Promise<void> {
    if (this.phase !== "voting" || !this.current) return;
    if (!this.current.choices.includes(choice)) return;
    const task = this.current;
    this.phase = "submitting";
    this.view.setSubmitting(true);
    try {
      await this.api.submitVote(task.task_id, choice);
      // Whether or not the server counted it (a task can complete while it
      // is on screen), the next task loads automatically.
    } catch (err) {
      if (err instanceof ApiError) {
        this.view.showToast(`vote rejected: ${err.message}`);
      } else {
        this.view.showToast(`vote failed: ${describe(err)}`);
      }
    } finally {
      this.view.setSubmitting(false);
    }
    await this.loadNext();
  }

  /** Digits 1..9 map to the choices in server order. */
  handleKey(key: string): void {
    if (this.phase !== "voting" || !this.current) return;
    const index = "123456789".indexOf(key);
    if (index >= 0 && index < this.current.choices.length) {
      void this.vote(this.current.choices[index]);
    }
  }

  async retry(): Promise<void> {
    if (this.phase === "error") {
      await this.loadNext();
    }
  }
}

function describe(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}
