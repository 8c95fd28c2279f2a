/** In-process stand-in for the voting service, faithful to its semantics:
 * one vote per (task, voter) with overwrite, completion at min_votes, and
 * next-task selection that skips tasks the voter already judged. */

import { FetchLike } from "../src/api.js";

export interface FakeOptions {
  minVotes?: number;
  choices?: string[];
  /** Reject votes on already-complete tasks with counted=false (the
   * "stale task" server policy). */
  freezeComplete?: boolean;
  /** Make the next N requests fail as network errors. */
  failNextRequests?: number;
}

export class FakeVotingServer {
  readonly minVotes: number;
  readonly choices: string[];
  private votes = new Map<string, Map<string, string>>(); // task -> voter -> choice
  private taskIds: string[];
  private failBudget: number;
  votePosts = 0;

  constructor(taskIds: string[], options: FakeOptions = {}) {
    this.taskIds = [...taskIds].sort();
    this.minVotes = options.minVotes ?? 3;
    this.choices = options.choices ?? ["wolf", "nothing"];
    this.freezeComplete = options.freezeComplete ?? false;
    this.failBudget = options.failNextRequests ?? 0;
    for (const id of this.taskIds) this.votes.set(id, new Map());
  }

  private freezeComplete: boolean;

  failNextRequests(n: number): void {
    this.failBudget = n;
  }

  counts(taskId: string): Record<string, number> {
    const byVoter = this.votes.get(taskId)!;
    const out: Record<string, number> = {};
    for (const choice of byVoter.values()) {
      out[choice] = (out[choice] ?? 0) + 1;
    }
    return out;
  }

  totalVotes(taskId: string): number {
    return this.votes.get(taskId)!.size;
  }

  isComplete(taskId: string): boolean {
    return this.totalVotes(taskId) >= this.minVotes;
  }

  fractions(taskId: string): Record<string, number> {
    const total = this.totalVotes(taskId);
    const out: Record<string, number> = {};
    for (const [choice, n] of Object.entries(this.counts(taskId))) {
      out[choice] = n / total;
    }
    return out;
  }

  progress() {
    const complete = this.taskIds.filter((t) => this.isComplete(t)).length;
    return {
      total: this.taskIds.length,
      complete,
      incomplete: this.taskIds.length - complete,
    };
  }

  private nextFor(voter: string) {
    const open = this.taskIds.filter(
      (t) => !this.isComplete(t) && !this.votes.get(t)!.has(voter)
    );
    if (open.length === 0) {
      return { done: true as const, progress: this.progress() };
    }
    open.sort(
      (a, b) => this.totalVotes(a) - this.totalVotes(b) || (a < b ? -1 : 1)
    );
    return {
      done: false as const,
      task_id: open[0],
      image_url: `/api/images/${open[0].replace(/^t_/, "")}`,
      choices: [...this.choices],
      progress: this.progress(),
    };
  }

  private recordVote(voter: string, taskId: string, choice: string) {
    if (!this.votes.has(taskId)) {
      return { status: 404, body: { detail: `no task '${taskId}'` } };
    }
    if (!this.choices.includes(choice)) {
      return { status: 400, body: { detail: `'${choice}' is not a choice` } };
    }
    let counted = true;
    if (this.freezeComplete && this.isComplete(taskId)) {
      counted = false;
    } else {
      this.votes.get(taskId)!.set(voter, choice);
    }
    return {
      status: 200,
      body: {
        counted,
        task_id: taskId,
        total_votes: this.totalVotes(taskId),
        complete: this.isComplete(taskId),
      },
    };
  }

  /** A fetch-compatible function bound to one voter session (one cookie). */
  clientFor(voter: string): FetchLike {
    return async (input: string, init?: RequestInit) => {
      if (this.failBudget > 0) {
        this.failBudget -= 1;
        throw new TypeError("fetch failed: connection refused");
      }
      const url = new URL(input, "http://fake");
      let result: { status: number; body: unknown };
      if (url.pathname === "/api/tasks/next") {
        result = { status: 200, body: this.nextFor(voter) };
      } else if (url.pathname === "/api/votes" && init?.method === "POST") {
        this.votePosts += 1;
        const payload = JSON.parse(String(init.body));
        result = this.recordVote(voter, payload.task_id, payload.choice);
      } else if (url.pathname === "/api/progress") {
        result = { status: 200, body: this.progress() };
      } else {
        result = { status: 404, body: { detail: "no such endpoint" } };
      }
      return new Response(JSON.stringify(result.body), {
        status: result.status,
        headers: { "Content-Type": "application/json" },
      });
    };
  }
}
