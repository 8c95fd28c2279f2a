/** Thin fetch wrapper around the voting service endpoints. */

import { NextResponse, Progress, VoteResponse } from "./types.js";

export type FetchLike = (
  input: string,
  init?: RequestInit
) => Promise<Response>;

/** Raised for non-2xx responses so callers can distinguish a rejected vote
 * (e.g. unknown task after a restart) from a network failure. */
export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) =>
      fetch(input, { credentials: "include", ...init })
  ) {}

  /** Absolute URL for a server-relative path such as an image_url. */
  resolve(path: string): string {
    return this.baseUrl + path;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const body = await response.json();
        if (body && body.detail) detail = String(body.detail);
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  fetchNext(): Promise<NextResponse> {
    return this.request<NextResponse>("/api/tasks/next");
  }

  submitVote(taskId: string, choice: string): Promise<VoteResponse> {
    return this.request<VoteResponse>("/api/votes", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ task_id: taskId, choice }),
    });
  }

  progress(): Promise<Progress> {
    return this.request<Progress>("/api/progress");
  }
}
