/** Wire types of the voting service API. */

export interface Progress {
  total: number;
  complete: number;
  incomplete: number;
}

/** One reviewable crop, as served by GET /api/tasks/next. */
export interface TaskView {
  task_id: string;
  image_url: string;
  /** Server-provided order; always ends with the "nothing" option. */
  choices: string[];
  progress: Progress;
}

export type NextResponse =
  | { done: true; progress: Progress }
  | ({ done: false } & TaskView);

export interface VoteResponse {
  counted: boolean;
  task_id: string;
  total_votes: number;
  complete: boolean;
}
