/** Typed client for the labeling service HTTP API. */

export interface TaskPayload {
  task_id: number;
  pair: { r_id: string; s_id: string };
  r_attributes: [string, string][];
  s_attributes: [string, string][];
  provenance: string;
  status: string;
}

export interface BudgetInfo {
  consumed: number;
  remaining: number | null;
  hard_cap?: number | null;
}

export interface RunStatusPayload {
  chunk: number;
  iteration: number;
  f1_history: number[];
  budget: BudgetInfo;
}

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let message = `HTTP ${resp.status}`;
  try {
    const body = (await resp.json()) as { error?: string };
    if (body.error) message = body.error;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(message, resp.status);
}

export class LabelingApi {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  async tasks(limit?: number): Promise<TaskPayload[]> {
    const query = limit === undefined ? "" : `?limit=${limit}`;
    const resp = await this.fetchFn(`${this.base}/api/tasks${query}`);
    if (!resp.ok) throw await parseError(resp);
    const body = (await resp.json()) as { tasks: TaskPayload[] };
    return body.tasks;
  }

  async submit(taskId: number, label: 0 | 1): Promise<BudgetInfo> {
    const resp = await this.fetchFn(`${this.base}/api/labels`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ task_id: taskId, label }),
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as BudgetInfo;
  }

  async status(): Promise<RunStatusPayload> {
    const resp = await this.fetchFn(`${this.base}/api/status`);
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as RunStatusPayload;
  }
}
