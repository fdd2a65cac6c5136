/** Typed client for the workbench HTTP API.
 *
 * Every method maps to one endpoint and returns the parsed JSON payload.
 * Non-2xx responses raise `ApiError` carrying the HTTP status and the
 * server's `detail` message, so callers can surface 404/409/422 inline
 * instead of crashing.
 */

export interface StoneView {
  stone: number;
  percept: number[];
  latent: number[];
  reward: number;
  deposited: boolean;
}

export interface HueCount {
  hue: number;
  name: string;
  count: number;
}

export interface PotionsView {
  by_hue: HueCount[];
  total: number;
}

export interface StateView {
  trial: number;
  step_in_trial: number;
  stones: StoneView[];
  potions: PotionsView;
}

export interface ActionView {
  index: number;
  kind: string;
  stone: number | null;
  hue: number | null;
  slot: number | null;
  valid: boolean;
  null_cause: string | null;
}

export interface BeliefView {
  /** P(edge e present), 12 entries in canonical edge order. */
  edge_prob: number[];
  /** P(hue h moves axis a toward bit d), indexed [hue][axis][dirbit]. */
  potion_dir_prob: number[][][];
  plus15_percept_prob: number[];
  support_size: number;
}

export interface TraceSummary {
  id: string;
  policy: string;
  seed: number;
  n_steps: number;
  score: number;
  trials: number;
  flags: Record<string, unknown>;
  has_belief: boolean;
}

export interface TraceHeader {
  id: string;
  policy: string;
  seed: number;
  env: Record<string, unknown>;
  chemistry: Record<string, unknown>;
  flags: Record<string, unknown>;
  n_steps: number;
  score: number;
  trial_deposits: number[];
  has_belief: boolean;
}

export interface StepPayload {
  t: number;
  trial: number;
  step: number;
  /** State before the recorded action was taken. */
  state: StateView;
  action: ActionView;
  env_reward: number;
  shaping_reward: number;
  score_after: number;
  belief?: BeliefView;
}

export interface SessionView {
  id: string;
  mode: string;
  seed: number;
  done: boolean;
  cursor: number;
  score: number;
  state: StateView;
  n_actions: number;
}

export interface ActionResult {
  cursor: number;
  action: ActionView;
  env_reward: number;
  shaping_reward: number;
  score: number;
  done: boolean;
  state: StateView;
  belief: BeliefView;
}

export interface CreateSessionBody {
  seed: number;
  mode?: string;
  trials_per_episode?: number;
  missing_edges?: number[];
}

export class ApiError extends Error {
  constructor(readonly status: number, readonly detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseOrThrow<T>(resp: Response): Promise<T> {
  if (resp.ok) {
    return (await resp.json()) as T;
  }
  let detail = resp.statusText;
  try {
    const body = (await resp.json()) as { detail?: unknown };
    if (body && body.detail !== undefined) {
      detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
    }
  } catch {
    // non-JSON error body: keep the status text
  }
  throw new ApiError(resp.status, detail);
}

export class Client {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private get(path: string): Promise<Response> {
    return this.fetchFn(this.baseUrl + path);
  }

  private post(path: string, body: unknown): Promise<Response> {
    return this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async listTraces(): Promise<TraceSummary[]> {
    return parseOrThrow(await this.get("/api/traces"));
  }

  async getTrace(id: string): Promise<TraceHeader> {
    return parseOrThrow(await this.get(`/api/traces/${id}`));
  }

  async getStep(id: string, t: number): Promise<StepPayload> {
    return parseOrThrow(await this.get(`/api/traces/${id}/steps/${t}`));
  }

  async createSession(body: CreateSessionBody): Promise<SessionView> {
    return parseOrThrow(await this.post("/api/sessions", body));
  }

  async getSession(id: string): Promise<SessionView> {
    return parseOrThrow(await this.get(`/api/sessions/${id}`));
  }

  /** Post an explicit action index, or `null` to let the session's policy pick. */
  async postAction(id: string, action: number | null): Promise<ActionResult> {
    return parseOrThrow(await this.post(`/api/sessions/${id}/actions`, { action }));
  }

  async getBelief(id: string): Promise<BeliefView> {
    return parseOrThrow(await this.get(`/api/sessions/${id}/belief`));
  }
}
