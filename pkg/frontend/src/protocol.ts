/** Wire-protocol types and a small fetch client for the orchestrator.
 *
 * The console is a zero-authority client: everything it shows comes out of
 * these responses, so the types here mirror the server payloads exactly.
 */

export interface ProblemSummary {
  problem_id: string;
  task: string;
  app: string;
  namespace: string;
  focus: string;
}

export interface SessionStart {
  session_id: string;
  problem_id: string;
  task: string;
  budget: number;
  action_latency_ms: number;
  briefing: string;
}

export interface ActionResult {
  observation: string;
  error: boolean;
  sim_time_ms: number;
}

export interface TranscriptHeader {
  problem_id: string;
  task: string;
  briefing: string;
}

export interface TranscriptRecord {
  thought: string;
  action: { api: string; args: Record<string, unknown> };
  observation: { text: string; error: boolean };
  sim_time_ms: number;
}

export interface EvaluationReport {
  problem_id: string;
  task: string;
  success: boolean;
  ttd_ms: number | null;
  ttm_ms: number | null;
  interactions: number;
  cost_proxy_chars: number;
  sim_time_ms: number;
  detail: Record<string, unknown>;
  ground_truth: Record<string, unknown>;
}

/** A 4xx/5xx from the orchestrator, carrying the server's error text. */
export class ProtocolFailure extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = 'ProtocolFailure';
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function failureFrom(response: Response): Promise<ProtocolFailure> {
  let message = `${response.status} ${response.statusText}`;
  try {
    const body = await response.json();
    if (body && typeof body.error === 'string') message = body.error;
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ProtocolFailure(response.status, message);
}

export class Client {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetcher: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async requestJson<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { 'content-type': 'application/json' };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetcher(this.baseUrl + path, init);
    if (!response.ok) throw await failureFrom(response);
    return (await response.json()) as T;
  }

  listProblems(): Promise<{ problems: ProblemSummary[] }> {
    return this.requestJson('GET', '/problems');
  }

  startSession(problemId: string, budget?: number): Promise<SessionStart> {
    const body: Record<string, unknown> = { problem_id: problemId };
    if (budget !== undefined) body.budget = budget;
    return this.requestJson('POST', '/sessions', body);
  }

  act(
    sessionId: string,
    api: string,
    args: Record<string, unknown>,
    thought: string,
  ): Promise<ActionResult> {
    return this.requestJson('POST', `/sessions/${sessionId}/actions`, { api, args, thought });
  }

  submit(
    sessionId: string,
    solution: Record<string, unknown>,
    thought: string,
  ): Promise<EvaluationReport> {
    return this.requestJson('POST', `/sessions/${sessionId}/submit`, { solution, thought });
  }

  async transcript(sessionId: string): Promise<string> {
    const response = await this.fetcher(`${this.baseUrl}/sessions/${sessionId}/transcript`, {
      method: 'GET',
    });
    if (!response.ok) throw await failureFrom(response);
    return response.text();
  }

  report(sessionId: string): Promise<EvaluationReport> {
    return this.requestJson('GET', `/sessions/${sessionId}/report`);
  }
}
