// Typed client for the session service. Every value the UI shows comes
// straight from these response payloads.

export interface CandidateRow {
  candidate_id: string;
  text: string;
  prob: number;
  v_coh_norm: number;
  v_cro_norm: number;
  adhesive: boolean | null;
}

export interface TurnResult {
  ranked: CandidateRow[];
  selected_id: string;
  response: string;
}

export interface SessionInfo {
  session_id: string;
  topic: string;
  m: number;
}

export interface TranscriptEntry {
  speaker: "user" | "agent";
  text: string;
}

export interface SessionSnapshot {
  session_id: string;
  topic: string;
  candidates: { id: string; text: string }[];
  transcript: TranscriptEntry[];
  selection_history: { turn: number; selected_id: string; overridden: boolean }[];
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseOrThrow<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      if (body && body.detail) detail = String(body.detail);
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async createSession(body: {
    topic?: string;
    candidates?: { id: string; text: string }[];
    episode_id?: string;
  }): Promise<SessionInfo> {
    const resp = await this.fetchFn(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return parseOrThrow<SessionInfo>(resp);
  }

  async sendMessage(
    sessionId: string,
    text: string,
    overrideId: string | null = null,
  ): Promise<TurnResult> {
    const payload: { text: string; override_id?: string } = { text };
    if (overrideId !== null) payload.override_id = overrideId;
    const resp = await this.fetchFn(
      `${this.baseUrl}/sessions/${sessionId}/messages`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(payload),
      },
    );
    return parseOrThrow<TurnResult>(resp);
  }

  async getSession(sessionId: string): Promise<SessionSnapshot> {
    const resp = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}`);
    return parseOrThrow<SessionSnapshot>(resp);
  }

  async health(): Promise<boolean> {
    try {
      const resp = await this.fetchFn(`${this.baseUrl}/healthz`);
      return resp.ok;
    } catch {
      return false;
    }
  }
}
