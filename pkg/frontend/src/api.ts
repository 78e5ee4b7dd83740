// Thin typed client over the game service HTTP API.
//
// The human's secret target is never part of any request: the only data
// that ever leaves the browser are answers, the guess trigger, and the
// final success boolean after the reveal.

import type {
  Answer,
  AnswerResponse,
  GuessResponse,
  QuestionPayload,
  SessionPayload,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export class GameApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = fetch.bind(globalThis),
  ) {}

  private async request<T>(path: string, method: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      const detail =
        typeof payload === "object" && payload !== null && "detail" in payload
          ? String((payload as { detail: unknown }).detail)
          : `HTTP ${response.status}`;
      throw new ApiError(response.status, detail);
    }
    return payload as T;
  }

  createGame(options: {
    seed?: number;
    max_questions?: number;
    decode?: "greedy" | "sample";
    sample_seed?: number;
  } = {}): Promise<SessionPayload> {
    return this.request("/games", "POST", options);
  }

  getQuestion(sessionId: string): Promise<QuestionPayload> {
    return this.request(`/games/${sessionId}/question`, "GET");
  }

  postAnswer(sessionId: string, answer: Answer): Promise<AnswerResponse> {
    return this.request(`/games/${sessionId}/answer`, "POST", { answer });
  }

  postGuess(sessionId: string): Promise<GuessResponse> {
    return this.request(`/games/${sessionId}/guess`, "POST");
  }

  postResult(sessionId: string, success: boolean): Promise<{ status: string }> {
    return this.request(`/games/${sessionId}/result`, "POST", { success });
  }

  getState(sessionId: string): Promise<SessionPayload> {
    return this.request(`/games/${sessionId}`, "GET");
  }
}
