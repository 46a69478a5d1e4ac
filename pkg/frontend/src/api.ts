/** Typed client for the /v1 API. All network I/O goes through here. */

import type {
  EventDetailWire,
  SessionDescriptor,
  SurveySubmission,
  TimeWindowWire,
  TurnResponse,
  UserInputEventWire,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly detail: unknown;

  constructor(status: number, detail: unknown) {
    super(`API error ${status}: ${JSON.stringify(detail)}`);
    this.status = status;
    this.detail = detail;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    let payload: unknown = null;
    const text = await response.text();
    if (text) {
      try {
        payload = JSON.parse(text);
      } catch {
        payload = text;
      }
    }
    if (!response.ok) {
      const detail =
        payload && typeof payload === "object" && "detail" in payload
          ? (payload as { detail: unknown }).detail
          : payload;
      throw new ApiError(response.status, detail);
    }
    return payload as T;
  }

  createSession(language: string): Promise<SessionDescriptor> {
    return this.request("POST", "/v1/sessions", { language });
  }

  postTurn(sessionId: string, event: UserInputEventWire): Promise<TurnResponse> {
    return this.request("POST", `/v1/sessions/${sessionId}/turns`, event);
  }

  reportVisibility(sessionId: string, cardIds: string[]): Promise<{ visible_cards: string[] }> {
    return this.request("POST", `/v1/sessions/${sessionId}/visibility`, {
      card_ids: cardIds,
    });
  }

  setWindow(sessionId: string, window: TimeWindowWire): Promise<{ window: TimeWindowWire }> {
    return this.request("PUT", `/v1/sessions/${sessionId}/window`, window);
  }

  getEvent(eventId: string): Promise<EventDetailWire> {
    return this.request("GET", `/v1/events/${eventId}`);
  }

  postSurvey(sessionId: string, submission: SurveySubmission): Promise<{ status: string }> {
    return this.request("POST", `/v1/sessions/${sessionId}/survey`, submission);
  }
}
