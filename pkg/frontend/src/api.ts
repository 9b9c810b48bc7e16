import type {
  GradeScale,
  IssuedDocument,
  QrelsExport,
  SessionStatus,
  TopicHistory,
  TopicSnapshot,
} from "./types.js";

export class ApiError extends Error {
  constructor(public statusCode: number, message: string) {
    super(message);
  }
}

/** 409 from the service: the topic is finished/discarded or between batches. */
export class TopicConflictError extends Error {
  constructor(public status: string, public topic?: TopicSnapshot) {
    super(`topic is ${status}`);
  }
}

function conflictFrom(detail: unknown): TopicConflictError {
  if (detail && typeof detail === "object" && "status" in detail) {
    const d = detail as { status: string; topic?: TopicSnapshot };
    return new TopicConflictError(d.status, d.topic);
  }
  return new TopicConflictError(typeof detail === "string" ? detail : "conflict");
}

export class AssessApi {
  constructor(private baseUrl: string, private token?: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private headers(json: boolean): Record<string, string> {
    const h: Record<string, string> = {};
    if (json) h["content-type"] = "application/json";
    if (this.token) h["authorization"] = `Bearer ${this.token}`;
    return h;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.baseUrl + path, init);
    if (resp.ok) return (await resp.json()) as T;
    let detail: unknown = resp.statusText;
    try {
      detail = ((await resp.json()) as { detail?: unknown }).detail ?? detail;
    } catch {
      /* non-JSON error body */
    }
    if (resp.status === 409) throw conflictFrom(detail);
    throw new ApiError(resp.status, typeof detail === "string" ? detail : JSON.stringify(detail));
  }

  listSessions(): Promise<{ sessions: SessionStatus[] }> {
    return this.request("/sessions", { headers: this.headers(false) });
  }

  status(sessionId: string): Promise<SessionStatus> {
    return this.request(`/sessions/${sessionId}`, { headers: this.headers(false) });
  }

  scale(sessionId: string): Promise<GradeScale> {
    return this.request(`/sessions/${sessionId}/scale`, { headers: this.headers(false) });
  }

  nextDocument(sessionId: string, topicId: string): Promise<IssuedDocument> {
    return this.request(`/sessions/${sessionId}/topics/${topicId}/next`, {
      headers: this.headers(false),
    });
  }

  history(sessionId: string, topicId: string): Promise<TopicHistory> {
    return this.request(`/sessions/${sessionId}/topics/${topicId}/history`, {
      headers: this.headers(false),
    });
  }

  async judge(sessionId: string, topicId: string, docId: string,
              grade: number): Promise<TopicSnapshot> {
    const body = JSON.stringify({ topic_id: topicId, doc_id: docId, grade });
    const resp = await this.request<{ topic: TopicSnapshot }>(
      `/sessions/${sessionId}/judgments`,
      { method: "POST", headers: this.headers(true), body },
    );
    return resp.topic;
  }

  async revise(sessionId: string, topicId: string, docId: string,
               grade: number): Promise<TopicSnapshot> {
    const body = JSON.stringify({ topic_id: topicId, doc_id: docId, grade });
    const resp = await this.request<{ topic: TopicSnapshot }>(
      `/sessions/${sessionId}/judgments`,
      { method: "PATCH", headers: this.headers(true), body },
    );
    return resp.topic;
  }

  async exportQrels(sessionId: string): Promise<QrelsExport> {
    const resp = await fetch(`${this.baseUrl}/sessions/${sessionId}/qrels`, {
      headers: this.headers(false),
    });
    if (!resp.ok) throw new ApiError(resp.status, resp.statusText);
    return {
      content: await resp.text(),
      partial: resp.headers.get("x-poolkit-partial") === "true",
      totalJudged: Number(resp.headers.get("x-poolkit-total-judged") ?? 0),
      qrelsSize: Number(resp.headers.get("x-poolkit-qrels-size") ?? 0),
    };
  }
}
