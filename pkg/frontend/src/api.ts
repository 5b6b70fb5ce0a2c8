import type {
  Arrow,
  GenerateFrameResponse,
  PropagateResponse,
  SessionBody,
  SessionResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: unknown,
  ) {
    super(`request failed with ${status}`);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly fetchFn: FetchLike;
  private inflight = new Map<string, Promise<void>>();
  private pending = new Map<string, SessionBody>();

  constructor(
    readonly baseUrl: string,
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async post<T>(path: string, body: unknown, method = "POST"): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    const data = await resp.json();
    if (!resp.ok) throw new ApiError(resp.status, data);
    return data as T;
  }

  async health(): Promise<{ status: string; model_loaded: boolean }> {
    const resp = await this.fetchFn(`${this.baseUrl}/v1/healthz`);
    return (await resp.json()) as { status: string; model_loaded: boolean };
  }

  propagate(imageB64: string, arrows: readonly Arrow[]): Promise<PropagateResponse> {
    return this.post("/v1/propagate", { image: imageB64, arrows });
  }

  generateFrame(imageB64: string, arrows: readonly Arrow[]): Promise<GenerateFrameResponse> {
    return this.post("/v1/generate-frame", { image: imageB64, arrows });
  }

  putSession(id: string, body: SessionBody): Promise<SessionResponse> {
    return this.post(`/v1/session/${encodeURIComponent(id)}`, body, "PUT");
  }

  async getSession(id: string): Promise<SessionResponse> {
    const resp = await this.fetchFn(`${this.baseUrl}/v1/session/${encodeURIComponent(id)}`);
    const data = await resp.json();
    if (!resp.ok) throw new ApiError(resp.status, data);
    return data as SessionResponse;
  }

  /**
   * Coalescing PUT: at most one request in flight per session; clicks
   * that arrive meanwhile collapse to the newest full state.
   */
  queuePutSession(
    id: string,
    body: SessionBody,
    onResult: (r: SessionResponse) => void,
    onError: (e: unknown) => void = () => undefined,
  ): void {
    this.pending.set(id, body);
    if (this.inflight.has(id)) return;
    const drain = async (): Promise<void> => {
      for (;;) {
        const next = this.pending.get(id);
        if (next === undefined) break;
        this.pending.delete(id);
        try {
          onResult(await this.putSession(id, next));
        } catch (err) {
          onError(err);
        }
      }
      this.inflight.delete(id);
    };
    this.inflight.set(id, drain());
  }

  /** Resolves when the session has no queued or in-flight request. */
  async flush(id: string): Promise<void> {
    for (;;) {
      const current = this.inflight.get(id);
      if (!current) return;
      await current;
    }
  }
}
