import type {
  Annotation,
  EventDoc,
  EventList,
  ExportResponse,
  HistogramResponse,
  LoginResponse,
  MentionsPage,
  QueryJob,
  QueryResults,
  TweetPage,
  UserList,
  UserRecord,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(typeof detail === "string" ? detail : JSON.stringify(detail));
    this.name = "ApiError";
  }
}

/** True for the mentions 404 that means "workflow has not run yet". */
export function isAnalysisPending(err: unknown): boolean {
  if (!(err instanceof ApiError) || err.status !== 404) return false;
  const detail = err.detail as { code?: string } | null;
  return typeof detail === "object" && detail !== null && detail.code === "analysis_pending";
}

/** Subject of a well-formed bearer token, or null; no verification here. */
export function tokenSubject(token: string): string | null {
  const parts = token.split(".");
  if (parts.length !== 3 || parts[1] === undefined) return null;
  try {
    const b64 = parts[1].replaceAll("-", "+").replaceAll("_", "/");
    const pad = b64 + "=".repeat((4 - (b64.length % 4)) % 4);
    const payload: unknown = JSON.parse(atob(pad));
    if (typeof payload === "object" && payload !== null && "sub" in payload) {
      const sub = (payload as { sub: unknown }).sub;
      return typeof sub === "string" ? sub : null;
    }
  } catch {
    // fall through; an undecodable token has no display name
  }
  return null;
}

/** Stable request identity: path plus sorted query pairs. */
export function requestKey(path: string, params: Record<string, string>): string {
  const pairs = Object.entries(params).sort(([a], [b]) =>
    a < b ? -1 : a > b ? 1 : 0,
  );
  const query = pairs
    .map(([k, v]) => `${encodeURIComponent(k)}=${encodeURIComponent(v)}`)
    .join("&");
  return query ? `${path}?${query}` : path;
}

/**
 * Thin gateway client. Concurrent GETs for the same (path, params) pair
 * share one in-flight request; the map entry is dropped once it settles,
 * so a later call fetches fresh. Writes are never coalesced.
 */
export class GatewayClient {
  token: string | null = null;
  private inflight = new Map<string, Promise<unknown>>();

  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private headers(json: boolean): Record<string, string> {
    const out: Record<string, string> = {};
    if (json) out["Content-Type"] = "application/json";
    if (this.token !== null) out["Authorization"] = `Bearer ${this.token}`;
    return out;
  }

  private async request(
    method: string,
    key: string,
    body?: unknown,
  ): Promise<unknown> {
    const response = await this.fetchFn(this.baseUrl + key, {
      method,
      headers: this.headers(body !== undefined),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    let parsed: unknown = text;
    try {
      parsed = JSON.parse(text);
    } catch {
      // Non-JSON bodies (raw tweet lines) stay as text.
    }
    if (!response.ok) {
      const detail =
        typeof parsed === "object" && parsed !== null && "detail" in parsed
          ? (parsed as { detail: unknown }).detail
          : parsed;
      throw new ApiError(response.status, detail);
    }
    return parsed;
  }

  get(path: string, params: Record<string, string> = {}): Promise<unknown> {
    const key = requestKey(path, params);
    const pending = this.inflight.get(key);
    if (pending !== undefined) return pending;
    const started = this.request("GET", key).finally(() => {
      this.inflight.delete(key);
    });
    this.inflight.set(key, started);
    return started;
  }

  post(path: string, body: unknown): Promise<unknown> {
    return this.request("POST", path, body);
  }

  patch(path: string, body: unknown): Promise<unknown> {
    return this.request("PATCH", path, body);
  }
}

/** Typed calls for every dashboard read and write. */
export class Api {
  constructor(readonly client: GatewayClient) {}

  async events(): Promise<EventDoc[]> {
    const body = (await this.client.get("/events/")) as EventList;
    return body.events;
  }

  tweets(event: string, params: Record<string, string>): Promise<TweetPage> {
    return this.client.get(`/tweets/${event}/`, params) as Promise<TweetPage>;
  }

  detail(event: string, file: string, tweetId: string): Promise<string> {
    return this.client
      .get(`/tweets/${event}/detail`, { file, tweet_id: tweetId })
      .then((body) =>
        typeof body === "string" ? body : JSON.stringify(body),
      );
  }

  histogram(event: string): Promise<HistogramResponse> {
    return this.client.get(`/tweets/${event}/histogram`) as Promise<HistogramResponse>;
  }

  async annotations(event: string): Promise<Annotation[]> {
    const body = (await this.client.get(`/events/${event}/annotations/`)) as {
      annotations: Annotation[];
    };
    return body.annotations;
  }

  annotate(event: string, tweetId: string, tag: string): Promise<Annotation> {
    return this.client.post(`/events/${event}/annotations/`, {
      tweet_id: tweetId,
      tag,
    }) as Promise<Annotation>;
  }

  createEvent(name: string, displayName: string, keywords: string[]): Promise<EventDoc> {
    return this.client.post("/events/", {
      name,
      display_name: displayName,
      keywords,
    }) as Promise<EventDoc>;
  }

  setStatus(event: string, status: string): Promise<EventDoc> {
    return this.client.patch(`/events/${event}`, { status }) as Promise<EventDoc>;
  }

  submitQuery(event: string, pattern: string): Promise<QueryJob> {
    return this.client.post(`/filter/${event}/`, { pattern }) as Promise<QueryJob>;
  }

  results(
    event: string,
    jobId: string,
    params: Record<string, string>,
  ): Promise<QueryResults> {
    return this.client.get(
      `/filter/${event}/results/${jobId}`,
      params,
    ) as Promise<QueryResults>;
  }

  exportCsv(
    event: string,
    fields: string[],
    pattern: string | null,
  ): Promise<ExportResponse> {
    return this.client.post(`/filter/${event}/export`, {
      fields,
      pattern,
    }) as Promise<ExportResponse>;
  }

  mentions(event: string, params: Record<string, string>): Promise<MentionsPage> {
    return this.client.get(`/mentions/${event}/`, params) as Promise<MentionsPage>;
  }

  runWorkflow(event: string): Promise<unknown> {
    return this.client.post(`/workflows/${event}/run`, {});
  }

  login(user: string): Promise<LoginResponse> {
    return this.client.post("/auth/token", { user }) as Promise<LoginResponse>;
  }

  async users(): Promise<UserRecord[]> {
    const body = (await this.client.get("/users/")) as UserList;
    return body.users;
  }

  setAccess(userId: string, authorized: boolean): Promise<UserRecord> {
    return this.client.patch(`/users/${userId}`, { authorized }) as Promise<UserRecord>;
  }
}
