import type { ApiError, RecommendRequest, RecommendResponse, RouteProfile, RouteSummary, ServiceMeta } from "./types.js";

export class ApiRequestError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: ApiError,
  ) {
    super(`${detail.code} (${detail.field}): ${detail.message}`);
  }
}

type FetchFn = typeof fetch;

/** Thin typed client over the recommendation service; no caching, no state. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchFn = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let detail: ApiError;
      try {
        detail = (await response.json()) as ApiError;
      } catch {
        detail = { code: "http_error", field: "", message: `HTTP ${response.status}` };
      }
      throw new ApiRequestError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  getMeta(): Promise<ServiceMeta> {
    return this.request<ServiceMeta>("/meta");
  }

  async getUsers(): Promise<string[]> {
    const payload = await this.request<{ users: string[] }>("/users");
    return payload.users;
  }

  async getRoutes(): Promise<RouteSummary[]> {
    const payload = await this.request<{ routes: RouteSummary[] }>("/routes");
    return payload.routes;
  }

  getRouteProfile(routeId: string): Promise<RouteProfile> {
    return this.request<RouteProfile>(`/routes/${encodeURIComponent(routeId)}/profile`);
  }

  recommend(request: RecommendRequest): Promise<RecommendResponse> {
    return this.request<RecommendResponse>("/recommend", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
  }
}
