import type {
  EligibilitySliders,
  Overrides,
  RecommendResponse,
  TwinJson,
  TwinListResponse,
  WhatIfResponse,
} from './types';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

/** Thin typed client for the /v1 service API. The base URL is the single
 * piece of configuration the explorer takes. */
export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const body = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, body.code ?? 'unknown', body.message ?? 'request failed');
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(payload),
    });
  }

  listTwins(query?: string): Promise<TwinListResponse> {
    const suffix = query ? `?query=${encodeURIComponent(query)}` : '';
    return this.request<TwinListResponse>(`/v1/twins${suffix}`);
  }

  getTwin(id: string): Promise<TwinJson> {
    return this.request<TwinJson>(`/v1/twins/${encodeURIComponent(id)}`);
  }

  whatif(id: string, overrides: Overrides, sliders?: Partial<EligibilitySliders>): Promise<WhatIfResponse> {
    return this.post<WhatIfResponse>('/v1/whatif', {
      id,
      overrides,
      spec: sliders ?? {},
    });
  }

  recommend(
    id: string,
    overrides: Overrides,
    context: { region?: string; allow_off_label?: boolean; as_of?: string },
  ): Promise<RecommendResponse> {
    return this.post<RecommendResponse>('/v1/recommend', { id, overrides, ...context });
  }

  recordOutcome(id: string, update: Record<string, unknown>): Promise<{ id: string; versions: number }> {
    return this.post(`/v1/twins/${encodeURIComponent(id)}/outcome`, update);
  }
}
