/**
 * Typed client for the recommendation service JSON endpoints.
 *
 * Everything downstream consumes the service exclusively through the
 * Transport interface, so tests can swap in a scripted fake.
 */

// ------------------------------------------------------------------ Types

export type FeatureRole = 'state' | 'action' | 'outcome';
export type FeatureType = 'continuous' | 'binary' | 'categorical';

export interface FeatureDescriptor {
  name: string;
  role: FeatureRole;
  kind: FeatureType;
  unit: string | null;
  label: string;
  range: [number, number] | null;
  levels: number[] | null;
}

export interface Metadata {
  schema_name: string;
  schema_fingerprint: string;
  model_versions: Record<string, string>;
  features: FeatureDescriptor[];
  outcome: FeatureDescriptor;
}

/** Feature name -> numeric value, exactly as the service expects. */
export type FeatureValues = Record<string, number>;

export interface Scores {
  predicted_glucose: number;
  risk: number;
  reward: number;
}

export interface RecommendResponse extends Scores {
  action: FeatureValues;
  mode: string;
}

export interface FieldError {
  field: string;
  error: string;
}

export interface WhatIfRequest {
  state: FeatureValues;
  action: FeatureValues;
}

export interface Transport {
  metadata(): Promise<Metadata>;
  recommend(state: FeatureValues, mode: 'deterministic' | 'stochastic',
            seed?: number): Promise<RecommendResponse>;
  whatif(req: WhatIfRequest): Promise<Scores>;
}

// ------------------------------------------------------------------ Errors

export class ApiError extends Error {
  constructor(public status: number, message: string,
              public detail: FieldError[] = []) {
    super(message);
    this.name = 'ApiError';
  }
}

// ------------------------------------------------------------------ HTTP

async function parseOrThrow<T>(resp: Response): Promise<T> {
  if (resp.ok) {
    return resp.json() as Promise<T>;
  }
  let detail: FieldError[] = [];
  let message = `${resp.status} ${resp.statusText}`;
  try {
    const body = await resp.json();
    if (Array.isArray(body.detail)) {
      detail = body.detail;
      message = detail.map((e) => `${e.field}: ${e.error}`).join('; ');
    } else if (typeof body.detail === 'string') {
      message = body.detail;
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(resp.status, message, detail);
}

/** Fetch-backed transport rooted at a single base URL. */
export function httpTransport(baseUrl: string): Transport {
  const root = baseUrl.replace(/\/+$/, '');
  const post = (path: string, body: unknown): Promise<Response> =>
    fetch(`${root}${path}`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });

  return {
    metadata: () =>
      fetch(`${root}/metadata`).then((r) => parseOrThrow<Metadata>(r)),
    recommend: (state, mode, seed) =>
      post('/recommend', seed === undefined ? { state, mode } : { state, mode, seed })
        .then((r) => parseOrThrow<RecommendResponse>(r)),
    whatif: (req) => post('/whatif', req).then((r) => parseOrThrow<Scores>(r)),
  };
}
