/** Typed client for the curation server JSON API. The UI never computes
 * clustering numbers itself; everything rendered comes from these
 * responses. */

export interface EmbeddingPoint {
  idx: number;
  x: number;
  y: number;
  cluster: number;
  role: "core" | "border" | "noise";
}

export interface EmbeddingResponse {
  class: number;
  points: EmbeddingPoint[];
}

export interface DbscanParams {
  eps: number;
  min_pts: number;
}

export interface ClassesResponse {
  classes: number[];
  configs: Record<string, DbscanParams>;
}

export interface ReclusterResponse {
  class: number;
  clusters: number;
  noise_count: number;
}

export interface SummaryRow {
  class: number;
  total: number;
  kept: number;
  removed: number;
  kept_pct: number;
}

export interface SummaryResponse {
  classes: SummaryRow[];
  total: { n: number; kept: number; removed: number; kept_pct: number };
}

export interface CommitResponse {
  manifest_path: string;
  summary: { total: number; kept: number; removed: number; kept_pct: number };
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`${status}: ${detail}`);
  }
}

async function parse<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(response.status, detail);
  }
  return response.json() as Promise<T>;
}

export class ApiClient {
  constructor(private base: string = "") {}

  getClasses(): Promise<ClassesResponse> {
    return fetch(`${this.base}/api/classes`).then((r) => parse<ClassesResponse>(r));
  }

  getEmbedding(cls: number): Promise<EmbeddingResponse> {
    return fetch(`${this.base}/api/embedding?class=${cls}`).then((r) =>
      parse<EmbeddingResponse>(r),
    );
  }

  recluster(cls: number, params: DbscanParams): Promise<ReclusterResponse> {
    return fetch(`${this.base}/api/cluster`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ class: cls, eps: params.eps, min_pts: params.min_pts }),
    }).then((r) => parse<ReclusterResponse>(r));
  }

  commit(): Promise<CommitResponse> {
    return fetch(`${this.base}/api/commit`, { method: "POST" }).then((r) =>
      parse<CommitResponse>(r),
    );
  }

  getSummary(): Promise<SummaryResponse> {
    return fetch(`${this.base}/api/summary`).then((r) => parse<SummaryResponse>(r));
  }
}
