/**
 * Typed client for the outpaintkit job service.
 *
 * Every request and response shape here mirrors the service's JSON
 * schemas one-to-one; the client adds no fields and never invents
 * pixels. The fetch implementation is injectable so tests can run
 * against a mocked transport.
 */

export const API_VERSION = "1";

export interface GridInfo {
  n: number;
  patch_h: number;
  patch_w: number;
}

export interface ModelInfo {
  name: string;
  d_w: number;
  grid: GridInfo;
  categorical: boolean;
  class_names: string[];
}

export interface ModelsResponse {
  api_version: string;
  default: string;
  models: ModelInfo[];
}

export interface CategoryClass {
  index: number;
  name: string;
}

export interface CategoriesResponse {
  api_version: string;
  model: string;
  categorical: boolean;
  classes: CategoryClass[];
  grid_n: number;
}

export interface LossWeightsPayload {
  mse?: number;
  percept?: number;
  prior?: number;
  div?: number;
  ms?: number;
}

/** Payload for outpaint and panorama_step jobs. */
export interface OutpaintPayload {
  reference_png: string;
  direction?: "left" | "right" | "up" | "down";
  known_cells?: [number, number][];
  reference_mask_png?: string;
  m?: number;
  categories?: Record<string, string[]>;
  blend?: boolean;
  steps?: number;
  lr?: number;
  seed?: number;
  restarts?: number;
  warmup_steps?: number;
  weights?: LossWeightsPayload;
}

export interface EvaluatePayload {
  real_pngs: string[];
  fake_pngs: string[];
  d_f?: number;
}

export type JobKind = "outpaint" | "panorama_step" | "evaluate";

export interface JobCreateBody {
  kind: JobKind;
  model?: string;
  api_version?: string;
  payload: OutpaintPayload | EvaluatePayload;
}

export interface JobCreated {
  api_version: string;
  id: string;
  status: "queued";
}

export interface OutpaintReport {
  objective: number;
  candidate_mse: number[];
  known_cells: [number, number][];
  outpaint_cells: [number, number][];
  reference_sha256: string;
}

export type JobStatus = "queued" | "running" | "done" | "failed";

export interface JobSnapshot {
  api_version: string;
  id: string;
  kind: JobKind;
  model: string;
  status: JobStatus;
  progress: number;
  error: string | null;
  cancel_requested: boolean;
  results: string[];
  loss_trace: Record<string, number[]>;
  report: OutpaintReport | Record<string, unknown> | null;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class ServiceClient {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`);
    await raiseForStatus(response);
    return (await response.json()) as T;
  }

  getModels(): Promise<ModelsResponse> {
    return this.getJson<ModelsResponse>("/models");
  }

  getCategories(model?: string): Promise<CategoriesResponse> {
    const query = model ? `?model=${encodeURIComponent(model)}` : "";
    return this.getJson<CategoriesResponse>(`/categories${query}`);
  }

  async createJob(body: JobCreateBody): Promise<JobCreated> {
    const response = await this.fetchImpl(`${this.baseUrl}/jobs`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ api_version: API_VERSION, ...body }),
    });
    await raiseForStatus(response);
    return (await response.json()) as JobCreated;
  }

  getJob(jobId: string): Promise<JobSnapshot> {
    return this.getJson<JobSnapshot>(`/jobs/${jobId}`);
  }

  async cancelJob(jobId: string): Promise<JobSnapshot> {
    const response = await this.fetchImpl(`${this.baseUrl}/jobs/${jobId}/cancel`, {
      method: "POST",
    });
    await raiseForStatus(response);
    return (await response.json()) as JobSnapshot;
  }

  resultUrl(jobId: string, k: number): string {
    return `${this.baseUrl}/jobs/${jobId}/results/${k}`;
  }

  /** Raw PNG bytes of result k; what the UI re-uploads to chain steps. */
  async getResultPng(jobId: string, k: number): Promise<Uint8Array> {
    const response = await this.fetchImpl(this.resultUrl(jobId, k));
    await raiseForStatus(response);
    return new Uint8Array(await response.arrayBuffer());
  }
}

/** Base64 for binary payload fields, usable in browsers and Node alike. */
export function bytesToBase64(bytes: Uint8Array): string {
  const nodeBuffer = (
    globalThis as {
      Buffer?: { from(data: Uint8Array): { toString(encoding: "base64"): string } };
    }
  ).Buffer;
  if (nodeBuffer) {
    return nodeBuffer.from(bytes).toString("base64");
  }
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}
