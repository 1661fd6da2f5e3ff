/**
 * Session store: the single place UI state changes.
 *
 * Holds the current canvas, the step history (job id, seed, selection,
 * per-candidate losses, category assignments), and enough bookkeeping
 * to emit a panorama manifest byte-equal to the server's replay format.
 * The store never touches pixels beyond carrying PNG bytes around;
 * every image it holds came from an upload or a service response.
 */

import {
  API_VERSION,
  bytesToBase64,
  JobCreateBody,
  GridInfo,
  OutpaintPayload,
  OutpaintReport,
} from "./api.js";
import { canonicalStringify } from "./canonical.js";

/** Matches the service's seed spacing between consecutive panorama steps. */
export const STEP_SEED_STRIDE = 9973;

export type Direction = "left" | "right" | "up" | "down";

/** Effective inversion weights; recorded in full in the manifest. */
export interface EffectiveWeights {
  div: number;
  ms: number;
  mse: number;
  percept: number;
  prior: number;
}

export const DEFAULT_WEIGHTS: EffectiveWeights = {
  div: 0.001,
  ms: 0.001,
  mse: 0.01,
  percept: 1.0,
  prior: 0.001,
};

export interface SessionConfig {
  model: string;
  direction: Direction;
  m: number;
  blend: boolean;
  inversionSteps: number;
  lr: number;
  seed: number;
  restarts: number;
  warmupSteps: number;
  weights: EffectiveWeights;
}

export const DEFAULT_CONFIG: Omit<SessionConfig, "model"> = {
  direction: "right",
  m: 3,
  blend: true,
  inversionSteps: 800,
  lr: 0.05,
  seed: 0,
  restarts: 8,
  warmupSteps: 100,
  weights: DEFAULT_WEIGHTS,
};

export interface StepRecord {
  step: number;
  jobId: string;
  seed: number;
  selected: number;
  objective: number;
  candidateMse: number[];
  categories: Record<string, string[]> | null;
  /** PNG bytes of the selected candidate; the next step's reference. */
  selectedPng: Uint8Array;
}

export interface PanoramaManifest {
  kind: "panorama_manifest";
  api_version: string;
  direction: Direction;
  m: number;
  blend: boolean;
  seed: number;
  inversion_steps: number;
  lr: number;
  restarts: number;
  warmup_steps: number;
  weights: EffectiveWeights;
  grid: GridInfo;
  initial_sha256: string;
  steps: {
    step: number;
    seed: number;
    selected: number;
    objective: number;
    candidate_mse: number[];
  }[];
}

export type Listener = () => void;

export class SessionStore {
  readonly grid: GridInfo;
  config: SessionConfig;
  initialPng: Uint8Array | null = null;
  initialSha256: string | null = null;
  history: StepRecord[] = [];
  /** Painter state the next launched job will carry. */
  categories: Record<string, string[]> | null = null;
  private listeners = new Set<Listener>();

  constructor(grid: GridInfo, config: SessionConfig) {
    this.grid = grid;
    this.config = config;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  setInitial(png: Uint8Array): void {
    this.initialPng = png;
    this.initialSha256 = null;
    this.history = [];
    this.notify();
  }

  setCategories(payload: Record<string, string[]> | null): void {
    this.categories = payload;
    this.notify();
  }

  /** Reference PNG for the next panorama step: last pick, else initial. */
  nextReferencePng(): Uint8Array {
    const last = this.history[this.history.length - 1];
    if (last) return last.selectedPng;
    if (!this.initialPng) throw new Error("no initial image uploaded");
    return this.initialPng;
  }

  stepSeed(step: number): number {
    return this.config.seed + step * STEP_SEED_STRIDE;
  }

  /** Job body for panorama step `history.length`. */
  nextStepBody(): JobCreateBody {
    const step = this.history.length;
    const payload: OutpaintPayload = {
      reference_png: bytesToBase64(this.nextReferencePng()),
      direction: this.config.direction,
      m: this.config.m,
      blend: this.config.blend,
      steps: this.config.inversionSteps,
      lr: this.config.lr,
      seed: this.stepSeed(step),
      restarts: this.config.restarts,
      warmup_steps: this.config.warmupSteps,
      weights: { ...this.config.weights },
    };
    if (this.categories && Object.keys(this.categories).length > 0) {
      payload.categories = this.categories;
    }
    return {
      kind: "panorama_step",
      model: this.config.model,
      api_version: API_VERSION,
      payload,
    };
  }

  /**
   * Append a completed, selected step. The first step also pins the
   * manifest's initial hash from the server's report, so the client
   * never recomputes pixel hashes itself.
   */
  recordStep(jobId: string, report: OutpaintReport, selected: number, selectedPng: Uint8Array): void {
    if (!Number.isInteger(selected) || selected < 0 || selected >= this.config.m) {
      throw new Error(`selected candidate ${selected} outside 0..${this.config.m - 1}`);
    }
    const step = this.history.length;
    if (step === 0) {
      this.initialSha256 = report.reference_sha256;
    }
    this.history.push({
      step,
      jobId,
      seed: this.stepSeed(step),
      selected,
      objective: report.objective,
      candidateMse: [...report.candidate_mse],
      categories: this.categories ? { ...this.categories } : null,
      selectedPng,
    });
    this.notify();
  }

  manifest(): PanoramaManifest {
    if (this.history.length === 0 || this.initialSha256 === null) {
      throw new Error("manifest needs at least one completed step");
    }
    return {
      kind: "panorama_manifest",
      api_version: API_VERSION,
      direction: this.config.direction,
      m: this.config.m,
      blend: this.config.blend,
      seed: this.config.seed,
      inversion_steps: this.config.inversionSteps,
      lr: this.config.lr,
      restarts: this.config.restarts,
      warmup_steps: this.config.warmupSteps,
      weights: { ...this.config.weights },
      grid: { ...this.grid },
      initial_sha256: this.initialSha256,
      steps: this.history.map((entry) => ({
        step: entry.step,
        seed: entry.seed,
        selected: entry.selected,
        objective: entry.objective,
        candidate_mse: [...entry.candidateMse],
      })),
    };
  }

  /** Canonical manifest text, byte-equal to the server's encoding. */
  manifestText(): string {
    return canonicalStringify(this.manifest());
  }
}

/** Body for a one-shot outpaint job (the pre-panorama phase). */
export function outpaintBody(
  config: SessionConfig,
  referencePng: Uint8Array,
  categories: Record<string, string[]> | null = null,
): JobCreateBody {
  const payload: OutpaintPayload = {
    reference_png: bytesToBase64(referencePng),
    direction: config.direction,
    m: config.m,
    blend: config.blend,
    steps: config.inversionSteps,
    lr: config.lr,
    seed: config.seed,
    restarts: config.restarts,
    warmup_steps: config.warmupSteps,
    weights: { ...config.weights },
  };
  if (categories && Object.keys(categories).length > 0) {
    payload.categories = categories;
  }
  return { kind: "outpaint", model: config.model, api_version: API_VERSION, payload };
}

/** Config that reproduces a recorded manifest when driven step by step. */
export function configFromManifest(manifest: PanoramaManifest, model: string): SessionConfig {
  return {
    model,
    direction: manifest.direction,
    m: manifest.m,
    blend: manifest.blend,
    inversionSteps: manifest.inversion_steps,
    lr: manifest.lr,
    seed: manifest.seed,
    restarts: manifest.restarts,
    warmupSteps: manifest.warmup_steps,
    weights: { ...manifest.weights },
  };
}

export interface ReplayJobRunner {
  /** Issue one job body; resolve with the finished job's id + report. */
  run(body: JobCreateBody): Promise<{ jobId: string; report: OutpaintReport }>;
  /** Fetch result k of a finished job as PNG bytes. */
  fetchResult(jobId: string, k: number): Promise<Uint8Array>;
}

/**
 * Re-drive a recorded manifest: re-issues the exact request sequence
 * (same seeds, same selections) and returns the rebuilt store. With a
 * deterministic server the fetched candidates, and therefore the strip,
 * are pixel-identical to the original session.
 */
export async function replayManifest(
  manifest: PanoramaManifest,
  model: string,
  initialPng: Uint8Array,
  runner: ReplayJobRunner,
): Promise<SessionStore> {
  if (manifest.kind !== "panorama_manifest") {
    throw new Error("not a panorama manifest");
  }
  if (manifest.api_version !== API_VERSION) {
    throw new Error(`manifest api_version ${manifest.api_version} unsupported`);
  }
  const store = new SessionStore({ ...manifest.grid }, configFromManifest(manifest, model));
  store.setInitial(initialPng);
  for (const step of manifest.steps) {
    const body = store.nextStepBody();
    const { jobId, report } = await runner.run(body);
    if (store.history.length === 0 && report.reference_sha256 !== manifest.initial_sha256) {
      throw new Error("initial image does not match manifest hash");
    }
    const png = await runner.fetchResult(jobId, step.selected);
    store.recordStep(jobId, report, step.selected, png);
  }
  return store;
}
