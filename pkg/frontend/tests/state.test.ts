/**
 * Session store: manifest assembly byte-equal to the server fixture,
 * seed spacing, selection validation, and manifest replay re-issuing
 * the exact request sequence.
 */

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { JobCreateBody, OutpaintPayload, OutpaintReport } from "../src/api.js";
import {
  DEFAULT_CONFIG,
  PanoramaManifest,
  ReplayJobRunner,
  STEP_SEED_STRIDE,
  SessionStore,
  configFromManifest,
  outpaintBody,
  replayManifest,
} from "../src/state.js";

const fixtureText = readFileSync(
  new URL("./fixtures/manifest_tiny.json", import.meta.url),
  "utf8",
);
const fixture = JSON.parse(fixtureText) as PanoramaManifest;

const PNG = new Uint8Array([0x89, 0x50, 0x4e, 0x47, 1, 2, 3]);

function reportFor(step: { objective: number; candidate_mse: number[] }, sha: string): OutpaintReport {
  return {
    objective: step.objective,
    candidate_mse: step.candidate_mse,
    known_cells: [[1, 1], [1, 2]],
    outpaint_cells: [[2, 1], [2, 2]],
    reference_sha256: sha,
  };
}

describe("SessionStore", () => {
  it("spaces panorama step seeds by the server's stride", () => {
    const store = new SessionStore(fixture.grid, configFromManifest(fixture, "tiny"));
    expect(STEP_SEED_STRIDE).toBe(9973);
    expect(store.stepSeed(0)).toBe(fixture.seed);
    expect(store.stepSeed(4)).toBe(fixture.seed + 4 * 9973);
    expect(fixture.steps.map((s) => s.seed)).toEqual(
      fixture.steps.map((s) => store.stepSeed(s.step)),
    );
  });

  it("rebuilds the recorded manifest byte-for-byte from history", () => {
    const store = new SessionStore(fixture.grid, configFromManifest(fixture, "tiny"));
    store.setInitial(PNG);
    for (const step of fixture.steps) {
      // the first report's hash pins initial_sha256; later hashes differ
      const sha = step.step === 0 ? fixture.initial_sha256 : `aa${step.step}`;
      store.recordStep(`job-${step.step}`, reportFor(step, sha), step.selected, PNG);
    }
    expect(store.manifestText()).toBe(fixtureText);
  });

  it("refuses selections outside 0..m-1", () => {
    const store = new SessionStore(fixture.grid, configFromManifest(fixture, "tiny"));
    store.setInitial(PNG);
    const bad = () =>
      store.recordStep("job-x", reportFor(fixture.steps[0]!, "aa"), fixture.m, PNG);
    expect(bad).toThrow(/outside 0\.\.1/);
  });

  it("needs one completed step before a manifest exists", () => {
    const store = new SessionStore(fixture.grid, configFromManifest(fixture, "tiny"));
    store.setInitial(PNG);
    expect(() => store.manifest()).toThrow(/at least one completed step/);
  });

  it("uses the last selection as the next reference", () => {
    const store = new SessionStore(fixture.grid, configFromManifest(fixture, "tiny"));
    store.setInitial(PNG);
    const picked = new Uint8Array([9, 9, 9]);
    store.recordStep("job-0", reportFor(fixture.steps[0]!, "aa"), 0, picked);
    expect(store.nextReferencePng()).toBe(picked);
    const body = store.nextStepBody();
    expect(body.kind).toBe("panorama_step");
    expect((body.payload as OutpaintPayload).seed).toBe(fixture.seed + STEP_SEED_STRIDE);
  });

  it("attaches categories to job bodies only when assigned", () => {
    const store = new SessionStore(fixture.grid, configFromManifest(fixture, "tiny"));
    store.setInitial(PNG);
    expect((store.nextStepBody().payload as OutpaintPayload).categories).toBeUndefined();
    store.setCategories({ "2,1": ["tower"] });
    expect((store.nextStepBody().payload as OutpaintPayload).categories).toEqual({
      "2,1": ["tower"],
    });
  });
});

describe("outpaintBody", () => {
  it("carries every inversion knob and the full weights", () => {
    const body = outpaintBody({ ...DEFAULT_CONFIG, model: "toy" }, PNG, { "1,1": ["sky"] });
    expect(body.kind).toBe("outpaint");
    expect(body.model).toBe("toy");
    const payload = body.payload as OutpaintPayload;
    expect(payload.m).toBe(3);
    expect(payload.steps).toBe(800);
    expect(payload.restarts).toBe(8);
    expect(payload.warmup_steps).toBe(100);
    expect(payload.weights).toEqual({ div: 0.001, ms: 0.001, mse: 0.01, percept: 1.0, prior: 0.001 });
    expect(payload.categories).toEqual({ "1,1": ["sky"] });
  });
});

/** Deterministic fake service: identical bodies get identical ids/pixels. */
class MockRunner implements ReplayJobRunner {
  bodies: JobCreateBody[] = [];

  private hash(text: string): string {
    let h = 2166136261;
    for (let i = 0; i < text.length; i++) {
      h = Math.imul(h ^ text.charCodeAt(i), 16777619);
    }
    return (h >>> 0).toString(16);
  }

  async run(body: JobCreateBody): Promise<{ jobId: string; report: OutpaintReport }> {
    this.bodies.push(body);
    const key = this.hash(JSON.stringify(body));
    const payload = body.payload as OutpaintPayload;
    const m = payload.m ?? 3;
    return {
      jobId: `job-${key}`,
      report: {
        objective: 0.5,
        candidate_mse: Array.from({ length: m }, (_, k) => 0.25 + k * 0.125),
        known_cells: [[1, 1], [1, 2]],
        outpaint_cells: [[2, 1], [2, 2]],
        reference_sha256: `sha-${this.hash(payload.reference_png)}`,
      },
    };
  }

  async fetchResult(jobId: string, k: number): Promise<Uint8Array> {
    return new TextEncoder().encode(`png:${jobId}:${k}`);
  }
}

describe("replayManifest", () => {
  it("re-issues the identical request sequence and pixels", async () => {
    const config = { ...configFromManifest(fixture, "tiny"), seed: 5 };
    const original = new MockRunner();
    const store = new SessionStore(fixture.grid, config);
    store.setInitial(PNG);
    const selections = [1, 0, 1];
    for (const selected of selections) {
      const body = store.nextStepBody();
      const { jobId, report } = await original.run(body);
      const png = await original.fetchResult(jobId, selected);
      store.recordStep(jobId, report, selected, png);
    }

    const manifest = store.manifest();
    expect(manifest.steps.map((s) => s.selected)).toEqual(selections);

    const replayRunner = new MockRunner();
    const replayed = await replayManifest(manifest, "tiny", PNG, replayRunner);

    expect(replayRunner.bodies.map((b) => JSON.stringify(b))).toEqual(
      original.bodies.map((b) => JSON.stringify(b)),
    );
    expect(replayed.history.map((h) => [...h.selectedPng])).toEqual(
      store.history.map((h) => [...h.selectedPng]),
    );
    expect(replayed.manifestText()).toBe(store.manifestText());
  });

  it("rejects a changed initial image via the recorded hash", async () => {
    const original = new MockRunner();
    const store = new SessionStore(fixture.grid, configFromManifest(fixture, "tiny"));
    store.setInitial(PNG);
    const body = store.nextStepBody();
    const { jobId, report } = await original.run(body);
    store.recordStep(jobId, report, 0, await original.fetchResult(jobId, 0));

    const other = new Uint8Array([7, 7, 7, 7]);
    await expect(
      replayManifest(store.manifest(), "tiny", other, new MockRunner()),
    ).rejects.toThrow(/does not match manifest hash/);
  });
});
