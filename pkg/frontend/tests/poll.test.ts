/**
 * Poller: 1 s base interval with backoff, shared in-flight loop per
 * job, resolution on terminal states.
 */

import { describe, expect, it } from "vitest";

import { JobSnapshot } from "../src/api.js";
import { JobPoller } from "../src/poll.js";

function snapshot(status: JobSnapshot["status"], progress = 0): JobSnapshot {
  return {
    api_version: "1",
    id: "j1",
    kind: "outpaint",
    model: "toy",
    status,
    progress,
    error: status === "failed" ? "boom" : null,
    cancel_requested: false,
    results: [],
    loss_trace: {},
    report: null,
  };
}

describe("JobPoller", () => {
  it("polls until done with backed-off intervals", async () => {
    const states = [
      snapshot("queued"),
      snapshot("running", 0.2),
      snapshot("running", 0.6),
      snapshot("done", 1),
    ];
    let call = 0;
    const poller = new JobPoller({ getJob: async () => states[Math.min(call++, 3)]! });
    const sleeps: number[] = [];
    const seen: string[] = [];
    const result = await poller.poll("j1", {
      sleep: async (ms) => {
        sleeps.push(ms);
      },
      onUpdate: (s) => seen.push(s.status),
    });
    expect(result.status).toBe("done");
    expect(seen).toEqual(["queued", "running", "running", "done"]);
    expect(sleeps).toEqual([1000, 1500, 2250]);
  });

  it("caps the interval", async () => {
    let call = 0;
    const poller = new JobPoller({
      getJob: async () => (call++ < 6 ? snapshot("running") : snapshot("done", 1)),
    });
    const sleeps: number[] = [];
    await poller.poll("j1", {
      intervalMs: 1000,
      backoffFactor: 4,
      maxIntervalMs: 5000,
      sleep: async (ms) => {
        sleeps.push(ms);
      },
    });
    expect(sleeps).toEqual([1000, 4000, 5000, 5000, 5000, 5000]);
  });

  it("resolves on failed jobs too", async () => {
    const poller = new JobPoller({ getJob: async () => snapshot("failed") });
    const result = await poller.poll("j1", { sleep: async () => {} });
    expect(result.status).toBe("failed");
    expect(result.error).toBe("boom");
  });

  it("shares one in-flight loop per job id", async () => {
    let calls = 0;
    let release: (() => void) | null = null;
    const gate = new Promise<void>((resolve) => {
      release = resolve;
    });
    const poller = new JobPoller({
      getJob: async () => {
        calls++;
        await gate;
        return snapshot("done", 1);
      },
    });
    const first = poller.poll("j1", { sleep: async () => {} });
    const second = poller.poll("j1", { sleep: async () => {} });
    expect(first).toBe(second);
    expect(poller.pending).toBe(1);
    release!();
    await first;
    expect(calls).toBe(1);
    expect(poller.pending).toBe(0);
  });
});
