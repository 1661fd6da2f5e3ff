/**
 * Job polling: 1 s base interval with multiplicative backoff, capped.
 * The poller keeps at most one in-flight loop per job id; concurrent
 * callers share the same promise. Sleep is injectable so tests drive
 * the schedule without real time.
 */

import { JobSnapshot } from "./api.js";

export interface PollOptions {
  intervalMs?: number;
  backoffFactor?: number;
  maxIntervalMs?: number;
  sleep?: (ms: number) => Promise<void>;
  onUpdate?: (snapshot: JobSnapshot) => void;
}

const realSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export interface JobFetcher {
  getJob(jobId: string): Promise<JobSnapshot>;
}

export class JobPoller {
  private active = new Map<string, Promise<JobSnapshot>>();

  constructor(private readonly client: JobFetcher) {}

  /** Number of jobs currently being polled. */
  get pending(): number {
    return this.active.size;
  }

  poll(jobId: string, options: PollOptions = {}): Promise<JobSnapshot> {
    const existing = this.active.get(jobId);
    if (existing) return existing;
    const run = this.loop(jobId, options).finally(() => this.active.delete(jobId));
    this.active.set(jobId, run);
    return run;
  }

  private async loop(jobId: string, options: PollOptions): Promise<JobSnapshot> {
    const base = options.intervalMs ?? 1000;
    const factor = options.backoffFactor ?? 1.5;
    const cap = options.maxIntervalMs ?? 10_000;
    const sleep = options.sleep ?? realSleep;
    let interval = base;
    for (;;) {
      const snapshot = await this.client.getJob(jobId);
      options.onUpdate?.(snapshot);
      if (snapshot.status === "done" || snapshot.status === "failed") {
        return snapshot;
      }
      await sleep(interval);
      interval = Math.min(interval * factor, cap);
    }
  }
}
