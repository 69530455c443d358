/**
 * Generation-job polling and the results-view gate.
 *
 * While a job is pending the results view is disabled (no picking, no
 * re-submission); it re-enables the moment the job lands, whether it
 * finished or failed. Polling is a fixed 1-second cadence with overlap
 * protection: a slow poll never stacks behind the next tick.
 */

import type { JobDoc } from "./api.js";

export const POLL_INTERVAL_MS = 1000;

export interface PollerHooks {
  /** Every observed state, including the final one. */
  onUpdate?: (job: JobDoc) => void;
  /** Called once, when the job reaches done or failed. */
  onSettled?: (job: JobDoc) => void;
}

export class JobPoller {
  private timer: ReturnType<typeof setInterval> | null = null;
  private inFlight = false;
  private jobId: string | null = null;

  constructor(
    private readonly fetchJob: (jobId: string) => Promise<JobDoc>,
    private readonly hooks: PollerHooks = {},
    private readonly intervalMs: number = POLL_INTERVAL_MS,
  ) {}

  /** False while a job is being tracked: the results view is locked. */
  get resultsEnabled(): boolean {
    return this.jobId === null;
  }

  get polling(): boolean {
    return this.timer !== null;
  }

  /** Begin tracking a job; any previously tracked job is abandoned. */
  start(jobId: string): void {
    this.stop();
    this.jobId = jobId;
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
    void this.tick();
  }

  /** Stop polling without waiting for the job to settle. */
  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
    this.jobId = null;
  }

  private async tick(): Promise<void> {
    if (this.inFlight || this.jobId === null) return;
    this.inFlight = true;
    const jobId = this.jobId;
    try {
      const job = await this.fetchJob(jobId);
      if (this.jobId !== jobId) return; // a newer job took over mid-poll
      this.hooks.onUpdate?.(job);
      if (job.state === "done" || job.state === "failed") {
        this.stop();
        this.hooks.onSettled?.(job);
      }
    } catch {
      // transient fetch failure: keep the cadence, try again next tick
    } finally {
      this.inFlight = false;
    }
  }
}
