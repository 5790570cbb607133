/**
 * Job-flow state machine between the editor and the service, kept DOM-free
 * so the submit/poll/render lifecycle is testable.
 */

import { ApiError, RemovalClient, RemovalConfigFields, statusMessage } from "./api.js";

export type TrackerPhase = "idle" | "submitting" | "waiting" | "done" | "error";

export interface JobView {
  phase: TrackerPhase;
  jobId: string | null;
  serverStatus: string | null;
  message: string;
  config: RemovalConfigFields | null;
  resultPng: Uint8Array | null;
  curvesText: string | null;
}

export class JobTracker {
  view: JobView = {
    phase: "idle",
    jobId: null,
    serverStatus: null,
    message: "",
    config: null,
    resultPng: null,
    curvesText: null,
  };

  constructor(
    private readonly client: RemovalClient,
    private readonly onChange: (view: JobView) => void = () => {}
  ) {}

  private update(patch: Partial<JobView>): void {
    this.view = { ...this.view, ...patch };
    this.onChange(this.view);
  }

  /**
   * Submit a job and follow it to completion. Inputs are never mutated;
   * resubmitting always creates a fresh job id on the server.
   */
  async run(
    imagePng: Uint8Array,
    maskPng: Uint8Array,
    config: RemovalConfigFields,
    opts: { intervalMs?: number; timeoutMs?: number } = {}
  ): Promise<JobView> {
    this.update({
      phase: "submitting",
      jobId: null,
      serverStatus: null,
      message: "Submitting job...",
      config,
      resultPng: null,
      curvesText: null,
    });
    try {
      const jobId = await this.client.submitJob(imagePng, maskPng, config);
      this.update({ phase: "waiting", jobId, message: `Job ${jobId} queued.` });
      await this.client.pollUntilDone(jobId, {
        ...opts,
        onUpdate: (status) =>
          this.update({
            serverStatus: status.status,
            message: `Job ${jobId} is ${status.status}.`,
          }),
      });
      const [resultPng, curvesText] = await Promise.all([
        this.client.getResult(jobId),
        this.client.getCurves(jobId),
      ]);
      this.update({
        phase: "done",
        serverStatus: "done",
        message: "Removal finished.",
        resultPng,
        curvesText,
      });
    } catch (err) {
      const message =
        err instanceof ApiError ? statusMessage(err.status, err.message) : String(err);
      this.update({ phase: "error", message });
    }
    return this.view;
  }
}
