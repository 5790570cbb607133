/**
 * Client for the removal job service (POST /v1/jobs and friends).
 */

export interface JobStatus {
  job_id: string;
  status: "queued" | "running" | "done" | "failed";
  config: Record<string, unknown>;
  error: string | null;
  timing?: Record<string, number | null>;
}

export interface RemovalConfigFields {
  steps?: number;
  seed?: number;
  strategy?: string;
  reference?: string;
  axis?: string;
  layers?: string;
  dilate_px?: number;
  blend_source?: string;
  backend?: string;
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
  }
}

/** User-facing message for an error status from the service. */
export function statusMessage(status: number, detail?: string): string {
  switch (status) {
    case 404:
      return "Job not found. It may have been removed or the id is wrong.";
    case 409:
      return detail && detail.includes("queued")
        ? "Job is still queued. Hang on."
        : "Result is not ready yet. The job has not finished.";
    case 422:
      return `The server rejected the inputs: ${detail ?? "malformed submission"}.`;
    default:
      return detail ? `Service error (${status}): ${detail}` : `Service error (${status}).`;
  }
}

async function errorDetail(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { detail?: string };
    return body.detail ?? resp.statusText;
  } catch {
    return resp.statusText;
  }
}

export type FetchLike = typeof fetch;

export class RemovalClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch
  ) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}${path}`;
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(this.url(path), init);
    } catch (err) {
      throw new ApiError(0, `Cannot reach the removal service: ${String(err)}`);
    }
    if (!resp.ok) {
      throw new ApiError(resp.status, await errorDetail(resp));
    }
    return resp;
  }

  /** Submit image + mask bytes; returns the new job id. */
  async submitJob(
    imagePng: Uint8Array,
    maskPng: Uint8Array,
    config: RemovalConfigFields = {}
  ): Promise<string> {
    const form = new FormData();
    form.append("image", new Blob([imagePng.buffer as ArrayBuffer], { type: "image/png" }), "image.png");
    form.append("mask", new Blob([maskPng.buffer as ArrayBuffer], { type: "image/png" }), "mask.png");
    form.append("config", JSON.stringify(config));
    const resp = await this.request("/v1/jobs", { method: "POST", body: form });
    const body = (await resp.json()) as { job_id: string };
    return body.job_id;
  }

  async getStatus(jobId: string): Promise<JobStatus> {
    const resp = await this.request(`/v1/jobs/${jobId}`);
    return (await resp.json()) as JobStatus;
  }

  async getResult(jobId: string): Promise<Uint8Array> {
    const resp = await this.request(`/v1/jobs/${jobId}/result`);
    return new Uint8Array(await resp.arrayBuffer());
  }

  async getCurves(jobId: string): Promise<string> {
    const resp = await this.request(`/v1/jobs/${jobId}/curves`);
    return await resp.text();
  }

  async cancel(jobId: string): Promise<void> {
    await this.request(`/v1/jobs/${jobId}`, { method: "DELETE" });
  }

  /**
   * Poll until the job leaves the queue and finishes. Resolves on done,
   * rejects with the recorded error on failed or with a timeout message.
   */
  async pollUntilDone(
    jobId: string,
    opts: { intervalMs?: number; timeoutMs?: number; onUpdate?: (s: JobStatus) => void } = {}
  ): Promise<JobStatus> {
    const interval = opts.intervalMs ?? 500;
    const deadline = Date.now() + (opts.timeoutMs ?? 120_000);
    for (;;) {
      const status = await this.getStatus(jobId);
      opts.onUpdate?.(status);
      if (status.status === "done") return status;
      if (status.status === "failed") {
        throw new ApiError(409, status.error ?? "job failed");
      }
      if (Date.now() > deadline) {
        throw new ApiError(0, `Timed out waiting for job ${jobId}`);
      }
      await new Promise((resolve) => setTimeout(resolve, interval));
    }
  }
}
