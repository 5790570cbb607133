/**
 * End-to-end against the real removal service: spawns `objerase serve` on a
 * scratch data directory and drives toy jobs through the client exactly as
 * the page does.
 */

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiError, RemovalClient, statusMessage } from "../src/api.js";
import { isEmptyLog, parseCurveLog } from "../src/curves.js";
import { encodeGrayPng, encodeMaskPng, encodeRgbPng } from "../src/png.js";
import { PAINTED, createRaster, paintDisk } from "../src/raster.js";
import { JobTracker } from "../src/tracker.js";

const PORT = 18200 + (process.pid % 1500);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;

function testImage(): Uint8Array {
  const w = 16;
  const h = 16;
  const pixels = new Uint8Array(w * h * 3);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const i = (y * w + x) * 3;
      pixels[i] = 30 + x * 12;
      pixels[i + 1] = 40 + y * 10;
      pixels[i + 2] = 90;
      if (x >= 5 && x < 11 && y >= 5 && y < 11) {
        pixels[i] = 240;
        pixels[i + 1] = 220;
        pixels[i + 2] = 40;
      }
    }
  }
  return encodeRgbPng(pixels, w, h);
}

function testMaskRaster() {
  const raster = createRaster(16, 16);
  paintDisk(raster, 7.5, 7.5, 3.5);
  return raster;
}

async function serverReady(): Promise<void> {
  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      const resp = await fetch(`${BASE}/v1/jobs/warmup-probe`);
      if (resp.status === 404) return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) throw new Error("service did not come up");
    await new Promise((r) => setTimeout(r, 150));
  }
}

beforeAll(async () => {
  const dataDir = mkdtempSync(join(tmpdir(), "mask-studio-it-"));
  server = spawn("objerase", ["serve", "--data", dataDir, "--port", String(PORT)], {
    stdio: "ignore",
  });
  await serverReady();
});

afterAll(() => {
  server?.kill();
});

const CONFIG = { steps: 10, seed: 0, strategy: "token", backend: "toy" };

async function expectApiError(promise: Promise<unknown>): Promise<ApiError> {
  try {
    await promise;
  } catch (err) {
    expect(err).toBeInstanceOf(ApiError);
    return err as ApiError;
  }
  throw new Error("expected the call to fail");
}

describe("job tracking against the live service", () => {
  it("reaches done and holds a renderable result", async () => {
    const tracker = new JobTracker(new RemovalClient(BASE));
    const view = await tracker.run(testImage(), encodeMaskPng(testMaskRaster()), CONFIG, {
      intervalMs: 100,
      timeoutMs: 60_000,
    });
    expect(view.phase).toBe("done");
    expect(view.serverStatus).toBe("done");
    expect(view.resultPng).not.toBeNull();
    const png = view.resultPng as Uint8Array;
    expect([...png.slice(0, 8)]).toEqual([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

    const series = parseCurveLog(view.curvesText as string);
    expect(series.length).toBeGreaterThan(0);
    for (const layer of series) {
      expect(layer.region.length).toBe(CONFIG.steps);
      expect(layer.region[0]).toBeCloseTo(1.0, 6);
    }
  });

  it("binarizes a UI-exported mask identically to a file-based PNG", async () => {
    // The exported mask uses {0, 255}; an externally produced file with
    // {30, 200} binarizes to the same token mask, so the results match
    // byte for byte under the same config and seed.
    const raster = testMaskRaster();
    const filePixels = new Uint8Array(raster.data.length);
    for (let i = 0; i < raster.data.length; i++) {
      filePixels[i] = raster.data[i] === PAINTED ? 200 : 30;
    }
    const client = new RemovalClient(BASE);
    const image = testImage();

    const uiJob = await client.submitJob(image, encodeMaskPng(raster), CONFIG);
    const fileJob = await client.submitJob(
      image,
      encodeGrayPng(filePixels, raster.width, raster.height),
      CONFIG
    );
    await client.pollUntilDone(uiJob, { intervalMs: 100 });
    await client.pollUntilDone(fileJob, { intervalMs: 100 });

    const a = await client.getResult(uiJob);
    const b = await client.getResult(fileJob);
    expect(Buffer.from(a).equals(Buffer.from(b))).toBe(true);
    expect(uiJob).not.toBe(fileJob); // resubmission always makes a new job
  });

  it("surfaces 404 and 409 as user-facing messages", async () => {
    const client = new RemovalClient(BASE);

    const missing = await expectApiError(client.getStatus("does-not-exist"));
    expect(missing.status).toBe(404);
    expect(statusMessage(missing.status, missing.message)).toMatch(/not found/i);

    // A job that fails fast (unknown backend) is never done, so the result
    // endpoint answers 409.
    const jobId = await client.submitJob(testImage(), encodeMaskPng(testMaskRaster()), {
      ...CONFIG,
      backend: "missing",
    });
    await expect(client.pollUntilDone(jobId, { intervalMs: 100 })).rejects.toBeInstanceOf(
      ApiError
    );
    const early = await expectApiError(client.getResult(jobId));
    expect(early.status).toBe(409);
    expect(statusMessage(early.status, early.message)).toMatch(/not ready|queued/i);
  });

  it("shows the empty state for strategies without presence", async () => {
    const client = new RemovalClient(BASE);
    const jobId = await client.submitJob(testImage(), encodeMaskPng(testMaskRaster()), {
      ...CONFIG,
      strategy: "full",
    });
    await client.pollUntilDone(jobId, { intervalMs: 100 });
    const curves = await client.getCurves(jobId);
    expect(isEmptyLog(curves)).toBe(true);
  });

  it("cancels queued jobs or reports why it cannot", async () => {
    const client = new RemovalClient(BASE);
    const jobId = await client.submitJob(testImage(), encodeMaskPng(testMaskRaster()), CONFIG);
    // The worker may grab the job immediately; both outcomes are valid,
    // but each must map to the documented behavior.
    try {
      await client.cancel(jobId);
      const status = await client.getStatus(jobId);
      expect(status.status).toBe("failed");
      expect(status.error).toMatch(/cancel/i);
    } catch (err) {
      expect(err).toBeInstanceOf(ApiError);
      expect((err as ApiError).status).toBe(409);
    }
  });
});
