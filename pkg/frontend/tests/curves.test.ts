import { describe, expect, it } from "vitest";

import { isEmptyLog, layoutCurves, parseCurveLog } from "../src/curves.js";

function line(layer: string, t: number, token: number | string, presence: number): string {
  return JSON.stringify({
    job_id: "j",
    timestep: t,
    layer_id: layer,
    token_index: token,
    presence,
  });
}

describe("parseCurveLog", () => {
  it("splits region means from token curves per layer", () => {
    const text = [
      line("attn0", 3, 5, 0.9),
      line("attn0", 3, "region", 0.9),
      line("attn1", 3, "region", 0.8),
      line("attn0", 2, 5, 0.7),
      line("attn0", 2, "region", 0.7),
      line("attn1", 2, "region", 0.6),
      "",
    ].join("\n");
    const series = parseCurveLog(text);
    expect(series.map((s) => s.layerId)).toEqual(["attn0", "attn1"]);
    expect(series[0].timesteps).toEqual([3, 2]);
    expect(series[0].region).toEqual([0.9, 0.7]);
    expect(series[0].tokens.get(5)).toEqual([0.9, 0.7]);
    expect(series[1].tokens.size).toBe(0);
  });

  it("treats blank logs as empty", () => {
    expect(isEmptyLog("")).toBe(true);
    expect(isEmptyLog("\n\n")).toBe(true);
    expect(isEmptyLog(line("a", 1, "region", 0.5))).toBe(false);
  });

  it("raises on malformed lines", () => {
    expect(() => parseCurveLog("{nope")).toThrow(/bad curve log line/);
  });
});

describe("layoutCurves", () => {
  it("maps presence 1 to the top and 0 to the bottom", () => {
    const series = parseCurveLog(
      [line("attn0", 2, "region", 1.0), line("attn0", 1, "region", 0.0)].join("\n")
    );
    const [lineOut] = layoutCurves(series, 100, 50);
    expect(lineOut.highlighted).toBe(true);
    expect(lineOut.points[0]).toEqual([0, 0]);
    expect(lineOut.points[1]).toEqual([100, 50]);
  });

  it("highlights exactly the region means", () => {
    const text = [
      line("attn0", 2, 0, 0.5),
      line("attn0", 2, "region", 0.5),
      line("attn0", 1, 0, 0.4),
      line("attn0", 1, "region", 0.4),
    ].join("\n");
    const lines = layoutCurves(parseCurveLog(text), 10, 10);
    expect(lines.filter((l) => l.highlighted)).toHaveLength(1);
    expect(lines.filter((l) => !l.highlighted)).toHaveLength(1);
  });

  it("caps the number of per-token curves", () => {
    const parts: string[] = [];
    for (let t = 2; t >= 1; t--) {
      for (let token = 0; token < 30; token++) parts.push(line("attn0", t, token, 0.5));
      parts.push(line("attn0", t, "region", 0.5));
    }
    const lines = layoutCurves(parseCurveLog(parts.join("\n")), 10, 10, { maxTokenCurves: 4 });
    expect(lines.filter((l) => !l.highlighted)).toHaveLength(4);
  });
});
