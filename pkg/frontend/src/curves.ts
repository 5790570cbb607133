/**
 * Presence-log parsing: JSONL records -> per-layer series for the chart.
 */

export const REGION_TOKEN = "region";

export interface CurveRecord {
  job_id: string;
  timestep: number;
  layer_id: string;
  token_index: number | string;
  presence: number;
}

export interface LayerSeries {
  layerId: string;
  /** Run order (first entry is the first denoising step, t = T). */
  timesteps: number[];
  region: number[];
  tokens: Map<number, number[]>;
}

export function parseCurveLog(text: string): LayerSeries[] {
  const byLayer = new Map<string, LayerSeries>();
  for (const line of text.split("\n")) {
    const trimmed = line.trim();
    if (!trimmed) continue;
    let record: CurveRecord;
    try {
      record = JSON.parse(trimmed) as CurveRecord;
    } catch {
      throw new Error(`bad curve log line: ${trimmed.slice(0, 80)}`);
    }
    let series = byLayer.get(record.layer_id);
    if (!series) {
      series = { layerId: record.layer_id, timesteps: [], region: [], tokens: new Map() };
      byLayer.set(record.layer_id, series);
    }
    if (record.token_index === REGION_TOKEN) {
      series.timesteps.push(record.timestep);
      series.region.push(record.presence);
    } else {
      const idx = Number(record.token_index);
      let arr = series.tokens.get(idx);
      if (!arr) {
        arr = [];
        series.tokens.set(idx, arr);
      }
      arr.push(record.presence);
    }
  }
  return [...byLayer.values()].sort((a, b) => a.layerId.localeCompare(b.layerId));
}

export function isEmptyLog(text: string): boolean {
  return parseCurveLog(text).length === 0;
}

export interface Polyline {
  label: string;
  highlighted: boolean;
  /** Chart-space points, x left-to-right in run order. */
  points: Array<[number, number]>;
}

/**
 * Lay the series out in a width x height box: x advances with run order,
 * y spans [0, 1] presence (1 at the top). Region means are highlighted;
 * token curves come along dimmed.
 */
export function layoutCurves(
  series: LayerSeries[],
  width: number,
  height: number,
  opts: { maxTokenCurves?: number } = {}
): Polyline[] {
  const maxTokens = opts.maxTokenCurves ?? 12;
  const lines: Polyline[] = [];
  for (const layer of series) {
    const n = layer.region.length;
    if (n === 0) continue;
    const xAt = (i: number) => (n === 1 ? width / 2 : (i / (n - 1)) * width);
    const yAt = (p: number) => (1 - Math.min(Math.max(p, 0), 1)) * height;
    let count = 0;
    for (const [token, values] of layer.tokens) {
      if (count >= maxTokens) break;
      if (values.length !== n) continue;
      lines.push({
        label: `${layer.layerId}:${token}`,
        highlighted: false,
        points: values.map((p, i) => [xAt(i), yAt(p)] as [number, number]),
      });
      count++;
    }
    lines.push({
      label: `${layer.layerId} mean`,
      highlighted: true,
      points: layer.region.map((p, i) => [xAt(i), yAt(p)] as [number, number]),
    });
  }
  return lines;
}
