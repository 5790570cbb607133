/**
 * Presence-curve panel drawing. Layout math lives in curves.ts; this file
 * only strokes the polylines onto a canvas context.
 */

import { LayerSeries, layoutCurves } from "./curves.js";

const LAYER_COLORS = ["#2563eb", "#dc2626", "#059669", "#d97706", "#7c3aed", "#0891b2"];

export function drawCurves(
  ctx: CanvasRenderingContext2D,
  series: LayerSeries[],
  width: number,
  height: number
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#fafafa";
  ctx.fillRect(0, 0, width, height);
  ctx.strokeStyle = "#d4d4d4";
  ctx.strokeRect(0.5, 0.5, width - 1, height - 1);

  const pad = 24;
  const innerW = width - 2 * pad;
  const innerH = height - 2 * pad;

  // Presence gridlines at 0, 0.5, 1.
  ctx.fillStyle = "#9ca3af";
  ctx.font = "10px sans-serif";
  for (const p of [0, 0.5, 1]) {
    const y = pad + (1 - p) * innerH;
    ctx.strokeStyle = "#e5e7eb";
    ctx.beginPath();
    ctx.moveTo(pad, y);
    ctx.lineTo(pad + innerW, y);
    ctx.stroke();
    ctx.fillText(p.toFixed(1), 4, y + 3);
  }

  const layerIndex = new Map(series.map((s, i) => [s.layerId, i]));
  for (const line of layoutCurves(series, innerW, innerH)) {
    const layerId = line.label.split(/[ :]/)[0];
    const color = LAYER_COLORS[(layerIndex.get(layerId) ?? 0) % LAYER_COLORS.length];
    ctx.strokeStyle = color;
    ctx.globalAlpha = line.highlighted ? 1.0 : 0.25;
    ctx.lineWidth = line.highlighted ? 2.5 : 1.0;
    ctx.beginPath();
    line.points.forEach(([x, y], i) => {
      if (i === 0) ctx.moveTo(pad + x, pad + y);
      else ctx.lineTo(pad + x, pad + y);
    });
    ctx.stroke();
  }
  ctx.globalAlpha = 1.0;

  // Legend.
  let lx = pad;
  for (const s of series) {
    const color = LAYER_COLORS[(layerIndex.get(s.layerId) ?? 0) % LAYER_COLORS.length];
    ctx.fillStyle = color;
    ctx.fillRect(lx, 6, 10, 10);
    ctx.fillStyle = "#374151";
    ctx.fillText(s.layerId, lx + 14, 15);
    lx += 14 + ctx.measureText(s.layerId).width + 16;
  }
}
