/**
 * Mask studio page: load an image, paint the removal mask, submit a job,
 * compare before/after, inspect presence curves, tweak and resubmit.
 */

import { RemovalClient, RemovalConfigFields } from "./api.js";
import { drawCurves } from "./chart.js";
import { isEmptyLog, parseCurveLog } from "./curves.js";
import { encodeMaskPng } from "./png.js";
import { MaskEditor, PAINTED } from "./raster.js";
import { JobTracker, JobView } from "./tracker.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const imageInput = el<HTMLInputElement>("image-input");
const maskImport = el<HTMLInputElement>("mask-import");
const baseCanvas = el<HTMLCanvasElement>("base-canvas");
const maskCanvas = el<HTMLCanvasElement>("mask-canvas");
const brushSize = el<HTMLInputElement>("brush-size");
const eraserToggle = el<HTMLInputElement>("eraser-toggle");
const undoButton = el<HTMLButtonElement>("undo-button");
const clearButton = el<HTMLButtonElement>("clear-button");
const dilateRange = el<HTMLInputElement>("dilate-range");
const dilateValue = el<HTMLSpanElement>("dilate-value");
const dilateButton = el<HTMLButtonElement>("dilate-button");
const exportButton = el<HTMLButtonElement>("export-button");
const submitButton = el<HTMLButtonElement>("submit-button");
const statusLine = el<HTMLDivElement>("status-line");
const serviceUrl = el<HTMLInputElement>("service-url");
const strategySelect = el<HTMLSelectElement>("strategy-select");
const referenceSelect = el<HTMLSelectElement>("reference-select");
const stepsInput = el<HTMLInputElement>("steps-input");
const seedInput = el<HTMLInputElement>("seed-input");
const compareWrap = el<HTMLDivElement>("compare-wrap");
const beforeImg = el<HTMLImageElement>("before-img");
const afterImg = el<HTMLImageElement>("after-img");
const afterClip = el<HTMLDivElement>("after-clip");
const compareRange = el<HTMLInputElement>("compare-range");
const curveCanvas = el<HTMLCanvasElement>("curve-canvas");
const curveEmpty = el<HTMLDivElement>("curve-empty");

let editor: MaskEditor | null = null;
let imageBytes: Uint8Array | null = null;
let imageUrl: string | null = null;
let resultUrl: string | null = null;
let painting = false;

function setStatus(text: string, kind: "info" | "error" = "info"): void {
  statusLine.textContent = text;
  statusLine.className = kind === "error" ? "status error" : "status";
}

function refreshSubmitState(): void {
  const empty = !editor || editor.isEmpty();
  submitButton.disabled = empty || !imageBytes;
  exportButton.disabled = empty;
  submitButton.title = empty ? "Paint a mask first" : "";
}

function redrawOverlay(): void {
  if (!editor) return;
  const ctx = maskCanvas.getContext("2d")!;
  const { width, height, data } = editor.raster;
  const overlay = ctx.createImageData(width, height);
  for (let i = 0; i < data.length; i++) {
    if (data[i] === PAINTED) {
      overlay.data[i * 4] = 239;
      overlay.data[i * 4 + 1] = 68;
      overlay.data[i * 4 + 2] = 68;
      overlay.data[i * 4 + 3] = 140;
    }
  }
  ctx.clearRect(0, 0, width, height);
  ctx.putImageData(overlay, 0, 0);
  refreshSubmitState();
}

function canvasPoint(event: PointerEvent): [number, number] {
  const rect = maskCanvas.getBoundingClientRect();
  const x = ((event.clientX - rect.left) / rect.width) * maskCanvas.width;
  const y = ((event.clientY - rect.top) / rect.height) * maskCanvas.height;
  return [x, y];
}

async function loadImageFile(file: File): Promise<void> {
  imageBytes = new Uint8Array(await file.arrayBuffer());
  const bitmap = await createImageBitmap(new Blob([imageBytes.buffer as ArrayBuffer]));
  baseCanvas.width = maskCanvas.width = bitmap.width;
  baseCanvas.height = maskCanvas.height = bitmap.height;
  baseCanvas.getContext("2d")!.drawImage(bitmap, 0, 0);
  editor = new MaskEditor(bitmap.width, bitmap.height);
  if (imageUrl) URL.revokeObjectURL(imageUrl);
  imageUrl = URL.createObjectURL(new Blob([imageBytes.buffer as ArrayBuffer], { type: file.type }));
  beforeImg.src = imageUrl;
  compareWrap.classList.add("hidden");
  redrawOverlay();
  setStatus(`Loaded ${file.name} (${bitmap.width}x${bitmap.height}). Paint the object to remove.`);
}

async function importMaskFile(file: File): Promise<void> {
  if (!editor) {
    setStatus("Load an image before importing a mask.", "error");
    return;
  }
  const bitmap = await createImageBitmap(new Blob([await file.arrayBuffer()]));
  if (bitmap.width !== editor.raster.width || bitmap.height !== editor.raster.height) {
    setStatus(
      `Mask is ${bitmap.width}x${bitmap.height} but the image is ` +
        `${editor.raster.width}x${editor.raster.height}.`,
      "error"
    );
    return;
  }
  const scratch = document.createElement("canvas");
  scratch.width = bitmap.width;
  scratch.height = bitmap.height;
  const ctx = scratch.getContext("2d")!;
  ctx.drawImage(bitmap, 0, 0);
  const pixels = ctx.getImageData(0, 0, bitmap.width, bitmap.height).data;
  editor.clear();
  for (let i = 0; i < bitmap.width * bitmap.height; i++) {
    if (pixels[i * 4] >= 128) editor.raster.data[i] = PAINTED;
  }
  redrawOverlay();
  setStatus("Mask imported.");
}

function currentConfig(): RemovalConfigFields {
  return {
    steps: Number(stepsInput.value) || 50,
    seed: Number(seedInput.value) || 0,
    strategy: strategySelect.value,
    reference: referenceSelect.value,
    backend: "toy",
  };
}

function renderCurvePanel(view: JobView): void {
  if (!view.curvesText || isEmptyLog(view.curvesText)) {
    curveCanvas.classList.add("hidden");
    curveEmpty.classList.remove("hidden");
    curveEmpty.textContent =
      "No presence curves for this job (the strategy does not score presence).";
    return;
  }
  curveEmpty.classList.add("hidden");
  curveCanvas.classList.remove("hidden");
  const series = parseCurveLog(view.curvesText);
  drawCurves(curveCanvas.getContext("2d")!, series, curveCanvas.width, curveCanvas.height);
}

function renderResult(view: JobView): void {
  if (!view.resultPng || !imageUrl) return;
  if (resultUrl) URL.revokeObjectURL(resultUrl);
  resultUrl = URL.createObjectURL(
    new Blob([view.resultPng.buffer as ArrayBuffer], { type: "image/png" })
  );
  afterImg.src = resultUrl;
  compareWrap.classList.remove("hidden");
  applyCompare();
  renderCurvePanel(view);
}

function applyCompare(): void {
  const pct = Number(compareRange.value);
  afterClip.style.width = `${pct}%`;
}

async function submit(): Promise<void> {
  if (!editor || !imageBytes || editor.isEmpty()) return;
  submitButton.disabled = true;
  const maskPng = encodeMaskPng(editor.raster);
  const client = new RemovalClient(serviceUrl.value);
  const tracker = new JobTracker(client, (view) => {
    setStatus(view.message, view.phase === "error" ? "error" : "info");
  });
  const view = await tracker.run(imageBytes, maskPng, currentConfig());
  if (view.phase === "done") {
    renderResult(view);
    setStatus(`Job ${view.jobId} done. Adjust the mask or settings and resubmit if needed.`);
  }
  refreshSubmitState();
}

imageInput.addEventListener("change", () => {
  const file = imageInput.files?.[0];
  if (file) void loadImageFile(file);
});

maskImport.addEventListener("change", () => {
  const file = maskImport.files?.[0];
  if (file) void importMaskFile(file);
});

maskCanvas.addEventListener("pointerdown", (e) => {
  if (!editor) return;
  painting = true;
  maskCanvas.setPointerCapture(e.pointerId);
  editor.brushRadius = Number(brushSize.value);
  editor.erasing = eraserToggle.checked;
  const [x, y] = canvasPoint(e);
  editor.beginStroke(x, y);
  redrawOverlay();
});

maskCanvas.addEventListener("pointermove", (e) => {
  if (!painting || !editor) return;
  const [x, y] = canvasPoint(e);
  editor.continueStroke(x, y);
  redrawOverlay();
});

maskCanvas.addEventListener("pointerup", () => {
  painting = false;
  editor?.endStroke();
});

undoButton.addEventListener("click", () => {
  if (editor?.undo()) redrawOverlay();
});

clearButton.addEventListener("click", () => {
  editor?.clear();
  redrawOverlay();
});

dilateRange.addEventListener("input", () => {
  dilateValue.textContent = `${dilateRange.value}px`;
});

dilateButton.addEventListener("click", () => {
  if (!editor) return;
  editor.applyDilation(Number(dilateRange.value));
  redrawOverlay();
  setStatus(`Mask dilated by ${dilateRange.value}px. Submit to run with the looser mask.`);
});

exportButton.addEventListener("click", () => {
  if (!editor) return;
  const bytes = encodeMaskPng(editor.raster);
  const url = URL.createObjectURL(new Blob([bytes.buffer as ArrayBuffer], { type: "image/png" }));
  const link = document.createElement("a");
  link.href = url;
  link.download = "mask.png";
  link.click();
  URL.revokeObjectURL(url);
});

submitButton.addEventListener("click", () => void submit());
compareRange.addEventListener("input", applyCompare);

setStatus("Load a PNG image to start.");
refreshSubmitState();
