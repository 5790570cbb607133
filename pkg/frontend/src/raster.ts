/**
 * Binary mask rasters and the editing state behind the canvas.
 *
 * Rasters always match the loaded image's pixel dimensions; painted pixels
 * are 255, everything else 0. All operations here are DOM-free so the
 * editing logic is unit-testable.
 */

export const PAINTED = 255;

export interface MaskRaster {
  width: number;
  height: number;
  /** Row-major, one byte per pixel, values 0 or 255. */
  data: Uint8Array;
}

export function createRaster(width: number, height: number): MaskRaster {
  if (width < 1 || height < 1) {
    throw new Error(`raster dimensions must be positive, got ${width}x${height}`);
  }
  return { width, height, data: new Uint8Array(width * height) };
}

export function cloneRaster(raster: MaskRaster): MaskRaster {
  return { width: raster.width, height: raster.height, data: raster.data.slice() };
}

export function rastersEqual(a: MaskRaster, b: MaskRaster): boolean {
  if (a.width !== b.width || a.height !== b.height) return false;
  for (let i = 0; i < a.data.length; i++) {
    if (a.data[i] !== b.data[i]) return false;
  }
  return true;
}

export function paintedCount(raster: MaskRaster): number {
  let n = 0;
  for (const v of raster.data) if (v === PAINTED) n++;
  return n;
}

export function isEmpty(raster: MaskRaster): boolean {
  return paintedCount(raster) === 0;
}

/** Paint a euclidean disk; coordinates may fall partly outside the raster. */
export function paintDisk(
  raster: MaskRaster,
  cx: number,
  cy: number,
  radius: number,
  erase = false
): void {
  const value = erase ? 0 : PAINTED;
  const r = Math.max(0, radius);
  const x0 = Math.max(0, Math.floor(cx - r));
  const x1 = Math.min(raster.width - 1, Math.ceil(cx + r));
  const y0 = Math.max(0, Math.floor(cy - r));
  const y1 = Math.min(raster.height - 1, Math.ceil(cy + r));
  const r2 = r * r;
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const dx = x - cx;
      const dy = y - cy;
      if (dx * dx + dy * dy <= r2) {
        raster.data[y * raster.width + x] = value;
      }
    }
  }
}

/** Paint along a segment so fast pointer moves leave no gaps. */
export function paintStroke(
  raster: MaskRaster,
  x0: number,
  y0: number,
  x1: number,
  y1: number,
  radius: number,
  erase = false
): void {
  const steps = Math.max(1, Math.ceil(Math.hypot(x1 - x0, y1 - y0)));
  for (let i = 0; i <= steps; i++) {
    const t = i / steps;
    paintDisk(raster, x0 + (x1 - x0) * t, y0 + (y1 - y0) * t, radius, erase);
  }
}

/**
 * Grow the mask by a euclidean disk, mirroring the server's loose-mask
 * dilation so previews match what a dilate_px config would produce.
 */
export function dilateRaster(raster: MaskRaster, radius: number): MaskRaster {
  if (radius < 0) throw new Error("dilation radius must be >= 0");
  const out = cloneRaster(raster);
  if (radius === 0) return out;
  const offsets: Array<[number, number]> = [];
  for (let dy = -radius; dy <= radius; dy++) {
    for (let dx = -radius; dx <= radius; dx++) {
      if (dx * dx + dy * dy <= radius * radius) offsets.push([dx, dy]);
    }
  }
  for (let y = 0; y < raster.height; y++) {
    for (let x = 0; x < raster.width; x++) {
      if (raster.data[y * raster.width + x] !== PAINTED) continue;
      for (const [dx, dy] of offsets) {
        const nx = x + dx;
        const ny = y + dy;
        if (nx >= 0 && nx < raster.width && ny >= 0 && ny < raster.height) {
          out.data[ny * raster.width + nx] = PAINTED;
        }
      }
    }
  }
  return out;
}

export type EditMode = "brush";

/**
 * Canvas-facing editing state: current raster, brush, bounded undo stack.
 * Undo restores the exact prior raster bytes.
 */
export class MaskEditor {
  raster: MaskRaster;
  brushRadius = 8;
  erasing = false;
  readonly mode: EditMode = "brush";
  private undoStack: MaskRaster[] = [];
  private strokeActive = false;
  private lastX = 0;
  private lastY = 0;

  constructor(width: number, height: number, readonly maxUndo = 50) {
    this.raster = createRaster(width, height);
  }

  get undoDepth(): number {
    return this.undoStack.length;
  }

  private snapshot(): void {
    this.undoStack.push(cloneRaster(this.raster));
    if (this.undoStack.length > this.maxUndo) this.undoStack.shift();
  }

  beginStroke(x: number, y: number): void {
    this.snapshot();
    this.strokeActive = true;
    this.lastX = x;
    this.lastY = y;
    paintDisk(this.raster, x, y, this.brushRadius, this.erasing);
  }

  continueStroke(x: number, y: number): void {
    if (!this.strokeActive) return;
    paintStroke(this.raster, this.lastX, this.lastY, x, y, this.brushRadius, this.erasing);
    this.lastX = x;
    this.lastY = y;
  }

  endStroke(): void {
    this.strokeActive = false;
  }

  undo(): boolean {
    const prior = this.undoStack.pop();
    if (!prior) return false;
    this.raster = prior;
    this.strokeActive = false;
    return true;
  }

  clear(): void {
    this.snapshot();
    this.raster = createRaster(this.raster.width, this.raster.height);
  }

  applyDilation(radius: number): void {
    this.snapshot();
    this.raster = dilateRaster(this.raster, radius);
  }

  isEmpty(): boolean {
    return isEmpty(this.raster);
  }
}
