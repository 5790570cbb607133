/**
 * Dependency-free PNG encode/decode for the mask pipeline.
 *
 * The encoder writes 8-bit grayscale (masks) or RGB (test fixtures) with
 * filter 0 scanlines inside a zlib stream of stored deflate blocks; output
 * is a fully standard PNG every decoder accepts, and the byte-for-byte
 * layout is deterministic so exported masks can be compared exactly.
 *
 * The decoder handles exactly that subset (non-interlaced, 8-bit, gray or
 * RGB, stored blocks, filter 0), which round-trips everything this app
 * produces; arbitrary PNGs from elsewhere are decoded by the browser's
 * canvas instead.
 */

import { MaskRaster, PAINTED } from "./raster.js";

const SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(...parts: Uint8Array[]): number {
  let crc = 0xffffffff;
  for (const part of parts) {
    for (let i = 0; i < part.length; i++) {
      crc = CRC_TABLE[(crc ^ part[i]) & 0xff] ^ (crc >>> 8);
    }
  }
  return (crc ^ 0xffffffff) >>> 0;
}

function adler32(data: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < data.length; i++) {
    a = (a + data[i]) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function be32(value: number): Uint8Array {
  return new Uint8Array([(value >>> 24) & 0xff, (value >>> 16) & 0xff, (value >>> 8) & 0xff, value & 0xff]);
}

function ascii(text: string): Uint8Array {
  return new Uint8Array([...text].map((c) => c.charCodeAt(0)));
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const typeBytes = ascii(type);
  const out = new Uint8Array(12 + data.length);
  out.set(be32(data.length), 0);
  out.set(typeBytes, 4);
  out.set(data, 8);
  out.set(be32(crc32(typeBytes, data)), 8 + data.length);
  return out;
}

/** zlib stream with stored (uncompressed) deflate blocks. */
function zlibStore(raw: Uint8Array): Uint8Array {
  const blocks: Uint8Array[] = [new Uint8Array([0x78, 0x01])];
  const max = 65535;
  for (let off = 0; off < raw.length || off === 0; off += max) {
    const slice = raw.subarray(off, Math.min(off + max, raw.length));
    const last = off + max >= raw.length;
    const header = new Uint8Array(5);
    header[0] = last ? 1 : 0;
    header[1] = slice.length & 0xff;
    header[2] = (slice.length >>> 8) & 0xff;
    header[3] = ~slice.length & 0xff;
    header[4] = (~slice.length >>> 8) & 0xff;
    blocks.push(header, slice);
    if (last) break;
  }
  blocks.push(be32(adler32(raw)));
  return concat(blocks);
}

function concat(parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let off = 0;
  for (const part of parts) {
    out.set(part, off);
    off += part.length;
  }
  return out;
}

function encodePng(pixels: Uint8Array, width: number, height: number, channels: 1 | 3): Uint8Array {
  if (pixels.length !== width * height * channels) {
    throw new Error(`pixel buffer length ${pixels.length} != ${width}x${height}x${channels}`);
  }
  const stride = width * channels;
  const raw = new Uint8Array((stride + 1) * height);
  for (let y = 0; y < height; y++) {
    raw[y * (stride + 1)] = 0; // filter type 0
    raw.set(pixels.subarray(y * stride, (y + 1) * stride), y * (stride + 1) + 1);
  }
  const ihdr = new Uint8Array(13);
  ihdr.set(be32(width), 0);
  ihdr.set(be32(height), 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = channels === 1 ? 0 : 2; // color type: gray | rgb
  const parts = [
    new Uint8Array(SIGNATURE),
    chunk("IHDR", ihdr),
    chunk("IDAT", zlibStore(raw)),
    chunk("IEND", new Uint8Array(0)),
  ];
  return concat(parts);
}

/** Canonical mask export: single-channel PNG, painted = 255, rest = 0. */
export function encodeMaskPng(raster: MaskRaster): Uint8Array {
  return encodePng(raster.data, raster.width, raster.height, 1);
}

/** 8-bit grayscale PNG from arbitrary values (test fixtures, parity checks). */
export function encodeGrayPng(pixels: Uint8Array, width: number, height: number): Uint8Array {
  return encodePng(pixels, width, height, 1);
}

/** 8-bit RGB PNG (test fixtures for job submissions). */
export function encodeRgbPng(pixels: Uint8Array, width: number, height: number): Uint8Array {
  return encodePng(pixels, width, height, 3);
}

export interface DecodedPng {
  width: number;
  height: number;
  channels: 1 | 3;
  pixels: Uint8Array;
}

function readBe32(bytes: Uint8Array, off: number): number {
  return ((bytes[off] << 24) | (bytes[off + 1] << 16) | (bytes[off + 2] << 8) | bytes[off + 3]) >>> 0;
}

function inflateStored(stream: Uint8Array): Uint8Array {
  // zlib header then stored deflate blocks only.
  if ((stream[0] & 0x0f) !== 8) throw new Error("not a zlib deflate stream");
  let off = 2;
  const parts: Uint8Array[] = [];
  for (;;) {
    const header = stream[off];
    if ((header & 0x06) !== 0) throw new Error("compressed deflate blocks unsupported");
    const len = stream[off + 1] | (stream[off + 2] << 8);
    parts.push(stream.subarray(off + 5, off + 5 + len));
    off += 5 + len;
    if (header & 1) break;
  }
  const raw = concat(parts);
  const expected = readBe32(stream, off);
  if (adler32(raw) !== expected) throw new Error("zlib checksum mismatch");
  return raw;
}

export function decodePng(bytes: Uint8Array): DecodedPng {
  for (let i = 0; i < SIGNATURE.length; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a PNG");
  }
  let off = 8;
  let width = 0;
  let height = 0;
  let channels: 1 | 3 = 1;
  const idat: Uint8Array[] = [];
  while (off < bytes.length) {
    const len = readBe32(bytes, off);
    const type = String.fromCharCode(...bytes.subarray(off + 4, off + 8));
    const data = bytes.subarray(off + 8, off + 8 + len);
    if (type === "IHDR") {
      width = readBe32(data, 0);
      height = readBe32(data, 4);
      if (data[8] !== 8) throw new Error("only 8-bit PNGs supported");
      if (data[9] === 0) channels = 1;
      else if (data[9] === 2) channels = 3;
      else throw new Error(`unsupported color type ${data[9]}`);
      if (data[12] !== 0) throw new Error("interlaced PNGs unsupported");
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      break;
    }
    off += 12 + len;
  }
  if (!width || !height) throw new Error("missing IHDR");
  const raw = inflateStored(concat(idat));
  const stride = width * channels;
  if (raw.length !== (stride + 1) * height) throw new Error("unexpected scanline data length");
  const pixels = new Uint8Array(stride * height);
  for (let y = 0; y < height; y++) {
    if (raw[y * (stride + 1)] !== 0) throw new Error("only filter 0 scanlines supported");
    pixels.set(raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1)), y * stride);
  }
  return { width, height, channels, pixels };
}

/** Decode a mask PNG back to a raster using the server's >= 128 rule. */
export function decodeMaskPng(bytes: Uint8Array): MaskRaster {
  const decoded = decodePng(bytes);
  if (decoded.channels !== 1) throw new Error("mask PNGs must be single-channel");
  const data = new Uint8Array(decoded.pixels.length);
  for (let i = 0; i < data.length; i++) {
    data[i] = decoded.pixels[i] >= 128 ? PAINTED : 0;
  }
  return { width: decoded.width, height: decoded.height, data };
}
