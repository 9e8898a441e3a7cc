/**
 * Minimal dependency-free grayscale PNG codec for mask export.
 *
 * Encodes 8-bit single-channel PNGs (0 = known, 255 = missing) using
 * stored (uncompressed) deflate blocks, which every PNG reader accepts and
 * which makes the output bit-deterministic. The decoder handles exactly the
 * subset the encoder emits and is used for round-trip verification; arbitrary
 * PNGs are imported through the browser's native decoder instead.
 */

import { MaskBitmap } from "./mask.js";

const SIGNATURE = [137, 80, 78, 71, 13, 10, 26, 10];

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

function crc32(bytes: Uint8Array): number {
  let crc = 0xffffffff;
  for (const b of bytes) {
    crc = CRC_TABLE[(crc ^ b) & 0xff] ^ (crc >>> 8);
  }
  return (crc ^ 0xffffffff) >>> 0;
}

function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (const v of bytes) {
    a = (a + v) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function u32be(value: number): Uint8Array {
  return new Uint8Array([(value >>> 24) & 0xff, (value >>> 16) & 0xff, (value >>> 8) & 0xff, value & 0xff]);
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const typeBytes = new TextEncoder().encode(type);
  const body = new Uint8Array(typeBytes.length + data.length);
  body.set(typeBytes);
  body.set(data, typeBytes.length);
  const out = new Uint8Array(4 + body.length + 4);
  out.set(u32be(data.length));
  out.set(body, 4);
  out.set(u32be(crc32(body)), 4 + body.length);
  return out;
}

function zlibStored(raw: Uint8Array): Uint8Array {
  const blocks: Uint8Array[] = [new Uint8Array([0x78, 0x01])];
  const maxBlock = 65535;
  for (let off = 0; off < raw.length; off += maxBlock) {
    const slice = raw.subarray(off, Math.min(off + maxBlock, raw.length));
    const final = off + maxBlock >= raw.length ? 1 : 0;
    const header = new Uint8Array(5);
    header[0] = final; // BTYPE 00 = stored
    header[1] = slice.length & 0xff;
    header[2] = (slice.length >>> 8) & 0xff;
    header[3] = ~slice.length & 0xff;
    header[4] = (~slice.length >>> 8) & 0xff;
    blocks.push(header, slice);
  }
  if (raw.length === 0) {
    blocks.push(new Uint8Array([1, 0, 0, 0xff, 0xff]));
  }
  blocks.push(u32be(adler32(raw)));
  const total = blocks.reduce((n, b) => n + b.length, 0);
  const out = new Uint8Array(total);
  let pos = 0;
  for (const b of blocks) {
    out.set(b, pos);
    pos += b.length;
  }
  return out;
}

/** Mask -> single-channel PNG bytes (255 = missing). */
export function encodeMaskPng(mask: MaskBitmap): Uint8Array {
  const raw = new Uint8Array((mask.width + 1) * mask.height);
  let pos = 0;
  for (let y = 0; y < mask.height; y++) {
    raw[pos++] = 0; // filter: none
    for (let x = 0; x < mask.width; x++) {
      raw[pos++] = mask.data[y * mask.width + x] ? 255 : 0;
    }
  }
  const ihdr = new Uint8Array(13);
  ihdr.set(u32be(mask.width));
  ihdr.set(u32be(mask.height), 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 0; // grayscale
  const parts = [
    new Uint8Array(SIGNATURE),
    chunk("IHDR", ihdr),
    chunk("IDAT", zlibStored(raw)),
    chunk("IEND", new Uint8Array(0)),
  ];
  const out = new Uint8Array(parts.reduce((n, p) => n + p.length, 0));
  let off = 0;
  for (const p of parts) {
    out.set(p, off);
    off += p.length;
  }
  return out;
}

function inflateStored(stream: Uint8Array): Uint8Array {
  if (stream.length < 6) throw new Error("zlib stream too short");
  if ((stream[0] & 0x0f) !== 8) throw new Error("not a deflate stream");
  const chunks: Uint8Array[] = [];
  let pos = 2;
  for (;;) {
    const header = stream[pos++];
    if ((header & 0x06) !== 0) {
      throw new Error("editor PNGs use stored deflate blocks only");
    }
    const len = stream[pos] | (stream[pos + 1] << 8);
    const nlen = stream[pos + 2] | (stream[pos + 3] << 8);
    if ((len ^ nlen) !== 0xffff) throw new Error("corrupt stored block length");
    pos += 4;
    chunks.push(stream.subarray(pos, pos + len));
    pos += len;
    if (header & 1) break;
  }
  const total = chunks.reduce((n, c) => n + c.length, 0);
  const raw = new Uint8Array(total);
  let off = 0;
  for (const c of chunks) {
    raw.set(c, off);
    off += c.length;
  }
  const stored = ((stream[pos] << 24) | (stream[pos + 1] << 16) | (stream[pos + 2] << 8) | stream[pos + 3]) >>> 0;
  if (adler32(raw) !== stored) throw new Error("zlib checksum mismatch");
  return raw;
}

/** Inverse of {@link encodeMaskPng}; values > 127 count as missing. */
export function decodeMaskPng(bytes: Uint8Array): MaskBitmap {
  for (let i = 0; i < SIGNATURE.length; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a PNG file");
  }
  let pos = SIGNATURE.length;
  let width = 0;
  let height = 0;
  const idat: Uint8Array[] = [];
  while (pos < bytes.length) {
    const len = ((bytes[pos] << 24) | (bytes[pos + 1] << 16) | (bytes[pos + 2] << 8) | bytes[pos + 3]) >>> 0;
    const type = String.fromCharCode(bytes[pos + 4], bytes[pos + 5], bytes[pos + 6], bytes[pos + 7]);
    const data = bytes.subarray(pos + 8, pos + 8 + len);
    const body = bytes.subarray(pos + 4, pos + 8 + len);
    if (crc32(body) !== (((bytes[pos + 8 + len] << 24) | (bytes[pos + 9 + len] << 16) | (bytes[pos + 10 + len] << 8) | bytes[pos + 11 + len]) >>> 0)) {
      throw new Error(`bad CRC in ${type} chunk`);
    }
    if (type === "IHDR") {
      width = ((data[0] << 24) | (data[1] << 16) | (data[2] << 8) | data[3]) >>> 0;
      height = ((data[4] << 24) | (data[5] << 16) | (data[6] << 8) | data[7]) >>> 0;
      if (data[8] !== 8 || data[9] !== 0 || data[12] !== 0) {
        throw new Error("expected an 8-bit non-interlaced grayscale PNG");
      }
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      break;
    }
    pos += 12 + len;
  }
  if (!width || !height) throw new Error("missing IHDR");
  const streamLen = idat.reduce((n, c) => n + c.length, 0);
  const stream = new Uint8Array(streamLen);
  let off = 0;
  for (const c of idat) {
    stream.set(c, off);
    off += c.length;
  }
  const raw = inflateStored(stream);
  if (raw.length !== (width + 1) * height) {
    throw new Error(`scanline payload is ${raw.length} bytes, expected ${(width + 1) * height}`);
  }
  const mask = new MaskBitmap(width, height);
  for (let y = 0; y < height; y++) {
    if (raw[y * (width + 1)] !== 0) throw new Error("unsupported scanline filter");
    for (let x = 0; x < width; x++) {
      mask.data[y * width + x] = raw[y * (width + 1) + 1 + x] > 127 ? 1 : 0;
    }
  }
  return mask;
}
