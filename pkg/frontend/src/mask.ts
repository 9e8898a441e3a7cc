/**
 * Binary occlusion bitmap: one byte per pixel, 1 = missing (to be inpainted).
 * All editing goes through disk stamps so the bitmap can never hold anything
 * but 0/1, regardless of tool, brush size or view zoom.
 */

export type Tool = "paint" | "erase";

export class MaskBitmap {
  readonly width: number;
  readonly height: number;
  readonly data: Uint8Array;

  constructor(width: number, height: number, data?: Uint8Array) {
    if (width < 1 || height < 1) {
      throw new Error(`bad mask dimensions ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    if (data !== undefined) {
      if (data.length !== width * height) {
        throw new Error(`mask data length ${data.length} != ${width * height}`);
      }
      for (let i = 0; i < data.length; i++) {
        if (data[i] !== 0 && data[i] !== 1) {
          throw new Error(`mask value at ${i} is ${data[i]}, expected 0 or 1`);
        }
      }
      this.data = data;
    } else {
      this.data = new Uint8Array(width * height);
    }
  }

  clone(): MaskBitmap {
    return new MaskBitmap(this.width, this.height, this.data.slice());
  }

  snapshot(): Uint8Array {
    return this.data.slice();
  }

  restore(snapshot: Uint8Array): void {
    if (snapshot.length !== this.data.length) {
      throw new Error("snapshot size does not match this bitmap");
    }
    this.data.set(snapshot);
  }

  equals(other: MaskBitmap): boolean {
    if (other.width !== this.width || other.height !== this.height) return false;
    for (let i = 0; i < this.data.length; i++) {
      if (this.data[i] !== other.data[i]) return false;
    }
    return true;
  }

  isBinary(): boolean {
    for (const v of this.data) {
      if (v !== 0 && v !== 1) return false;
    }
    return true;
  }

  isEmpty(): boolean {
    return !this.data.some((v) => v === 1);
  }

  /** Fraction of pixels marked missing. */
  occlusionRatio(): number {
    let count = 0;
    for (const v of this.data) count += v;
    return count / this.data.length;
  }

  clear(): void {
    this.data.fill(0);
  }

  stampDisk(cx: number, cy: number, radius: number, tool: Tool): void {
    const value = tool === "paint" ? 1 : 0;
    const r = Math.max(0, radius);
    const r2 = r * r;
    const x0 = Math.max(0, Math.floor(cx - r));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + r));
    const y0 = Math.max(0, Math.floor(cy - r));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + r));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const dx = x - cx;
        const dy = y - cy;
        if (dx * dx + dy * dy <= r2) {
          this.data[y * this.width + x] = value;
        }
      }
    }
  }

  /** Round-capped stroke segment: disks stamped at sub-pixel steps. */
  strokeSegment(x0: number, y0: number, x1: number, y1: number, radius: number, tool: Tool): void {
    const dist = Math.hypot(x1 - x0, y1 - y0);
    const steps = Math.max(1, Math.ceil(dist));
    for (let i = 0; i <= steps; i++) {
      const t = i / steps;
      this.stampDisk(x0 + (x1 - x0) * t, y0 + (y1 - y0) * t, radius, tool);
    }
  }
}
