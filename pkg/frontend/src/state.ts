/**
 * Editor state machine, DOM-free: brush strokes over the mask bitmap with
 * bounded undo, request lifecycle against the service client, and the
 * results gallery whose entries can be promoted back to the editable source.
 */

import { InpaintClient, InpaintParams, describeServiceError } from "./api.js";
import { MaskBitmap, Tool } from "./mask.js";
import { encodeMaskPng } from "./png.js";
import { UndoStack } from "./undo.js";

export interface GalleryItem {
  pngBase64: string;
  seed: number;
}

export class EditorState {
  mask: MaskBitmap;
  readonly undo = new UndoStack(32);
  tool: Tool = "paint";
  brushRadius = 12;
  sigma = 0.1;
  nSamples = 2;
  seed: number | null = null;

  sourcePng: Uint8Array | null = null;
  gallery: GalleryItem[] = [];
  inFlight = false;
  serviceHealthy = false;
  statusMessage = "";
  lastSigma: number | null = null;

  private stroking = false;

  constructor(width: number, height: number, readonly client: InpaintClient) {
    this.mask = new MaskBitmap(width, height);
  }

  loadSource(png: Uint8Array, width: number, height: number): void {
    this.sourcePng = png;
    this.mask = new MaskBitmap(width, height);
    this.undo.clear();
    this.gallery = [];
    this.lastSigma = null;
  }

  // -- stroke lifecycle ----------------------------------------------------

  beginStroke(x: number, y: number): void {
    if (this.stroking) return;
    this.undo.push(this.mask.snapshot());
    this.stroking = true;
    this.mask.stampDisk(x, y, this.brushRadius, this.tool);
  }

  continueStroke(x0: number, y0: number, x1: number, y1: number): void {
    if (!this.stroking) return;
    this.mask.strokeSegment(x0, y0, x1, y1, this.brushRadius, this.tool);
  }

  endStroke(): void {
    this.stroking = false;
  }

  undoStroke(): boolean {
    const snapshot = this.undo.pop();
    if (snapshot === null) return false;
    this.mask.restore(snapshot);
    return true;
  }

  clearMask(): void {
    this.undo.push(this.mask.snapshot());
    this.mask.clear();
  }

  exportMaskPng(): Uint8Array {
    return encodeMaskPng(this.mask);
  }

  occlusionPercent(): number {
    return this.mask.occlusionRatio() * 100;
  }

  // -- service interaction -------------------------------------------------

  canSubmit(): boolean {
    return this.serviceHealthy && !this.inFlight && this.sourcePng !== null;
  }

  async refreshHealth(): Promise<void> {
    const health = await this.client.health();
    this.serviceHealthy = health.ok;
    this.statusMessage = health.ok
      ? `service ready (model ${health.modelId})`
      : `service unavailable: ${health.detail ?? "unknown"}`;
  }

  /** True when the last request was deterministic, so the gallery shows
   * identical variants and raising sigma is the way to get diversity. */
  identicalVariantsHint(): boolean {
    return this.lastSigma === 0 && this.gallery.length > 1;
  }

  async requestInpaint(): Promise<void> {
    if (!this.canSubmit() || this.sourcePng === null) {
      throw new Error("cannot submit: service offline, no source, or a request in flight");
    }
    const params: InpaintParams = {
      sigma: this.sigma,
      nSamples: this.nSamples,
      ...(this.seed !== null ? { seed: this.seed } : {}),
    };
    this.inFlight = true;
    try {
      const result = await this.client.inpaint(this.sourcePng, this.exportMaskPng(), params);
      this.gallery = result.results.map((pngBase64, i) => ({
        pngBase64,
        seed: result.seeds[i],
      }));
      this.lastSigma = this.sigma;
      this.statusMessage = `${result.results.length} variant(s) in ${result.timingMs.toFixed(0)} ms`;
    } catch (err) {
      this.statusMessage = describeServiceError(err);
      throw err;
    } finally {
      this.inFlight = false;
    }
  }

  /** Promote a gallery result to the editable source (the iteration loop);
   * the mask resets so further strokes refine the chosen variant. */
  adoptResult(index: number): void {
    const item = this.gallery[index];
    if (!item) throw new Error(`no gallery item ${index}`);
    const binary = atob(item.pngBase64);
    const png = new Uint8Array(binary.length);
    for (let i = 0; i < binary.length; i++) png[i] = binary.charCodeAt(i);
    this.sourcePng = png;
    this.mask.clear();
    this.undo.clear();
    this.gallery = [];
    this.lastSigma = null;
  }
}
