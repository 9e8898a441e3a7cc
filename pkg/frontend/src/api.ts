/** Typed client for the inpainting service; `fetch` is injectable so the
 * whole UI is testable against a stub. */

export interface InpaintParams {
  sigma: number;
  seed?: number;
  nSamples: number;
}

export interface InpaintResult {
  results: string[]; // base64 PNG composites
  seeds: number[];
  timingMs: number;
  modelId: string;
  resized: boolean;
}

export interface HealthStatus {
  ok: boolean;
  modelId?: string;
  detail?: string;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`service error ${status}: ${detail}`);
  }
}

export class InpaintClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  async health(): Promise<HealthStatus> {
    try {
      const resp = await this.fetchImpl(`${this.baseUrl}/v1/health`);
      if (!resp.ok) {
        return { ok: false, detail: `service returned ${resp.status}` };
      }
      const body = await resp.json();
      return { ok: true, modelId: body.model_id };
    } catch (err) {
      return { ok: false, detail: String(err) };
    }
  }

  async inpaint(imagePng: Uint8Array, maskPng: Uint8Array, params: InpaintParams): Promise<InpaintResult> {
    if (params.sigma < 0) throw new Error("sigma must be >= 0");
    if (params.nSamples < 1 || params.nSamples > 4) throw new Error("nSamples must be 1..4");
    const form = new FormData();
    form.append("image", new Blob([imagePng.slice().buffer], { type: "image/png" }), "image.png");
    form.append("mask", new Blob([maskPng.slice().buffer], { type: "image/png" }), "mask.png");
    form.append(
      "params",
      JSON.stringify({ sigma: params.sigma, seed: params.seed, n_samples: params.nSamples }),
    );
    const resp = await this.fetchImpl(`${this.baseUrl}/v1/inpaint`, { method: "POST", body: form });
    if (!resp.ok) {
      let detail = resp.statusText || `HTTP ${resp.status}`;
      try {
        const body = await resp.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ServiceError(resp.status, detail);
    }
    const body = await resp.json();
    return {
      results: body.results,
      seeds: body.seeds,
      timingMs: body.timing_ms,
      modelId: body.model_id,
      resized: body.resized,
    };
  }
}

/** Human messages for the gallery error banner. */
export function describeServiceError(err: unknown): string {
  if (err instanceof ServiceError) {
    switch (err.status) {
      case 400:
        return `The service rejected the upload: ${err.message}`;
      case 413:
        return "The image is too large for the service; try a smaller photo.";
      case 422:
        return "Invalid noise level; sigma must be zero or positive.";
      case 429:
        return "The service is busy; wait a moment and retry.";
      case 503:
        return "The model is not loaded yet; check the service and retry.";
      default:
        return err.message;
    }
  }
  return `Request failed: ${String(err)}`;
}
