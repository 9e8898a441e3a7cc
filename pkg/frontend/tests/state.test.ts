import { describe, expect, it } from "vitest";

import { InpaintClient } from "../src/api.js";
import { EditorState } from "../src/state.js";
import { decodeMaskPng } from "../src/png.js";

/** In-memory stand-in for the Python service: decodes the uploaded mask with
 * the shared codec, echoes deterministic per-seed payloads, and reproduces
 * the sigma-zero behavior (every variant identical). */
function stubService(opts: { healthy?: boolean; failWith?: number } = {}) {
  const calls: { params: any; maskRatio: number }[] = [];
  const fetchImpl = async (url: string, init?: RequestInit): Promise<Response> => {
    if (url.endsWith("/v1/health")) {
      return opts.healthy === false
        ? new Response("{}", { status: 503 })
        : new Response(JSON.stringify({ status: "ok", model_id: "stub01" }), { status: 200 });
    }
    if (opts.failWith) {
      return new Response(JSON.stringify({ detail: "induced failure" }), { status: opts.failWith });
    }
    const form = init!.body as FormData;
    const params = JSON.parse(form.get("params") as string);
    const maskBytes = new Uint8Array(await (form.get("mask") as Blob).arrayBuffer());
    const mask = decodeMaskPng(maskBytes);
    calls.push({ params, maskRatio: mask.occlusionRatio() });
    const n = params.n_samples ?? 1;
    const baseSeed = params.seed ?? 1000;
    const results: string[] = [];
    const seeds: number[] = [];
    for (let i = 0; i < n; i++) {
      const seed = baseSeed + i;
      const variant = params.sigma === 0 ? baseSeed : seed; // sigma 0 => identical
      results.push(Buffer.from(`png-for-${variant}`).toString("base64"));
      seeds.push(seed);
    }
    return new Response(
      JSON.stringify({ results, seeds, timing_ms: 3.0, model_id: "stub01", resized: false }),
      { status: 200 },
    );
  };
  return { fetchImpl, calls };
}

function readyState(stub = stubService()) {
  const state = new EditorState(1, 1, new InpaintClient("http://svc", stub.fetchImpl));
  state.loadSource(new Uint8Array([1, 2, 3]), 32, 32);
  return { state, stub };
}

describe("EditorState strokes and undo", () => {
  it("paint then erase everything exports an empty mask", () => {
    const { state } = readyState();
    state.beginStroke(10, 10);
    state.continueStroke(10, 10, 20, 20);
    state.endStroke();
    expect(state.mask.isEmpty()).toBe(false);
    state.tool = "erase";
    state.brushRadius = 40;
    state.beginStroke(16, 16);
    state.endStroke();
    expect(state.mask.isEmpty()).toBe(true);
    const exported = decodeMaskPng(state.exportMaskPng());
    expect(exported.isEmpty()).toBe(true);
  });

  it("every stroke is undoable back to the exact bitmap", () => {
    const { state } = readyState();
    const before = state.mask.clone();
    state.beginStroke(5, 5);
    state.continueStroke(5, 5, 25, 25);
    state.endStroke();
    state.beginStroke(30, 2);
    state.endStroke();
    expect(state.undoStroke()).toBe(true);
    expect(state.undoStroke()).toBe(true);
    expect(state.mask.equals(before)).toBe(true);
    expect(state.undoStroke()).toBe(false);
  });

  it("mask stays binary through mixed editing", () => {
    const { state } = readyState();
    state.beginStroke(4, 4);
    state.continueStroke(4, 4, 28, 12);
    state.endStroke();
    state.tool = "erase";
    state.beginStroke(10, 8);
    state.endStroke();
    state.clearMask();
    expect(state.undoStroke()).toBe(true);
    expect(state.mask.isBinary()).toBe(true);
  });

  it("export round-trips through import losslessly", () => {
    const { state } = readyState();
    state.beginStroke(8, 20);
    state.continueStroke(8, 20, 30, 6);
    state.endStroke();
    const exported = state.exportMaskPng();
    const reimported = decodeMaskPng(exported);
    expect(reimported.equals(state.mask)).toBe(true);
  });
});

describe("EditorState service flow", () => {
  it("submit is blocked until the health check passes", async () => {
    const { state } = readyState(stubService({ healthy: false }));
    await state.refreshHealth();
    expect(state.serviceHealthy).toBe(false);
    expect(state.canSubmit()).toBe(false);
    expect(state.statusMessage).toMatch(/unavailable/);
  });

  it("requests carry the mask whose ratio the server recomputes identically", async () => {
    const { state, stub } = readyState();
    await state.refreshHealth();
    state.beginStroke(16, 16);
    state.endStroke();
    const shown = state.occlusionPercent();
    await state.requestInpaint();
    expect(stub.calls).toHaveLength(1);
    expect(stub.calls[0].maskRatio * 100).toBe(shown);
  });

  it("sigma zero produces identical variants and the hint", async () => {
    const { state } = readyState();
    await state.refreshHealth();
    state.sigma = 0;
    state.nSamples = 3;
    state.seed = 5;
    await state.requestInpaint();
    expect(state.gallery).toHaveLength(3);
    const payloads = new Set(state.gallery.map((g) => g.pngBase64));
    expect(payloads.size).toBe(1);
    expect(state.identicalVariantsHint()).toBe(true);
    expect(state.gallery.map((g) => g.seed)).toEqual([5, 6, 7]);
  });

  it("positive sigma produces distinct variants and no hint", async () => {
    const { state } = readyState();
    await state.refreshHealth();
    state.sigma = 0.5;
    state.nSamples = 2;
    state.seed = 11;
    await state.requestInpaint();
    const payloads = new Set(state.gallery.map((g) => g.pngBase64));
    expect(payloads.size).toBe(2);
    expect(state.identicalVariantsHint()).toBe(false);
  });

  it("adopting a result makes it the editable source and resets the session", async () => {
    const { state } = readyState();
    await state.refreshHealth();
    state.sigma = 0.5;
    state.seed = 20;
    state.beginStroke(10, 10);
    state.endStroke();
    await state.requestInpaint();
    const chosen = state.gallery[1];
    state.adoptResult(1);
    expect(state.sourcePng).not.toBeNull();
    expect(Buffer.from(state.sourcePng!).toString()).toBe(`png-for-${chosen.seed}`);
    expect(state.mask.isEmpty()).toBe(true);
    expect(state.gallery).toHaveLength(0);
    expect(state.undo.canUndo).toBe(false);
  });

  it("only one request can be in flight", async () => {
    const { state } = readyState();
    await state.refreshHealth();
    const pending = state.requestInpaint();
    expect(state.inFlight).toBe(true);
    expect(state.canSubmit()).toBe(false);
    await pending;
    expect(state.inFlight).toBe(false);
    expect(state.canSubmit()).toBe(true);
  });

  it("surfaces service failures as actionable status text", async () => {
    const { state } = readyState(stubService({ failWith: 429 }));
    await state.refreshHealth();
    await expect(state.requestInpaint()).rejects.toThrow();
    expect(state.inFlight).toBe(false);
    expect(state.statusMessage).toMatch(/busy|retry/);
  });
});
