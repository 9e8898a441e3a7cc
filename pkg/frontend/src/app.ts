/** DOM wiring: canvas stack, brush handling, controls and the gallery.
 * All editing logic lives in the DOM-free modules; this file only translates
 * pointer/input events into state calls and repaints. */

import { InpaintClient } from "./api.js";
import { EditorState } from "./state.js";
import { decodeMaskPng } from "./png.js";

const SERVICE_URL =
  new URLSearchParams(location.search).get("service") ?? "http://127.0.0.1:8080";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

const imageCanvas = byId<HTMLCanvasElement>("image-canvas");
const maskCanvas = byId<HTMLCanvasElement>("mask-canvas");
const stage = byId<HTMLDivElement>("stage");
const statusBar = byId<HTMLDivElement>("status");
const hintBar = byId<HTMLDivElement>("hint");
const gallery = byId<HTMLDivElement>("gallery");
const submitBtn = byId<HTMLButtonElement>("submit");
const undoBtn = byId<HTMLButtonElement>("undo");
const clearBtn = byId<HTMLButtonElement>("clear");
const exportBtn = byId<HTMLButtonElement>("export-mask");
const importInput = byId<HTMLInputElement>("import-mask");
const fileInput = byId<HTMLInputElement>("file");
const toolSelect = byId<HTMLSelectElement>("tool");
const brushInput = byId<HTMLInputElement>("brush");
const brushLabel = byId<HTMLSpanElement>("brush-label");
const sigmaInput = byId<HTMLInputElement>("sigma");
const sigmaLabel = byId<HTMLSpanElement>("sigma-label");
const samplesInput = byId<HTMLInputElement>("samples");
const seedInput = byId<HTMLInputElement>("seed");
const zoomInput = byId<HTMLInputElement>("zoom");
const ratioLabel = byId<HTMLSpanElement>("ratio");

const client = new InpaintClient(SERVICE_URL);
let state = new EditorState(1, 1, client);
let sourceBitmap: ImageBitmap | null = null;

function repaintMask(): void {
  const ctx = maskCanvas.getContext("2d")!;
  const { width, height } = state.mask;
  const overlay = ctx.createImageData(width, height);
  for (let i = 0; i < state.mask.data.length; i++) {
    if (state.mask.data[i]) {
      overlay.data[i * 4] = 255;
      overlay.data[i * 4 + 1] = 40;
      overlay.data[i * 4 + 2] = 40;
      overlay.data[i * 4 + 3] = 140;
    }
  }
  ctx.clearRect(0, 0, width, height);
  ctx.putImageData(overlay, 0, 0);
  ratioLabel.textContent = `${state.occlusionPercent().toFixed(1)}% missing`;
}

function repaintImage(): void {
  if (!sourceBitmap) return;
  const ctx = imageCanvas.getContext("2d")!;
  ctx.clearRect(0, 0, imageCanvas.width, imageCanvas.height);
  ctx.drawImage(sourceBitmap, 0, 0);
}

function applyZoom(): void {
  const zoom = Number(zoomInput.value);
  stage.style.transform = `scale(${zoom})`;
  stage.style.transformOrigin = "top left";
}

function refreshControls(): void {
  submitBtn.disabled = !state.canSubmit();
  undoBtn.disabled = !state.undo.canUndo;
  statusBar.textContent = state.statusMessage;
  statusBar.className = state.serviceHealthy ? "status ok" : "status bad";
  hintBar.textContent = state.identicalVariantsHint()
    ? "sigma = 0 is deterministic, every variant is identical; raise sigma for diversity"
    : "";
}

/** Pointer position -> bitmap coordinates, accounting for zoom via rect size. */
function canvasPoint(ev: PointerEvent): { x: number; y: number } {
  const rect = maskCanvas.getBoundingClientRect();
  return {
    x: ((ev.clientX - rect.left) / rect.width) * state.mask.width,
    y: ((ev.clientY - rect.top) / rect.height) * state.mask.height,
  };
}

let lastPoint: { x: number; y: number } | null = null;

maskCanvas.addEventListener("pointerdown", (ev) => {
  if (!sourceBitmap) return;
  maskCanvas.setPointerCapture(ev.pointerId);
  const p = canvasPoint(ev);
  state.beginStroke(p.x, p.y);
  lastPoint = p;
  repaintMask();
  refreshControls();
});

maskCanvas.addEventListener("pointermove", (ev) => {
  if (lastPoint === null) return;
  const p = canvasPoint(ev);
  state.continueStroke(lastPoint.x, lastPoint.y, p.x, p.y);
  lastPoint = p;
  repaintMask();
});

window.addEventListener("pointerup", () => {
  state.endStroke();
  lastPoint = null;
});

async function loadSourceFromBytes(png: Uint8Array): Promise<void> {
  const blob = new Blob([png.slice().buffer], { type: "image/png" });
  sourceBitmap = await createImageBitmap(blob);
  [imageCanvas, maskCanvas].forEach((c) => {
    c.width = sourceBitmap!.width;
    c.height = sourceBitmap!.height;
  });
  state.loadSource(png, sourceBitmap.width, sourceBitmap.height);
  repaintImage();
  repaintMask();
  refreshControls();
}

fileInput.addEventListener("change", async () => {
  const file = fileInput.files?.[0];
  if (!file) return;
  await loadSourceFromBytes(new Uint8Array(await file.arrayBuffer()));
});

toolSelect.addEventListener("change", () => {
  state.tool = toolSelect.value === "erase" ? "erase" : "paint";
});

brushInput.addEventListener("input", () => {
  state.brushRadius = Number(brushInput.value);
  brushLabel.textContent = `${brushInput.value}px`;
});

sigmaInput.addEventListener("input", () => {
  state.sigma = Number(sigmaInput.value);
  sigmaLabel.textContent = Number(sigmaInput.value).toFixed(2);
});

samplesInput.addEventListener("change", () => {
  state.nSamples = Math.min(4, Math.max(1, Number(samplesInput.value)));
  samplesInput.value = String(state.nSamples);
});

seedInput.addEventListener("change", () => {
  state.seed = seedInput.value === "" ? null : Number(seedInput.value);
});

zoomInput.addEventListener("input", applyZoom);

undoBtn.addEventListener("click", () => {
  state.undoStroke();
  repaintMask();
  refreshControls();
});

clearBtn.addEventListener("click", () => {
  state.clearMask();
  repaintMask();
  refreshControls();
});

exportBtn.addEventListener("click", () => {
  if (state.mask.isEmpty() && !confirm("The mask is empty; export anyway?")) return;
  const png = state.exportMaskPng();
  const url = URL.createObjectURL(new Blob([png.slice().buffer], { type: "image/png" }));
  const a = document.createElement("a");
  a.href = url;
  a.download = "mask.png";
  a.click();
  URL.revokeObjectURL(url);
});

importInput.addEventListener("change", async () => {
  const file = importInput.files?.[0];
  if (!file) return;
  const bytes = new Uint8Array(await file.arrayBuffer());
  try {
    // editor exports decode directly; anything else goes through the browser
    const mask = decodeMaskPng(bytes);
    if (mask.width !== state.mask.width || mask.height !== state.mask.height) {
      throw new Error("mask size does not match the image");
    }
    state.undo.push(state.mask.snapshot());
    state.mask.restore(mask.data);
  } catch {
    const bitmap = await createImageBitmap(new Blob([bytes.slice().buffer]));
    const scratch = document.createElement("canvas");
    scratch.width = state.mask.width;
    scratch.height = state.mask.height;
    const ctx = scratch.getContext("2d")!;
    ctx.drawImage(bitmap, 0, 0, scratch.width, scratch.height);
    const pixels = ctx.getImageData(0, 0, scratch.width, scratch.height).data;
    state.undo.push(state.mask.snapshot());
    for (let i = 0; i < state.mask.data.length; i++) {
      state.mask.data[i] = pixels[i * 4] > 127 ? 1 : 0;
    }
  }
  repaintMask();
  refreshControls();
});

function renderGallery(): void {
  gallery.replaceChildren();
  state.gallery.forEach((item, index) => {
    const card = document.createElement("figure");
    card.className = "card";
    const img = document.createElement("img");
    img.src = `data:image/png;base64,${item.pngBase64}`;
    img.alt = `variant seeded ${item.seed}`;
    const caption = document.createElement("figcaption");
    caption.textContent = `seed ${item.seed}`;
    const adopt = document.createElement("button");
    adopt.textContent = "continue editing";
    adopt.addEventListener("click", async () => {
      state.adoptResult(index);
      await loadSourceFromBytes(state.sourcePng!);
      renderGallery();
    });
    card.append(img, caption, adopt);
    gallery.append(card);
  });
}

submitBtn.addEventListener("click", async () => {
  refreshControls();
  try {
    await state.requestInpaint();
    renderGallery();
  } catch {
    // statusMessage already carries the actionable text
  }
  refreshControls();
});

async function pollHealth(): Promise<void> {
  await state.refreshHealth();
  refreshControls();
}

pollHealth();
setInterval(pollHealth, 5000);
applyZoom();
refreshControls();
