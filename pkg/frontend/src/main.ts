import { StudioApi } from "./api.js";
import { hexToRgb, rgbToHex } from "./color.js";
import { StudioSession } from "./session.js";
import type { JobInfo, LayerMeta } from "./types.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const serverInput = $<HTMLInputElement>("server-url");
const fileInput = $<HTMLInputElement>("file-input");
const layersInput = $<HTMLInputElement>("num-layers");
const superpixelsInput = $<HTMLInputElement>("superpixels");
const decomposeBtn = $<HTMLButtonElement>("decompose-btn");
const statusLine = $<HTMLElement>("status-line");
const banner = $<HTMLElement>("banner");
const swatchRow = $<HTMLElement>("swatches");
const planeRow = $<HTMLElement>("planes");
const previewImg = $<HTMLImageElement>("preview");
const overlay = $<HTMLCanvasElement>("overlay");
const latencyLine = $<HTMLElement>("latency");
const brushLayer = $<HTMLSelectElement>("brush-layer");
const brushValue = $<HTMLSelectElement>("brush-value");
const paintToggle = $<HTMLInputElement>("paint-toggle");
const undoBtn = $<HTMLButtonElement>("undo-btn");
const clearBtn = $<HTMLButtonElement>("clear-btn");
const redecomposeBtn = $<HTMLButtonElement>("redecompose-btn");

let api = new StudioApi(serverInput.value);
let session: StudioSession | null = null;
let meta: LayerMeta | null = null;
let previewUrl: string | null = null;

serverInput.addEventListener("change", () => {
  api = new StudioApi(serverInput.value);
});

function setStatus(text: string) {
  statusLine.textContent = text;
}

function setBanner(message: string | null) {
  banner.textContent = message ?? "";
  banner.hidden = !message;
}

function showPreview(blob: Blob) {
  if (previewUrl) URL.revokeObjectURL(previewUrl);
  previewUrl = URL.createObjectURL(blob);
  previewImg.src = previewUrl;
}

function setEditorEnabled(enabled: boolean) {
  for (const input of swatchRow.querySelectorAll("input")) {
    (input as HTMLInputElement).disabled = !enabled;
    (input as HTMLInputElement).title = enabled
      ? "" : "disabled while a decomposition job is running";
  }
  redecomposeBtn.disabled = !enabled;
  paintToggle.disabled = !enabled;
}

function renderSwatches() {
  if (!session) return;
  swatchRow.replaceChildren();
  session.palette.forEach((color, j) => {
    const wrap = document.createElement("label");
    wrap.className = "swatch";
    const input = document.createElement("input");
    input.type = "color";
    input.value = rgbToHex(color);
    input.addEventListener("input", () => {
      session!.editSwatch(j, hexToRgb(input.value));
    });
    const caption = document.createElement("span");
    caption.textContent = `layer ${j}`;
    wrap.append(input, caption);
    swatchRow.append(wrap);
  });
  brushLayer.replaceChildren();
  session.palette.forEach((_, j) => {
    const opt = document.createElement("option");
    opt.value = String(j);
    opt.textContent = `layer ${j}`;
    brushLayer.append(opt);
  });
}

function renderPlanes() {
  if (!session || !meta) return;
  planeRow.replaceChildren();
  for (let j = 0; j < meta.num_layers; j++) {
    const img = document.createElement("img");
    img.className = "plane";
    img.src = api.planeUrl(session.layerId, j, 0, true);
    img.title = `weight plane ${j} (black 0, white 1; red < 0, green > 1)`;
    planeRow.append(img);
  }
}

function redrawOverlay() {
  const ctx = overlay.getContext("2d")!;
  ctx.clearRect(0, 0, overlay.width, overlay.height);
  if (!session) return;
  for (const stroke of session.strokes) {
    const color = session.palette[stroke.layer];
    ctx.fillStyle = rgbToHex(color);
    ctx.globalAlpha = 0.9;
    ctx.beginPath();
    ctx.arc(stroke.x, stroke.y, 2.5, 0, Math.PI * 2);
    ctx.fill();
  }
  ctx.globalAlpha = 1.0;
}

// reads session.layerId dynamically, so it survives re-decompositions
const recolor = async (colors: [number, number, number][]) => {
  const t0 = performance.now();
  const result = await api.recolor(session!.layerId, colors);
  const total = performance.now() - t0;
  latencyLine.textContent = result.composeMs === null
    ? `round trip ${total.toFixed(1)} ms`
    : `round trip ${total.toFixed(1)} ms (server compose ${result.composeMs.toFixed(2)} ms)`;
  return result.blob;
};

async function adopt(layerId: string) {
  meta = await api.meta(layerId);
  if (session) {
    session.adoptLayers(meta);
  } else {
    session = new StudioSession(meta, recolor, {
      onPreview: showPreview,
      onBanner: setBanner,
      onJobState: (running) => setEditorEnabled(!running),
    });
  }
  overlay.width = meta.width;
  overlay.height = meta.height;
  previewImg.width = meta.width;
  previewImg.height = meta.height;
  showPreview(await api.reconstruction(layerId));
  renderSwatches();
  renderPlanes();
  redrawOverlay();
  setEditorEnabled(true);
  setStatus(`layers ${layerId}: ${meta.width}x${meta.height}, N=${meta.num_layers}`);
}

async function runJob(jobId: string): Promise<JobInfo> {
  const info = await api.pollJob(jobId, {
    intervalMs: 300,
    onTick: (job) => setStatus(`job ${job.job_id}: ${job.state}`),
  });
  if (info.state === "error" || !info.layer_id) {
    throw new Error(info.error ?? "decomposition failed");
  }
  return info;
}

decomposeBtn.addEventListener("click", async () => {
  const files = fileInput.files;
  if (!files || files.length === 0) {
    setBanner("choose an image first");
    return;
  }
  decomposeBtn.disabled = true;
  setBanner(null);
  try {
    const uploads = [...files].map((f) => ({ name: f.name, data: f as Blob }));
    const jobId = await api.decompose(uploads, {
      num_layers: parseInt(layersInput.value, 10) || 5,
      superpixels: parseInt(superpixelsInput.value, 10) || undefined,
    });
    const info = await runJob(jobId);
    await adopt(info.layer_id!);
  } catch (err) {
    setBanner(err instanceof Error ? err.message : String(err));
  } finally {
    decomposeBtn.disabled = false;
  }
});

let painting = false;
let strokePoints: { x: number; y: number }[] = [];

function canvasPoint(ev: PointerEvent) {
  const rect = overlay.getBoundingClientRect();
  return {
    x: (ev.clientX - rect.left) * (overlay.width / rect.width),
    y: (ev.clientY - rect.top) * (overlay.height / rect.height),
  };
}

overlay.addEventListener("pointerdown", (ev) => {
  if (!paintToggle.checked || !session?.canEdit) return;
  painting = true;
  strokePoints = [canvasPoint(ev)];
  overlay.setPointerCapture(ev.pointerId);
});

overlay.addEventListener("pointermove", (ev) => {
  if (!painting) return;
  strokePoints.push(canvasPoint(ev));
});

overlay.addEventListener("pointerup", () => {
  if (!painting || !session) return;
  painting = false;
  session.paintConstraint(strokePoints,
                          parseInt(brushLayer.value, 10),
                          parseFloat(brushValue.value));
  strokePoints = [];
  redrawOverlay();
});

undoBtn.addEventListener("click", () => {
  session?.undoStroke();
  redrawOverlay();
});

clearBtn.addEventListener("click", () => {
  session?.clearStrokes();
  redrawOverlay();
});

redecomposeBtn.addEventListener("click", async () => {
  if (!session || session.strokes.length === 0) {
    setBanner("paint at least one constraint stroke first");
    return;
  }
  session.beginRedecompose();
  try {
    const jobId = await api.submitConstraints(session.layerId, session.strokes);
    const info = await runJob(jobId);
    await adopt(info.layer_id!);
  } catch (err) {
    session.failRedecompose();
    setBanner(err instanceof Error ? err.message : String(err));
  }
});

setStatus("upload an image to begin");
setEditorEnabled(false);
