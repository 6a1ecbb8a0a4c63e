/**
 * DOM wiring for the slice viewer. One service call per user action; controls
 * lock while a mutating request is in flight.
 */

import { ApiError, Client, type Layer, type Polarity } from "./api.js";
import { parseIvol } from "./ivol.js";
import { composeSlice, regionHighlight, type Overlay } from "./render.js";
import {
  initView,
  pushHistory,
  sequenceComplete,
  sliceShape,
  sliceToVoxel,
  withAxis,
  withClickMode,
  withSlice,
  type ViewState,
} from "./view.js";

const SCALE = 6;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const client = new Client(
  (document.querySelector("meta[name=service-url]") as HTMLMetaElement | null)?.content ??
    "http://127.0.0.1:8008",
);

let view: ViewState | null = null;
let busy = false;
let lastHighlight: { pixels: Uint8ClampedArray; axis: string; index: number } | null = null;

const banner = el<HTMLDivElement>("banner");
const canvas = el<HTMLCanvasElement>("slice");
const badge = el<HTMLSpanElement>("click-badge");

function showError(message: string) {
  banner.textContent = message;
  banner.style.display = "block";
}

function clearError() {
  banner.style.display = "none";
}

function setBusy(value: boolean) {
  busy = value;
  for (const id of ["refine", "export", "mode-object", "mode-background"]) {
    el<HTMLButtonElement>(id).disabled = value || view === null;
  }
  el<HTMLInputElement>("slider").disabled = value || view === null;
}

async function fetchSlice(layer: Layer): Promise<number[]> {
  if (!view) throw new Error("no session");
  const res = await client.getSlice(view.sessionId, view.axis, view.index, layer);
  return res.values;
}

async function redraw() {
  if (!view) return;
  const [rows, cols] = sliceShape(view);
  const intensity = await fetchSlice("intensity");
  const overlays: Overlay[] = [];
  if (view.layers.probability.visible) {
    overlays.push({
      values: await fetchSlice("probability"),
      color: [255, 80, 0],
      opacity: view.layers.probability.opacity,
      threshold: 0.5,
    });
  }
  if (view.layers.prediction.visible) {
    overlays.push({
      values: await fetchSlice("prediction"),
      color: [0, 200, 80],
      opacity: view.layers.prediction.opacity,
    });
  }
  if (view.layers.hints.visible) {
    overlays.push({
      values: await fetchSlice("h_plus"),
      color: [0, 120, 255],
      opacity: view.layers.hints.opacity * 0.5,
    });
    overlays.push({
      values: await fetchSlice("h_minus"),
      color: [255, 0, 180],
      opacity: view.layers.hints.opacity * 0.5,
    });
  }
  if (
    lastHighlight &&
    lastHighlight.axis === view.axis &&
    lastHighlight.index === view.index
  ) {
    overlays.push({ values: lastHighlight.pixels, color: [255, 255, 0], opacity: 0.35 });
  }
  const rgba = composeSlice(intensity, overlays);
  canvas.width = cols;
  canvas.height = rows;
  canvas.style.width = `${cols * SCALE}px`;
  canvas.style.height = `${rows * SCALE}px`;
  const ctx = canvas.getContext("2d")!;
  ctx.putImageData(new ImageData(rgba as Uint8ClampedArray<ArrayBuffer>, cols, rows), 0, 0);
  el<HTMLSpanElement>("slice-label").textContent =
    `${view.axis} = ${view.index} / ${sliceShape(view)[0] - 1}`;
  renderHistory();
}

function renderHistory() {
  if (!view) return;
  const strip = el<HTMLDivElement>("history");
  strip.innerHTML = "";
  for (const entry of view.history) {
    const chip = document.createElement("span");
    chip.className = "chip";
    chip.textContent =
      `it ${entry.iteration}: ${entry.changedVoxels} changed` +
      (entry.dsc !== undefined ? `, DSC ${entry.dsc.toFixed(3)}` : "");
    strip.appendChild(chip);
  }
  el<HTMLSpanElement>("iteration-label").textContent = sequenceComplete(view)
    ? `sequence complete (T=${view.T}); refine continues explicitly`
    : `iteration ${view.iteration} of ${view.T}`;
}

async function loadVolumeView(file: File, gtFile: File | null) {
  clearError();
  try {
    const bytes = new Uint8Array(await file.arrayBuffer());
    parseIvol(bytes); // fail fast with a client-side message for bad files
    let gt: Uint8Array | undefined;
    if (gtFile) gt = new Uint8Array(await gtFile.arrayBuffer());
    const info = await client.createSession(bytes, gt);
    view = initView(info);
    lastHighlight = null;
    const slider = el<HTMLInputElement>("slider");
    slider.max = String(view.dims[0] - 1);
    slider.value = String(view.index);
    setBusy(false);
    await redraw();
  } catch (err) {
    view = null;
    showError(err instanceof ApiError ? `service: ${err.message}` : String(err));
  }
}

async function placeClick(offsetX: number, offsetY: number, mode: Polarity) {
  if (!view || busy) return;
  const voxel = sliceToVoxel(view, offsetY / SCALE, offsetX / SCALE);
  if (!voxel) {
    badge.textContent = "outside the slice";
    return;
  }
  setBusy(true);
  try {
    const result = await client.postClicks(view.sessionId, [
      { pos: voxel, polarity: mode },
    ]);
    const added = mode === "object" ? result.object_added : result.background_added;
    badge.textContent = `+${added} ${mode} voxels`;
    const labels = await fetchSlice("supervoxel_labels");
    const [, cols] = sliceShape(view);
    const pixelIndex = Math.floor(offsetY / SCALE) * cols + Math.floor(offsetX / SCALE);
    lastHighlight = {
      pixels: regionHighlight(labels, pixelIndex),
      axis: view.axis,
      index: view.index,
    };
    await redraw();
  } catch (err) {
    showError(err instanceof ApiError ? `service: ${err.message}` : String(err));
  } finally {
    setBusy(false);
  }
}

async function stepRefinement() {
  if (!view || busy) return;
  setBusy(true);
  try {
    const result = await client.refine(view.sessionId, sequenceComplete(view));
    view = pushHistory(view, {
      iteration: result.iteration,
      changedVoxels: result.changed_voxels,
      dsc: result.dsc,
    });
    lastHighlight = null;
    await redraw();
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      showError("sequence complete; press refine again to continue past T");
    } else {
      showError(err instanceof ApiError ? `service: ${err.message}` : String(err));
    }
  } finally {
    setBusy(false);
  }
}

async function exportMask() {
  if (!view || busy) return;
  setBusy(true);
  try {
    const bytes = await client.exportMask(view.sessionId);
    const blob = new Blob([bytes.buffer as ArrayBuffer], { type: "application/octet-stream" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "mask.ivol";
    a.click();
    URL.revokeObjectURL(a.href);
  } catch (err) {
    showError(String(err));
  } finally {
    setBusy(false);
  }
}

export function wire() {
  el<HTMLInputElement>("volume-file").addEventListener("change", (ev) => {
    const input = ev.target as HTMLInputElement;
    const gtInput = el<HTMLInputElement>("gt-file");
    if (input.files?.[0]) void loadVolumeView(input.files[0], gtInput.files?.[0] ?? null);
  });
  el<HTMLInputElement>("slider").addEventListener("input", (ev) => {
    if (!view) return;
    view = withSlice(view, Number((ev.target as HTMLInputElement).value));
    void redraw();
  });
  el<HTMLSelectElement>("axis").addEventListener("change", (ev) => {
    if (!view) return;
    view = withAxis(view, (ev.target as HTMLSelectElement).value as "z" | "y" | "x");
    const slider = el<HTMLInputElement>("slider");
    slider.max = String(view.dims[{ z: 0, y: 1, x: 2 }[view.axis]]! - 1);
    slider.value = String(view.index);
    lastHighlight = null;
    void redraw();
  });
  el<HTMLButtonElement>("mode-object").addEventListener("click", () => {
    if (view) view = withClickMode(view, "object");
    badge.textContent = "object mode";
  });
  el<HTMLButtonElement>("mode-background").addEventListener("click", () => {
    if (view) view = withClickMode(view, "background");
    badge.textContent = "background mode";
  });
  canvas.addEventListener("click", (ev) => {
    if (view) void placeClick(ev.offsetX, ev.offsetY, view.clickMode);
  });
  el<HTMLButtonElement>("refine").addEventListener("click", () => void stepRefinement());
  el<HTMLButtonElement>("export").addEventListener("click", () => void exportMask());
  setBusy(false);
}

if (typeof document !== "undefined" && document.getElementById("slice")) {
  wire();
}
