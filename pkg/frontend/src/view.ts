/**
 * Client-side view state: which slice is shown, which layers are visible,
 * the active click polarity, and the per-iteration history strip. All pure
 * functions so the logic is testable without a DOM.
 */

import type { Axis, Polarity, SessionInfo } from "./api.js";

export interface LayerView {
  visible: boolean;
  opacity: number; // 0..1
}

export interface HistoryEntry {
  iteration: number;
  changedVoxels: number;
  dsc?: number;
}

export interface ViewState {
  sessionId: string;
  dims: [number, number, number];
  axis: Axis;
  index: number;
  clickMode: Polarity;
  layers: { probability: LayerView; prediction: LayerView; hints: LayerView };
  history: HistoryEntry[];
  iteration: number;
  T: number;
  hasGt: boolean;
}

const AXIS_DIM: Record<Axis, number> = { z: 0, y: 1, x: 2 };

export function axisExtent(dims: [number, number, number], axis: Axis): number {
  return dims[AXIS_DIM[axis]]!;
}

export function initView(info: SessionInfo): ViewState {
  return {
    sessionId: info.id,
    dims: info.dims,
    axis: "z",
    index: Math.floor(axisExtent(info.dims, "z") / 2),
    clickMode: "object",
    layers: {
      probability: { visible: true, opacity: 0.5 },
      prediction: { visible: false, opacity: 0.5 },
      hints: { visible: true, opacity: 0.6 },
    },
    history: [],
    iteration: info.iteration,
    T: info.T,
    hasGt: info.has_gt,
  };
}

export function clampIndex(state: ViewState, index: number): number {
  const extent = axisExtent(state.dims, state.axis);
  return Math.min(Math.max(Math.round(index), 0), extent - 1);
}

export function withSlice(state: ViewState, index: number): ViewState {
  return { ...state, index: clampIndex(state, index) };
}

export function withAxis(state: ViewState, axis: Axis): ViewState {
  // switching the viewing axis recenters on the middle slice
  const next = { ...state, axis };
  return { ...next, index: Math.floor(axisExtent(state.dims, axis) / 2) };
}

export function withClickMode(state: ViewState, mode: Polarity): ViewState {
  return { ...state, clickMode: mode };
}

export function sliceShape(state: ViewState): [number, number] {
  const [d, h, w] = state.dims;
  if (state.axis === "z") return [h, w];
  if (state.axis === "y") return [d, w];
  return [d, h];
}

/**
 * Map a (row, col) position on the displayed slice to voxel (z, y, x)
 * coordinates, or null when it falls outside the grid.
 */
export function sliceToVoxel(
  state: ViewState,
  row: number,
  col: number,
): [number, number, number] | null {
  const [rows, cols] = sliceShape(state);
  const r = Math.floor(row);
  const c = Math.floor(col);
  if (r < 0 || r >= rows || c < 0 || c >= cols) return null;
  if (state.axis === "z") return [state.index, r, c];
  if (state.axis === "y") return [r, state.index, c];
  return [r, c, state.index];
}

export function pushHistory(state: ViewState, entry: HistoryEntry): ViewState {
  return {
    ...state,
    iteration: entry.iteration,
    history: [...state.history, entry],
  };
}

export function sequenceComplete(state: ViewState): boolean {
  return state.iteration >= state.T;
}
