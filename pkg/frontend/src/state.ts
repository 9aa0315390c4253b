/** View state: selected class, slider values, last server responses.
 * Sliders clamp to their documented ranges; a single mutation may be in
 * flight at a time and controls stay locked until it settles. */

import { DbscanParams, EmbeddingPoint, SummaryResponse } from "./api.js";

export const MIN_PTS_RANGE = { min: 1, max: 100 };
export const EPS_DEFAULT_MULTIPLE = 10; // eps slider spans (0, 10x default]

export interface ViewState {
  selectedClass: number | null;
  eps: number;
  minPts: number;
  epsMax: number;
  points: EmbeddingPoint[];
  summary: SummaryResponse | null;
  pending: boolean;
  status: string;
}

export function initialState(): ViewState {
  return {
    selectedClass: null,
    eps: 1,
    minPts: 10,
    epsMax: 10,
    points: [],
    summary: null,
    pending: false,
    status: "",
  };
}

export function clampEps(value: number, epsMax: number): number {
  if (!Number.isFinite(value) || value <= 0) {
    return epsMax / EPS_DEFAULT_MULTIPLE; // back to the server default
  }
  return Math.min(value, epsMax);
}

export function clampMinPts(value: number): number {
  if (!Number.isFinite(value)) {
    return MIN_PTS_RANGE.min;
  }
  return Math.min(Math.max(Math.round(value), MIN_PTS_RANGE.min), MIN_PTS_RANGE.max);
}

/** Apply the server's current config for a freshly selected class. */
export function selectClass(state: ViewState, cls: number, config: DbscanParams): ViewState {
  return {
    ...state,
    selectedClass: cls,
    eps: config.eps,
    epsMax: config.eps * EPS_DEFAULT_MULTIPLE,
    minPts: clampMinPts(config.min_pts),
  };
}

export function sliderParams(state: ViewState): DbscanParams {
  return { eps: clampEps(state.eps, state.epsMax), min_pts: clampMinPts(state.minPts) };
}

/** Guard for the single-in-flight-mutation rule. */
export function beginMutation(state: ViewState): ViewState {
  if (state.pending) {
    throw new Error("a mutation is already in flight");
  }
  return { ...state, pending: true };
}

export function endMutation(state: ViewState, status: string): ViewState {
  return { ...state, pending: false, status };
}
