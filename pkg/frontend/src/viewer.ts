/** Slice viewer state: sequence, z position, window, overlay toggles and
 * the in-progress two-point measurement. All transitions return a new
 * state object; invariants (z in range, at most 2 pending points) are
 * enforced here so the DOM layer can stay dumb.
 */

import type { CaseBundle } from './api.js';
import type { PixelPoint } from './measure.js';

export interface ViewerState {
  caseId: string;
  sequence: string;
  z: number;
  zCount: number;
  window: [number, number] | null;
  activeOverlays: string[];
  availableOverlays: string[];
  pendingPoints: PixelPoint[];
}

export function createViewerState(bundle: CaseBundle): ViewerState {
  if (!bundle.sequences.length) throw new Error('bundle has no sequences');
  return {
    caseId: bundle.case_id,
    sequence: bundle.sequences[0],
    z: Math.floor(bundle.z_count / 2),
    zCount: bundle.z_count,
    window: null,
    activeOverlays: [],
    availableOverlays: [...bundle.overlays],
    pendingPoints: [],
  };
}

export function setZ(state: ViewerState, z: number): ViewerState {
  const clamped = Math.min(Math.max(Math.round(z), 0), state.zCount - 1);
  return { ...state, z: clamped };
}

export function setSequence(state: ViewerState, sequence: string): ViewerState {
  return { ...state, sequence };
}

export function setWindow(state: ViewerState, lo: number, hi: number): ViewerState {
  if (!(lo < hi)) throw new Error('window lo must be < hi');
  return { ...state, window: [lo, hi] };
}

export function clearWindow(state: ViewerState): ViewerState {
  return { ...state, window: null };
}

export function toggleOverlay(state: ViewerState, name: string): ViewerState {
  if (!state.availableOverlays.includes(name)) {
    throw new Error(`overlay ${name} not available for this case`);
  }
  const active = state.activeOverlays.includes(name)
    ? state.activeOverlays.filter((o) => o !== name)
    : [...state.activeOverlays, name];
  return { ...state, activeOverlays: active };
}

export interface MeasureUpdate {
  state: ViewerState;
  completed: [PixelPoint, PixelPoint] | null;
}

/** First click starts a measurement, second completes it; a third click
 * starts over. A completed pair is returned exactly once. */
export function addMeasurePoint(state: ViewerState, p: PixelPoint): MeasureUpdate {
  if (state.pendingPoints.length === 1) {
    const pair: [PixelPoint, PixelPoint] = [state.pendingPoints[0], p];
    return { state: { ...state, pendingPoints: [...pair] }, completed: pair };
  }
  return { state: { ...state, pendingPoints: [p] }, completed: null };
}

export function clearMeasurement(state: ViewerState): ViewerState {
  return { ...state, pendingPoints: [] };
}
