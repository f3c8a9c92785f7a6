/** Application shell: state, event delegation and server round trips.
 *
 * The whole UI is re-rendered from a single state object after each
 * discrete action; free-text fields update state on input without a
 * re-render so typing never loses focus.
 */

import {
  ApiError,
  ReviewApi,
  type CaseBundle,
  type CaseSummary,
  type FormSchema,
  type Session,
} from './api.js';
import { measureDistance, type PixelPoint } from './measure.js';
import {
  addMeasurePoint,
  clearMeasurement,
  createViewerState,
  setSequence,
  setWindow,
  clearWindow,
  setZ,
  toggleOverlay,
  type ViewerState,
} from './viewer.js';
import {
  assessmentErrors,
  buildDocument,
  emptyAssessment,
  prefillFromPrior,
  setHallucinationLevel,
  setMissingLevel,
  toggleChoice,
  type AssessmentFormState,
} from './form.js';
import { moveSlot } from './ranking.js';
import {
  renderCaseList,
  renderLogin,
  renderSession,
} from './dom.js';

interface AppState {
  view: 'login' | 'cases' | 'session';
  session: Session | null;
  schema: FormSchema | null;
  cases: CaseSummary[];
  bundle: CaseBundle | null;
  viewer: ViewerState | null;
  form: AssessmentFormState | null;
  pixelSpacingMm: [number, number] | null;
  lastDistanceMm: number | null;
  errors: string[];
  notice: string | null;
  dragIndex: number | null;
}

export function startApp(root: HTMLElement, api: ReviewApi): void {
  const state: AppState = {
    view: 'login',
    session: null,
    schema: null,
    cases: [],
    bundle: null,
    viewer: null,
    form: null,
    pixelSpacingMm: null,
    lastDistanceMm: null,
    errors: [],
    notice: null,
    dragIndex: null,
  };

  function sliceUrl(): string {
    const { bundle, viewer, session } = state;
    if (!bundle || !viewer || !session) return '';
    return api.sliceUrl(bundle.case_id, {
      seq: viewer.sequence,
      z: viewer.z,
      overlays: viewer.activeOverlays,
      window: viewer.window,
    }, session);
  }

  function render(): void {
    if (state.view === 'login' || !state.session) {
      root.innerHTML = renderLogin(state.errors[0] ?? null);
    } else if (state.view === 'cases') {
      root.innerHTML = renderCaseList(state.cases, state.session.reviewerId);
    } else if (state.bundle && state.schema && state.viewer && state.form) {
      root.innerHTML = renderSession(
        state.bundle, state.schema, state.viewer, state.form,
        sliceUrl(), state.lastDistanceMm, state.errors, state.notice);
    }
  }

  function fail(err: unknown): void {
    state.errors = [err instanceof Error ? err.message : String(err)];
    render();
  }

  async function doLogin(reviewerId: string): Promise<void> {
    state.session = await api.login(reviewerId);
    state.schema = await api.schema();
    state.cases = await api.cases();
    state.view = 'cases';
    state.errors = [];
    render();
  }

  async function openCase(caseId: string): Promise<void> {
    const session = state.session;
    const schema = state.schema;
    if (!session || !schema) return;
    const bundle = await api.bundle(caseId, session);
    state.bundle = bundle;
    state.viewer = createViewerState(bundle);
    state.form = bundle.prior_assessment
      ? prefillFromPrior(bundle, schema, session.reviewerId, bundle.prior_assessment)
      : emptyAssessment(bundle, schema, session.reviewerId);
    state.notice = bundle.prior_assessment ? 'Loaded your previous answers.' : null;
    state.lastDistanceMm = null;
    state.errors = [];
    state.view = 'session';
    // one header-bearing fetch to learn the pixel spacing for measurements
    const slice = await api.fetchSlice(caseId, {
      seq: state.viewer.sequence, z: state.viewer.z, overlays: [], window: null,
    }, session);
    state.pixelSpacingMm = slice.pixelSpacingMm;
    render();
  }

  async function submit(): Promise<void> {
    const { schema, form, session } = state;
    if (!schema || !form || !session) return;
    state.errors = assessmentErrors(schema, form);
    if (state.errors.length) {
      render();
      return;
    }
    try {
      const receipt = await api.submit(buildDocument(schema, form), session);
      state.notice = `Assessment stored (${receipt.versions_kept} earlier version(s) kept).`;
      state.errors = [];
    } catch (err) {
      if (err instanceof ApiError) state.errors = [err.message];
      else throw err;
    }
    render();
  }

  function sliceClick(ev: MouseEvent): void {
    const img = ev.target as HTMLImageElement;
    const viewer = state.viewer;
    if (!viewer || !state.pixelSpacingMm) return;
    const scaleX = img.naturalWidth / img.clientWidth || 1;
    const scaleY = img.naturalHeight / img.clientHeight || 1;
    const p: PixelPoint = { x: ev.offsetX * scaleX, y: ev.offsetY * scaleY };
    const { state: nextViewer, completed } = addMeasurePoint(viewer, p);
    state.viewer = nextViewer;
    if (completed) {
      const mm = measureDistance(completed[0], completed[1], state.pixelSpacingMm);
      state.lastDistanceMm = mm;
      state.form?.measurements.push({
        p1: [completed[0].x, completed[0].y],
        p2: [completed[1].x, completed[1].y],
        distance_mm: mm,
      });
    }
    render();
  }

  function withSlot(el: HTMLElement, fn: (slot: string) => void): void {
    const slot = el.dataset.slot;
    if (slot && state.form?.reports[slot]) fn(slot);
  }

  function handleAction(el: HTMLElement, ev: Event): void {
    const form = state.form;
    const viewer = state.viewer;
    const action = el.dataset.action;
    switch (action) {
      case 'open-case':
        openCase(el.dataset.case ?? '').catch(fail);
        break;
      case 'back':
        state.view = 'cases';
        state.bundle = null;
        render();
        break;
      case 'set-sequence':
        if (viewer) state.viewer = setSequence(viewer, (el as HTMLSelectElement).value);
        render();
        break;
      case 'set-z':
        if (viewer) state.viewer = setZ(viewer, Number((el as HTMLInputElement).value));
        render();
        break;
      case 'toggle-overlay':
        if (viewer) state.viewer = toggleOverlay(viewer, el.dataset.overlay ?? '');
        render();
        break;
      case 'window-lo':
      case 'window-hi': {
        if (!viewer) break;
        const loEl = root.querySelector<HTMLInputElement>('[data-action="window-lo"]');
        const hiEl = root.querySelector<HTMLInputElement>('[data-action="window-hi"]');
        const lo = Number(loEl?.value);
        const hi = Number(hiEl?.value);
        if (Number.isFinite(lo) && Number.isFinite(hi) && lo < hi) {
          state.viewer = setWindow(viewer, lo, hi);
        } else if (loEl?.value === '' && hiEl?.value === '') {
          state.viewer = clearWindow(viewer);
        }
        render();
        break;
      }
      case 'slice-click':
        sliceClick(ev as MouseEvent);
        break;
      case 'clear-measure':
        if (viewer) state.viewer = clearMeasurement(viewer);
        state.lastDistanceMm = null;
        render();
        break;
      case 'set-hallucination':
        withSlot(el, (slot) => {
          form!.reports[slot] = setHallucinationLevel(
            form!.reports[slot], (el as HTMLInputElement).value);
        });
        render();
        break;
      case 'toggle-hallucination-type':
        withSlot(el, (slot) => {
          const r = form!.reports[slot];
          form!.reports[slot] = {
            ...r,
            hallucinationTypes: toggleChoice(r.hallucinationTypes, (el as HTMLInputElement).value),
          };
        });
        render();
        break;
      case 'set-missing':
        withSlot(el, (slot) => {
          form!.reports[slot] = setMissingLevel(
            form!.reports[slot], (el as HTMLInputElement).value);
        });
        render();
        break;
      case 'toggle-missing-element':
        withSlot(el, (slot) => {
          const r = form!.reports[slot];
          form!.reports[slot] = {
            ...r,
            missingElements: toggleChoice(r.missingElements, (el as HTMLInputElement).value),
          };
        });
        render();
        break;
      case 'set-intended-use':
        withSlot(el, (slot) => {
          form!.reports[slot] = { ...form!.reports[slot], intendedUse: (el as HTMLInputElement).value };
        });
        render();
        break;
      case 'set-likert':
        withSlot(el, (slot) => {
          const item = el.dataset.item ?? '';
          form!.reports[slot] = {
            ...form!.reports[slot],
            likert: { ...form!.reports[slot].likert, [item]: Number((el as HTMLInputElement).value) },
          };
        });
        render();
        break;
      case 'submit':
        submit().catch(fail);
        break;
      default:
        break;
    }
  }

  root.addEventListener('click', (ev) => {
    const el = (ev.target as HTMLElement).closest<HTMLElement>('[data-action]');
    if (!el) return;
    const tag = el.tagName.toLowerCase();
    // form controls are handled on change; buttons, list items and the
    // slice image act on click
    if (tag === 'button' || el.dataset.action === 'slice-click') handleAction(el, ev);
  });

  root.addEventListener('change', (ev) => {
    const el = (ev.target as HTMLElement).closest<HTMLElement>('[data-action]');
    if (el) handleAction(el, ev);
  });

  // free-text fields: update state silently, no re-render
  root.addEventListener('input', (ev) => {
    const el = ev.target as HTMLInputElement | HTMLTextAreaElement;
    const action = el.dataset.action;
    const form = state.form;
    if (!form) return;
    if (action === 'overall-comments') form.comments = el.value;
    if (action === 'report-comments' && el.dataset.slot) {
      form.reports[el.dataset.slot].comments = el.value;
    }
    if (action === 'hallucination-other' && el.dataset.slot) {
      form.reports[el.dataset.slot].hallucinationOther = el.value;
    }
    if (action === 'missing-other' && el.dataset.slot) {
      form.reports[el.dataset.slot].missingOther = el.value;
    }
  });

  root.addEventListener('submit', (ev) => {
    const formEl = ev.target as HTMLFormElement;
    if (formEl.dataset.action !== 'login') return;
    ev.preventDefault();
    const reviewer = new FormData(formEl).get('reviewer');
    if (typeof reviewer === 'string' && reviewer.trim()) {
      doLogin(reviewer.trim()).catch(fail);
    }
  });

  // drag to reorder ranking
  root.addEventListener('dragstart', (ev) => {
    const el = (ev.target as HTMLElement).closest<HTMLElement>('[data-action="rank-item"]');
    state.dragIndex = el ? Number(el.dataset.index) : null;
  });
  root.addEventListener('dragover', (ev) => {
    if (state.dragIndex !== null) ev.preventDefault();
  });
  root.addEventListener('drop', (ev) => {
    const el = (ev.target as HTMLElement).closest<HTMLElement>('[data-action="rank-item"]');
    const form = state.form;
    if (el && form && state.dragIndex !== null) {
      ev.preventDefault();
      form.ranking = moveSlot(form.ranking, state.dragIndex, Number(el.dataset.index));
      render();
    }
    state.dragIndex = null;
  });

  render();
}

declare const window: (Window & typeof globalThis) | undefined;

if (typeof document !== 'undefined' && typeof window !== 'undefined') {
  const mount = document.getElementById('app');
  if (mount) startApp(mount, new ReviewApi(window.location.origin));
}
