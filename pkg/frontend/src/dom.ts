/** HTML renderers for every view, written as pure string builders.
 *
 * Each renderer maps state to markup with all dynamic text escaped;
 * app.ts swaps the result into the page and re-binds events. Keeping
 * renderers pure lets the test suite assert on exactly the markup a
 * blinded session shows, byte for byte.
 */

import type { CaseBundle, CaseSummary, FormSchema } from './api.js';
import { formatDistance } from './measure.js';
import type { ViewerState } from './viewer.js';
import type { AssessmentFormState, ReportFormState } from './form.js';
import {
  showsHallucinationFollowUp,
  showsHallucinationOtherText,
  showsMissingFollowUp,
  showsMissingOtherText,
} from './form.js';
import { rankLabel } from './ranking.js';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;');
}

const esc = escapeHtml;

export function renderLogin(error: string | null = null): string {
  return `
<section class="login">
  <h1>Blinded report review</h1>
  <form data-action="login">
    <label>Reviewer ID <input name="reviewer" autocomplete="username" required></label>
    <button type="submit">Start session</button>
  </form>
  ${error ? `<p class="error">${esc(error)}</p>` : ''}
</section>`;
}

export function renderCaseList(cases: CaseSummary[], reviewerId: string): string {
  const rows = cases.map((c) => `
    <li>
      <button data-action="open-case" data-case="${esc(c.case_id)}">
        ${esc(c.case_id)}</button>
      <span class="meta">${c.n_reports} reports, ${c.sequences.length} sequences</span>
    </li>`).join('');
  return `
<section class="case-list">
  <h1>Cases</h1>
  <p>Signed in as <strong>${esc(reviewerId)}</strong></p>
  <ul>${rows}</ul>
</section>`;
}

function renderViewerControls(bundle: CaseBundle, v: ViewerState): string {
  const seqOptions = bundle.sequences.map((s) =>
    `<option value="${esc(s)}"${s === v.sequence ? ' selected' : ''}>${esc(s)}</option>`).join('');
  const overlayBoxes = v.availableOverlays.map((o) => `
    <label><input type="checkbox" data-action="toggle-overlay" data-overlay="${esc(o)}"
      ${v.activeOverlays.includes(o) ? 'checked' : ''}> ${esc(o.replace(/_/g, ' '))}</label>`).join('');
  const win = v.window;
  return `
  <div class="viewer-controls">
    <select data-action="set-sequence">${seqOptions}</select>
    <label>z <input type="range" data-action="set-z" min="0" max="${v.zCount - 1}"
      value="${v.z}"> <span class="z-readout">${v.z + 1}/${v.zCount}</span></label>
    <fieldset class="overlays"><legend>Overlays</legend>${overlayBoxes}</fieldset>
    <label>Window <input type="number" data-action="window-lo" value="${win ? win[0] : ''}"
      placeholder="auto"> .. <input type="number" data-action="window-hi"
      value="${win ? win[1] : ''}" placeholder="auto"></label>
  </div>`;
}

export function renderMeasurePanel(v: ViewerState, lastDistanceMm: number | null): string {
  const status = v.pendingPoints.length === 1
    ? 'click the second point'
    : 'click two points on the slice to measure';
  const reading = lastDistanceMm === null ? ''
    : `<strong class="distance">${esc(formatDistance(lastDistanceMm))}</strong>`;
  return `
  <div class="measure-panel">
    <span>${esc(status)}</span> ${reading}
    <button data-action="clear-measure" type="button">Clear</button>
  </div>`;
}

export function renderViewer(
  bundle: CaseBundle,
  v: ViewerState,
  sliceUrl: string,
  lastDistanceMm: number | null,
): string {
  return `
<section class="viewer">
  ${renderViewerControls(bundle, v)}
  <img class="slice" src="${esc(sliceUrl)}" alt="axial slice ${v.z + 1} of ${v.zCount}"
    data-action="slice-click" draggable="false">
  ${renderMeasurePanel(v, lastDistanceMm)}
</section>`;
}

/** Report columns in exactly the server-provided slot order. */
export function renderReportColumns(bundle: CaseBundle): string {
  const cols = bundle.slots.map((s) => `
    <article class="report-column">
      <h2>Report ${esc(s.slot)}</h2>
      <pre class="findings">${esc(s.findings_text)}</pre>
    </article>`).join('');
  return `<section class="reports">${cols}</section>`;
}

function radioRow(name: string, options: string[], chosen: string | null, action: string, slot: string): string {
  return options.map((opt) => `
      <label><input type="radio" name="${esc(name)}" value="${esc(opt)}"
        data-action="${esc(action)}" data-slot="${esc(slot)}"
        ${opt === chosen ? ' checked' : ''}> ${esc(opt)}</label>`).join('');
}

function checklist(options: string[], chosen: string[], action: string, slot: string): string {
  return options.map((opt) => `
      <label><input type="checkbox" value="${esc(opt)}" data-action="${esc(action)}"
        data-slot="${esc(slot)}" ${chosen.includes(opt) ? 'checked' : ''}> ${esc(opt)}</label>`).join('');
}

function likertRow(schema: FormSchema, item: string, value: number | null, slot: string): string {
  const [lo, hi] = schema.likert_range;
  const cells = [];
  for (let v = lo; v <= hi; v += 1) {
    cells.push(`<label><input type="radio" name="${esc(slot)}-${esc(item)}" value="${v}"
      data-action="set-likert" data-slot="${esc(slot)}" data-item="${esc(item)}"
      ${value === v ? ' checked' : ''}> ${v}</label>`);
  }
  return `
    <div class="likert-row"><span class="likert-name">${esc(item.replace(/_/g, ' '))}</span>
      ${cells.join('')}</div>`;
}

export function renderReportForm(schema: FormSchema, slot: string, r: ReportFormState): string {
  const parts: string[] = [];
  parts.push(`<h3>Assessment of report ${esc(slot)}</h3>`);

  parts.push(`<fieldset><legend>Hallucinated findings?</legend>
    ${radioRow(`${slot}-halluc`, schema.hallucination_levels, r.hallucinations, 'set-hallucination', slot)}
  </fieldset>`);
  if (showsHallucinationFollowUp(schema, r)) {
    parts.push(`<fieldset class="follow-up" data-panel="hallucination-types">
      <legend>Hallucination types (select all that apply)</legend>
      ${checklist(schema.hallucination_types, r.hallucinationTypes, 'toggle-hallucination-type', slot)}
      ${showsHallucinationOtherText(r)
        ? `<label>Other: <input type="text" data-action="hallucination-other"
             data-slot="${esc(slot)}" value="${esc(r.hallucinationOther)}"></label>`
        : ''}
    </fieldset>`);
  }

  parts.push(`<fieldset><legend>Missing key features?</legend>
    ${radioRow(`${slot}-missing`, schema.missing_levels, r.missingFeatures, 'set-missing', slot)}
  </fieldset>`);
  if (showsMissingFollowUp(schema, r)) {
    parts.push(`<fieldset class="follow-up" data-panel="missing-elements">
      <legend>Missing elements (select all that apply)</legend>
      ${checklist(schema.missing_elements, r.missingElements, 'toggle-missing-element', slot)}
      ${showsMissingOtherText(r)
        ? `<label>Other: <input type="text" data-action="missing-other"
             data-slot="${esc(slot)}" value="${esc(r.missingOther)}"></label>`
        : ''}
    </fieldset>`);
  }

  parts.push(`<fieldset><legend>Intended use</legend>
    ${radioRow(`${slot}-use`, schema.intended_use, r.intendedUse, 'set-intended-use', slot)}
  </fieldset>`);

  parts.push(`<fieldset class="likert"><legend>Ratings (${schema.likert_range[0]} low .. ${schema.likert_range[1]} high)</legend>
    ${schema.likert_items.map((item) => likertRow(schema, item, r.likert[item] ?? null, slot)).join('')}
  </fieldset>`);

  parts.push(`<label>Comments <textarea data-action="report-comments"
    data-slot="${esc(slot)}">${esc(r.comments)}</textarea></label>`);

  return `<div class="report-form" data-slot="${esc(slot)}">${parts.join('\n')}</div>`;
}

export function renderRanking(ranking: string[]): string {
  const items = ranking.map((slot, i) => `
    <li draggable="true" data-action="rank-item" data-slot="${esc(slot)}" data-index="${i}">
      <span class="rank-label">${esc(rankLabel(i, ranking.length))}</span> Report ${esc(slot)}
    </li>`).join('');
  return `
  <fieldset class="ranking"><legend>Rank the reports (drag to order)</legend>
    <ol>${items}</ol>
  </fieldset>`;
}

export function renderSession(
  bundle: CaseBundle,
  schema: FormSchema,
  viewer: ViewerState,
  form: AssessmentFormState,
  sliceUrl: string,
  lastDistanceMm: number | null,
  errors: string[] = [],
  notice: string | null = null,
): string {
  const forms = form.slots.map((slot) =>
    renderReportForm(schema, slot, form.reports[slot])).join('\n');
  const errorBlock = errors.length
    ? `<ul class="errors">${errors.map((e) => `<li>${esc(e)}</li>`).join('')}</ul>`
    : '';
  const measured = form.measurements.length
    ? `<p class="measurements">${form.measurements.length} measurement(s) attached</p>`
    : '';
  return `
<section class="session" data-case="${esc(bundle.case_id)}">
  <header>
    <button data-action="back" type="button">Back to cases</button>
    <h1>Case ${esc(bundle.case_id)}</h1>
    ${notice ? `<p class="notice">${esc(notice)}</p>` : ''}
  </header>
  ${renderViewer(bundle, viewer, sliceUrl, lastDistanceMm)}
  ${renderReportColumns(bundle)}
  <section class="assessment">
    ${forms}
    ${renderRanking(form.ranking)}
    <label>Overall comments <textarea data-action="overall-comments">${esc(form.comments)}</textarea></label>
    ${measured}
    ${errorBlock}
    <button data-action="submit" type="button">Submit assessment</button>
  </section>
</section>`;
}
