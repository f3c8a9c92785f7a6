/** Assessment form state and validation.
 *
 * The follow-up panels are driven entirely by the schema document the
 * server serves: a panel is visible iff the selected level is one of
 * the schema's trigger levels, and client-side validation reproduces
 * the server's conditional rules so a submission that passes here is
 * accepted there.
 */

import type {
  AssessmentDocument,
  CaseBundle,
  FormSchema,
  MeasurementRecord,
  ReportAssessmentBody,
} from './api.js';

export interface ReportFormState {
  hallucinations: string | null;
  hallucinationTypes: string[];
  hallucinationOther: string;
  missingFeatures: string | null;
  missingElements: string[];
  missingOther: string;
  intendedUse: string | null;
  likert: Record<string, number | null>;
  comments: string;
}

export interface AssessmentFormState {
  caseId: string;
  reviewerId: string;
  slots: string[];
  reports: Record<string, ReportFormState>;
  ranking: string[];
  measurements: MeasurementRecord[];
  comments: string;
}

export function emptyReportForm(schema: FormSchema): ReportFormState {
  const likert: Record<string, number | null> = {};
  for (const item of schema.likert_items) likert[item] = null;
  return {
    hallucinations: null,
    hallucinationTypes: [],
    hallucinationOther: '',
    missingFeatures: null,
    missingElements: [],
    missingOther: '',
    intendedUse: null,
    likert,
    comments: '',
  };
}

export function emptyAssessment(
  bundle: CaseBundle,
  schema: FormSchema,
  reviewerId: string,
): AssessmentFormState {
  const slots = bundle.slots.map((s) => s.slot);
  const reports: Record<string, ReportFormState> = {};
  for (const slot of slots) reports[slot] = emptyReportForm(schema);
  return {
    caseId: bundle.case_id,
    reviewerId,
    slots,
    reports,
    ranking: [...slots],
    measurements: [],
    comments: '',
  };
}

export function showsHallucinationFollowUp(schema: FormSchema, r: ReportFormState): boolean {
  return r.hallucinations !== null
    && schema.hallucination_trigger_levels.includes(r.hallucinations);
}

export function showsMissingFollowUp(schema: FormSchema, r: ReportFormState): boolean {
  return r.missingFeatures !== null
    && schema.missing_trigger_levels.includes(r.missingFeatures);
}

export function showsHallucinationOtherText(r: ReportFormState): boolean {
  return r.hallucinationTypes.includes('Other');
}

export function showsMissingOtherText(r: ReportFormState): boolean {
  return r.missingElements.includes('Other');
}

export function toggleChoice(values: string[], choice: string): string[] {
  return values.includes(choice)
    ? values.filter((v) => v !== choice)
    : [...values, choice];
}

/** Selecting a non-trigger level wipes the follow-up answers, so stale
 * selections can never ride along in the submitted document. */
export function setHallucinationLevel(r: ReportFormState, level: string): ReportFormState {
  return { ...r, hallucinations: level, hallucinationTypes: [], hallucinationOther: '' };
}

export function setMissingLevel(r: ReportFormState, level: string): ReportFormState {
  return { ...r, missingFeatures: level, missingElements: [], missingOther: '' };
}

export function reportFormErrors(schema: FormSchema, r: ReportFormState): string[] {
  const errors: string[] = [];
  const [lo, hi] = schema.likert_range;

  if (r.hallucinations === null) {
    errors.push('hallucination level not answered');
  } else if (!schema.hallucination_levels.includes(r.hallucinations)) {
    errors.push(`unknown hallucination level ${r.hallucinations}`);
  } else if (showsHallucinationFollowUp(schema, r)) {
    if (!r.hallucinationTypes.length) errors.push('select at least one hallucination type');
    for (const t of r.hallucinationTypes) {
      if (!schema.hallucination_types.includes(t)) errors.push(`unknown hallucination type ${t}`);
    }
    if (showsHallucinationOtherText(r) && !r.hallucinationOther.trim()) {
      errors.push('describe the Other hallucination');
    }
  }

  if (r.missingFeatures === null) {
    errors.push('missing-features level not answered');
  } else if (!schema.missing_levels.includes(r.missingFeatures)) {
    errors.push(`unknown missing-features level ${r.missingFeatures}`);
  } else if (showsMissingFollowUp(schema, r)) {
    if (!r.missingElements.length) errors.push('select at least one missing element');
    for (const e of r.missingElements) {
      if (!schema.missing_elements.includes(e)) errors.push(`unknown missing element ${e}`);
    }
    if (showsMissingOtherText(r) && !r.missingOther.trim()) {
      errors.push('describe the Other missing element');
    }
  }

  if (r.intendedUse === null) {
    errors.push('intended use not answered');
  } else if (!schema.intended_use.includes(r.intendedUse)) {
    errors.push(`unknown intended use ${r.intendedUse}`);
  }

  for (const item of schema.likert_items) {
    const v = r.likert[item] ?? null;
    if (v === null) {
      errors.push(`${item} rating not answered`);
    } else if (!Number.isInteger(v) || v < lo || v > hi) {
      errors.push(`${item} rating must be an integer in ${lo}..${hi}`);
    }
  }
  return errors;
}

export function assessmentErrors(schema: FormSchema, a: AssessmentFormState): string[] {
  const errors: string[] = [];
  for (const slot of a.slots) {
    for (const e of reportFormErrors(schema, a.reports[slot])) {
      errors.push(`report ${slot}: ${e}`);
    }
  }
  if ([...a.ranking].sort().join() !== [...a.slots].sort().join()) {
    errors.push('ranking must order every report exactly once');
  }
  return errors;
}

function toReportBody(r: ReportFormState, schema: FormSchema): ReportAssessmentBody {
  const body: ReportAssessmentBody = {
    hallucinations: r.hallucinations ?? '',
    hallucination_types: showsHallucinationFollowUp(schema, r) ? [...r.hallucinationTypes] : [],
    hallucination_other: showsHallucinationOtherText(r) ? r.hallucinationOther : '',
    missing_features: r.missingFeatures ?? '',
    missing_elements: showsMissingFollowUp(schema, r) ? [...r.missingElements] : [],
    missing_other: showsMissingOtherText(r) ? r.missingOther : '',
    intended_use: r.intendedUse ?? '',
    comments: r.comments,
    decision_support: 0,
    clinical_accuracy: 0,
    clinical_omission: 0,
    clinical_structure: 0,
  };
  for (const item of schema.likert_items) {
    (body as unknown as Record<string, unknown>)[item] = r.likert[item];
  }
  return body;
}

/** The exact JSON document POSTed to /api/assessments. Call
 * assessmentErrors first; this assumes a complete form. */
export function buildDocument(schema: FormSchema, a: AssessmentFormState): AssessmentDocument {
  const reports: Record<string, ReportAssessmentBody> = {};
  for (const slot of a.slots) reports[slot] = toReportBody(a.reports[slot], schema);
  return {
    schema_version: schema.schema_version,
    case_id: a.caseId,
    reviewer_id: a.reviewerId,
    reports,
    ranking: [...a.ranking],
    measurements: [...a.measurements],
    comments: a.comments,
  };
}

/** Revisiting a case pre-fills the form from the stored assessment. */
export function prefillFromPrior(
  bundle: CaseBundle,
  schema: FormSchema,
  reviewerId: string,
  prior: AssessmentDocument,
): AssessmentFormState {
  const state = emptyAssessment(bundle, schema, reviewerId);
  for (const slot of state.slots) {
    const body = prior.reports[slot];
    if (!body) continue;
    const likert: Record<string, number | null> = {};
    for (const item of schema.likert_items) {
      likert[item] = (body as unknown as Record<string, number>)[item] ?? null;
    }
    state.reports[slot] = {
      hallucinations: body.hallucinations,
      hallucinationTypes: [...body.hallucination_types],
      hallucinationOther: body.hallucination_other,
      missingFeatures: body.missing_features,
      missingElements: [...body.missing_elements],
      missingOther: body.missing_other,
      intendedUse: body.intended_use,
      likert,
      comments: body.comments,
    };
  }
  if ([...prior.ranking].sort().join() === [...state.slots].sort().join()) {
    state.ranking = [...prior.ranking];
  }
  state.measurements = prior.measurements.map((m) => ({ ...m }));
  state.comments = prior.comments;
  return state;
}
