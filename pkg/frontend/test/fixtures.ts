/** Shared test fixtures. The schema literal mirrors GET /api/schema;
 * the contract suite asserts the live server still serves exactly this,
 * which keeps the unit tests honest.
 */

import type { CaseBundle, FormSchema } from '../src/api.js';

export const SCHEMA: FormSchema = {
  schema_version: 1,
  hallucination_levels: ['None', 'Minor', 'Major'],
  hallucination_trigger_levels: ['Minor', 'Major'],
  hallucination_types: [
    'Incorrect anatomical location of tumor',
    'Incorrect tumor characteristics',
    'Incorrect clinical implication',
    'Fabricated finding',
    'Other',
  ],
  missing_levels: ['No', 'Some', 'Many'],
  missing_trigger_levels: ['Some', 'Many'],
  missing_elements: [
    'Tumor size/extent',
    'Enhancement characteristics',
    'Edema/mass effect',
    'Midline shift',
    'Multifocality',
    'Invasion/eloquent cortex',
    'Other',
  ],
  intended_use: [
    'As a first draft',
    'As a cross-check/second reader',
    'As a summary aid only',
    'Would not use',
  ],
  likert_items: ['decision_support', 'clinical_accuracy',
    'clinical_omission', 'clinical_structure'],
  likert_range: [1, 4],
};

export function makeBundle(overrides: Partial<CaseBundle> = {}): CaseBundle {
  return {
    schema_version: 1,
    case_id: 'case-000',
    sequences: ['t1n'],
    dims: [24, 24, 24],
    spacing_mm: [2, 2, 2],
    z_count: 24,
    overlays: ['tumor', 'btreport_midline', 'ideal_midline'],
    slots: [
      { slot: 'A', findings_text: 'First findings text.\nNo acute hemorrhage.' },
      { slot: 'B', findings_text: 'Second findings text.\nStable appearance.' },
      { slot: 'C', findings_text: 'Third findings text.\nUnremarkable study.' },
    ],
    prior_assessment: null,
    ...overrides,
  };
}
