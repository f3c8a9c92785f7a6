/** Typed client for the blinded review REST API.
 *
 * Every call goes through `fetch`; the UI has no other channel to the
 * backend. Errors surface as ApiError with the server's status and
 * detail text so forms can show them verbatim.
 */

export interface Session {
  reviewerId: string;
  token: string;
}

export interface CaseSummary {
  case_id: string;
  sequences: string[];
  n_reports: number;
}

export interface ReportSlot {
  slot: string;
  findings_text: string;
}

export interface CaseBundle {
  schema_version: number;
  case_id: string;
  sequences: string[];
  dims: number[];
  spacing_mm: number[];
  z_count: number;
  overlays: string[];
  slots: ReportSlot[];
  prior_assessment: AssessmentDocument | null;
}

export interface FormSchema {
  schema_version: number;
  hallucination_levels: string[];
  hallucination_trigger_levels: string[];
  hallucination_types: string[];
  missing_levels: string[];
  missing_trigger_levels: string[];
  missing_elements: string[];
  intended_use: string[];
  likert_items: string[];
  likert_range: [number, number];
}

export interface MeasurementRecord {
  p1: [number, number];
  p2: [number, number];
  distance_mm: number;
}

export interface ReportAssessmentBody {
  hallucinations: string;
  hallucination_types: string[];
  hallucination_other: string;
  missing_features: string;
  missing_elements: string[];
  missing_other: string;
  intended_use: string;
  decision_support: number;
  clinical_accuracy: number;
  clinical_omission: number;
  clinical_structure: number;
  comments: string;
}

export interface AssessmentDocument {
  schema_version: number;
  case_id: string;
  reviewer_id: string;
  reports: Record<string, ReportAssessmentBody>;
  ranking: string[];
  measurements: MeasurementRecord[];
  comments: string;
  submitted_at?: string | null;
}

export interface SliceResponse {
  bytes: ArrayBuffer;
  pixelSpacingMm: [number, number];
  sliceCount: number;
}

export interface SliceRequest {
  seq: string;
  z: number;
  overlays: string[];
  window: [number, number] | null;
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return;
  let detail = res.statusText;
  try {
    const body = await res.json();
    detail = typeof body.detail === 'string' ? body.detail : JSON.stringify(body.detail);
  } catch {
    // non-JSON error body, keep the status text
  }
  throw new ApiError(res.status, detail);
}

/** "sx,sy" header -> [sx, sy] in mm per pixel; throws when absent. */
export function parsePixelSpacing(header: string | null): [number, number] {
  if (!header) throw new Error('pixel spacing header absent');
  const parts = header.split(',').map(Number);
  if (parts.length !== 2 || parts.some((v) => !Number.isFinite(v) || v <= 0)) {
    throw new Error(`bad pixel spacing header: ${header}`);
  }
  return [parts[0], parts[1]];
}

export class ReviewApi {
  constructor(readonly baseUrl: string) {}

  private url(path: string, params: Record<string, string> = {}): string {
    const u = new URL(path, this.baseUrl);
    for (const [k, v] of Object.entries(params)) u.searchParams.set(k, v);
    return u.toString();
  }

  async login(reviewerId: string): Promise<Session> {
    const res = await fetch(this.url('/api/login'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ reviewer: reviewerId }),
    });
    await raiseForStatus(res);
    const body = await res.json();
    return { reviewerId: body.reviewer_id, token: body.token };
  }

  async schema(): Promise<FormSchema> {
    const res = await fetch(this.url('/api/schema'));
    await raiseForStatus(res);
    return res.json();
  }

  async cases(): Promise<CaseSummary[]> {
    const res = await fetch(this.url('/api/cases'));
    await raiseForStatus(res);
    return (await res.json()).cases;
  }

  async bundle(caseId: string, session: Session): Promise<CaseBundle> {
    const res = await fetch(this.url(`/api/cases/${encodeURIComponent(caseId)}`, {
      reviewer: session.reviewerId,
      token: session.token,
    }));
    await raiseForStatus(res);
    return res.json();
  }

  sliceUrl(caseId: string, req: SliceRequest, session: Session): string {
    const params: Record<string, string> = {
      seq: req.seq,
      z: String(req.z),
      reviewer: session.reviewerId,
      token: session.token,
    };
    if (req.overlays.length) params.overlays = req.overlays.join(',');
    if (req.window) params.window = `${req.window[0]},${req.window[1]}`;
    return this.url(`/api/cases/${encodeURIComponent(caseId)}/slice`, params);
  }

  async fetchSlice(caseId: string, req: SliceRequest, session: Session): Promise<SliceResponse> {
    const res = await fetch(this.sliceUrl(caseId, req, session));
    await raiseForStatus(res);
    return {
      bytes: await res.arrayBuffer(),
      pixelSpacingMm: parsePixelSpacing(res.headers.get('X-Pixel-Spacing-MM')),
      sliceCount: Number(res.headers.get('X-Slice-Count') ?? '0'),
    };
  }

  async submit(doc: AssessmentDocument, session: Session): Promise<{ stored: boolean; versions_kept: number }> {
    const res = await fetch(this.url('/api/assessments', {
      reviewer: session.reviewerId,
      token: session.token,
    }), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(doc),
    });
    await raiseForStatus(res);
    return res.json();
  }

  async priorAssessment(caseId: string, session: Session): Promise<AssessmentDocument | null> {
    const res = await fetch(this.url(
      `/api/assessments/${encodeURIComponent(session.reviewerId)}/${encodeURIComponent(caseId)}`,
      { token: session.token },
    ));
    if (res.status === 404) return null;
    await raiseForStatus(res);
    return res.json();
  }
}
