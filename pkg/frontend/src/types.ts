/** Wire types for the /v1 service API. Field names mirror the canonical
 * record serialization, including the space- and slash-bearing keys. */

export interface DurationJson {
  months: number | null;
  censored: boolean;
  raw: string;
}

export interface PdL1Json {
  cps: number | null;
  tps: number | null;
  ic: number | null;
  qualitative: string | null;
  raw: string;
}

export interface TmbJson {
  value: number | null;
  class: string | null;
  raw: string;
}

export interface MmrJson {
  status: string | null;
  fraction: number | null;
  raw: string;
}

export interface BiomarkersJson {
  'pd-l1': PdL1Json | null;
  'tmb/mb': TmbJson | null;
  'msi/mss': MmrJson | null;
  others: { name: string; detail: string }[];
}

export interface ResponseJson {
  categories: string[];
  raw: string;
}

export interface TwinJson {
  id: string;
  source: 'institutional' | 'literature';
  source_ref: string;
  n: number | null;
  age: { low: number | null; high: number | null; raw: string };
  gender: string | null;
  race: string | null;
  diagnosis: string;
  biomarkers: BiomarkersJson;
  'previous treatments': { line: number | null; description: string }[];
  'study treatment': string;
  'treatment line': number | null;
  'study treatment response': {
    'treatment response': ResponseJson;
    'adverse effects': string | null;
  };
  PFS: DurationJson;
  OS: DurationJson;
  similarity: string[];
  adjudication: string;
}

export interface CohortSummaryJson {
  n: number;
  median_pfs: number | null;
  pfs_range: [number, number] | null;
  median_os: number | null;
  os_range: [number, number] | null;
  median_line: number | null;
  line_range: [number, number] | null;
  mean_line: number | null;
  response_counts: Record<string, number>;
  trajectory_counts: Record<string, number>;
  vital_status_counts: Record<string, number>;
}

export interface MatchEvaluationJson {
  twin_id: string;
  passed: boolean;
  per_rule: Record<string, 'pass' | 'fail' | 'unknown'>;
  reasons: string[];
}

export interface WhatIfResponse {
  twin: TwinJson;
  evaluation: MatchEvaluationJson;
  analogs: TwinJson[];
  summary: CohortSummaryJson;
}

export interface RecommendationJson {
  biomarker: string;
  action_kind: 'treatment' | 'confirmatory_test' | 'trial_referral' | 'monitoring';
  action: string;
  evidence_level: string;
  expected_response: string;
  reference: string;
  trial_id: string | null;
  region: string | null;
  rationale: string;
  gating_notes: string[];
}

export interface RecommendResponse {
  twin_id: string;
  recommendations: RecommendationJson[];
}

export interface TwinListResponse {
  count: number;
  twins: TwinJson[];
}

export interface EligibilitySliders {
  min_cps: number;
  max_tmb_exclusive: number;
  required_mmr: 'pMMR' | 'dMMR';
  similarity: string[];
}

/** Partial biomarker/treatment overrides for the what-if request. */
export interface Overrides {
  cps?: number | null;
  tmb?: number | null;
  mmr?: string | null;
  others?: Record<string, string | null>;
}
