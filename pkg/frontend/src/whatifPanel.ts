/** What-if panel controller: biomarker overrides and eligibility sliders on
 * the left, analog cohort / outcome summary / recommendation panes on the
 * right. Every number in the result panes is lifted from a service response;
 * the panel itself computes nothing clinical. */
import { ApiClient } from './api';
import { formatDuration, formatNumber, formatRange } from './format';
import { Debouncer, RequestGate } from './requests';
import type {
  Overrides,
  RecommendResponse,
  TwinJson,
  WhatIfResponse,
} from './types';

export interface WhatIfView {
  analogList: HTMLElement;
  summaryPane: HTMLElement;
  recommendationList: HTMLElement;
  statusLine: HTMLElement;
}

export interface PanelState {
  twinId: string | null;
  overrides: Overrides;
  sliders: { min_cps: number; max_tmb_exclusive: number; required_mmr: 'pMMR' | 'dMMR' };
  context: { region?: string; allow_off_label?: boolean; as_of?: string };
}

export class WhatIfPanel {
  readonly state: PanelState = {
    twinId: null,
    overrides: {},
    sliders: { min_cps: 40, max_tmb_exclusive: 15, required_mmr: 'pMMR' },
    context: {},
  };

  private gate = new RequestGate();
  private debouncer: Debouncer;
  private lastWhatif: WhatIfResponse | null = null;
  private lastRecommend: RecommendResponse | null = null;

  constructor(
    private api: ApiClient,
    private view: WhatIfView,
    debounceMs = 150,
  ) {
    this.debouncer = new Debouncer(debounceMs);
  }

  selectTwin(id: string, context: PanelState['context'] = {}): Promise<void> {
    this.state.twinId = id;
    this.state.overrides = {};
    this.state.context = context;
    return this.refresh();
  }

  setSlider(name: 'min_cps' | 'max_tmb_exclusive', value: number): void {
    this.state.sliders[name] = value;
    this.scheduleRefresh();
  }

  setMmrToggle(value: 'pMMR' | 'dMMR'): void {
    this.state.sliders.required_mmr = value;
    this.scheduleRefresh();
  }

  setMarkerOverride(name: string, detail: string | null): void {
    this.state.overrides.others = { ...(this.state.overrides.others ?? {}), [name]: detail };
    this.scheduleRefresh();
  }

  setBiomarkerOverride(field: 'cps' | 'tmb' | 'mmr', value: number | string | null): void {
    (this.state.overrides as Record<string, unknown>)[field] = value;
    this.scheduleRefresh();
  }

  clearOverrides(): void {
    this.state.overrides = {};
    this.scheduleRefresh();
  }

  private scheduleRefresh(): void {
    this.debouncer.run('refresh', () => {
      void this.refresh();
    });
  }

  /** Issue both requests under one supersession ticket; stale responses are
   * discarded, never rendered. */
  async refresh(): Promise<void> {
    const twinId = this.state.twinId;
    if (!twinId) {
      return;
    }
    const ticket = this.gate.begin();
    this.view.statusLine.textContent = 'loading…';
    try {
      const [whatif, recommend] = await Promise.all([
        this.api.whatif(twinId, this.state.overrides, this.state.sliders),
        this.api.recommend(twinId, this.state.overrides, this.state.context),
      ]);
      if (!this.gate.shouldApply(ticket)) {
        return; // superseded by a newer interaction
      }
      this.lastWhatif = whatif;
      this.lastRecommend = recommend;
      this.render();
      this.view.statusLine.textContent = '';
    } catch (error) {
      if (!this.gate.shouldApply(ticket)) {
        return;
      }
      this.renderError(error);
    }
  }

  private renderError(error: unknown): void {
    const message = error instanceof Error ? error.message : String(error);
    this.view.statusLine.textContent = `service error: ${message}`;
    const retry = document.createElement('button');
    retry.className = 'retry';
    retry.textContent = 'retry';
    retry.addEventListener('click', () => void this.refresh());
    this.view.statusLine.appendChild(retry);
  }

  private render(): void {
    if (!this.lastWhatif || !this.lastRecommend) {
      return;
    }
    this.renderAnalogs(this.lastWhatif);
    this.renderSummary(this.lastWhatif);
    this.renderRecommendations(this.lastRecommend);
  }

  private renderAnalogs(response: WhatIfResponse): void {
    const pane = this.view.analogList;
    pane.replaceChildren();
    if (!response.evaluation.passed) {
      const note = document.createElement('p');
      note.className = 'empty-state';
      note.textContent = `no analog cohort: ${response.evaluation.reasons.join('; ') || 'profile not matched'}`;
      pane.appendChild(note);
      return;
    }
    const heading = document.createElement('h3');
    // count comes from the service summary, not from local arithmetic
    heading.textContent = `analog cases (n=${formatNumber(response.summary.n)})`;
    pane.appendChild(heading);
    for (const twin of response.analogs) {
      pane.appendChild(this.analogCard(twin));
    }
  }

  private analogCard(twin: TwinJson): HTMLElement {
    const card = document.createElement('article');
    card.className = 'analog-card';
    card.dataset.twinId = twin.id;
    const pdl1 = twin.biomarkers['pd-l1'];
    const tmb = twin.biomarkers['tmb/mb'];
    card.innerHTML = '';
    const title = document.createElement('h4');
    title.textContent = `${twin.id} · ${twin.diagnosis}`;
    const line = document.createElement('p');
    line.textContent =
      `CPS ${formatNumber(pdl1 ? pdl1.cps : null)} · TMB ${formatNumber(tmb ? tmb.value : null)} · ` +
      `${twin.biomarkers['msi/mss']?.status ?? 'n/a'}`;
    const outcome = document.createElement('p');
    outcome.textContent =
      `${twin['study treatment']} → ${twin['study treatment response']['treatment response'].raw || 'n/a'} · ` +
      `PFS ${formatDuration(twin.PFS)} · OS ${formatDuration(twin.OS)}`;
    card.append(title, line, outcome);
    return card;
  }

  private renderSummary(response: WhatIfResponse): void {
    const pane = this.view.summaryPane;
    pane.replaceChildren();
    const summary = response.summary;
    const rows: [string, string][] = [
      ['analogs', formatNumber(summary.n)],
      ['median PFS', `${formatNumber(summary.median_pfs)} (${formatRange(summary.pfs_range)})`],
      ['median OS', `${formatNumber(summary.median_os)} (${formatRange(summary.os_range)})`],
      ['median line', formatNumber(summary.median_line)],
      ['responses', Object.entries(summary.response_counts).map(([k, v]) => `${k}:${v}`).join(' ') || 'n/a'],
      ['vital status', Object.entries(summary.vital_status_counts).map(([k, v]) => `${k}:${v}`).join(' ') || 'n/a'],
    ];
    const dl = document.createElement('dl');
    for (const [label, value] of rows) {
      const dt = document.createElement('dt');
      dt.textContent = label;
      const dd = document.createElement('dd');
      dd.textContent = value;
      dl.append(dt, dd);
    }
    pane.appendChild(dl);
  }

  private renderRecommendations(response: RecommendResponse): void {
    const pane = this.view.recommendationList;
    pane.replaceChildren();
    if (response.recommendations.length === 0) {
      const note = document.createElement('p');
      note.className = 'empty-state';
      note.textContent = 'no recommendations for this profile';
      pane.appendChild(note);
      return;
    }
    for (const rec of response.recommendations) {
      const card = document.createElement('article');
      card.className = 'recommendation-card';
      card.dataset.biomarker = rec.biomarker;
      card.dataset.kind = rec.action_kind;
      const title = document.createElement('h4');
      title.textContent = `${rec.biomarker}: ${rec.action}`;
      const meta = document.createElement('p');
      meta.className = 'meta';
      meta.textContent = `${rec.action_kind.replace(/_/g, ' ')} · ${rec.evidence_level.replace(/_/g, ' ')}`;
      const rationale = document.createElement('p');
      rationale.textContent = rec.rationale;
      card.append(title, meta, rationale);
      if (rec.gating_notes.length > 0) {
        const notes = document.createElement('ul');
        notes.className = 'gating-notes';
        for (const note of rec.gating_notes) {
          const li = document.createElement('li');
          li.textContent = note;
          notes.appendChild(li);
        }
        card.appendChild(notes);
      }
      pane.appendChild(card);
    }
  }
}
