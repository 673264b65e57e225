/** Cohort browser: filterable twin table with censoring glyphs and a
 * per-twin detail view showing the treatment trajectory and provenance. */
import { ApiClient } from './api';
import { durationSortKey, formatDuration, formatNumber } from './format';
import type { TwinJson } from './types';

export interface BrowserView {
  table: HTMLElement;
  detailPane: HTMLElement;
  statusLine: HTMLElement;
}

export type SortColumn = 'id' | 'pfs' | 'os' | 'line';

export interface BrowserFilters {
  source: 'institutional' | 'literature' | null;
  diagnosis: string | null;
  mmr: string | null;
}

const COLUMNS = ['id', 'source', 'diagnosis', 'PD-L1', 'MMR', 'TMB', 'line', 'response', 'PFS', 'OS'] as const;

export class CohortBrowser {
  filters: BrowserFilters = { source: null, diagnosis: null, mmr: null };
  sortBy: SortColumn = 'id';
  sortDescending = false;
  private twins: TwinJson[] = [];
  private serviceCount = 0;

  constructor(
    private api: ApiClient,
    private view: BrowserView,
  ) {}

  async load(): Promise<void> {
    this.view.statusLine.textContent = 'loading…';
    try {
      const body = await this.api.listTwins();
      this.twins = body.twins;
      this.serviceCount = body.count;
      this.view.statusLine.textContent = '';
      this.render();
    } catch (error) {
      const message = error instanceof Error ? error.message : String(error);
      this.view.statusLine.textContent = `service error: ${message}`;
    }
  }

  setFilter<K extends keyof BrowserFilters>(key: K, value: BrowserFilters[K]): void {
    this.filters[key] = value;
    this.render();
  }

  setSort(column: SortColumn): void {
    if (this.sortBy === column) {
      this.sortDescending = !this.sortDescending;
    } else {
      this.sortBy = column;
      this.sortDescending = false;
    }
    this.render();
  }

  visibleTwins(): TwinJson[] {
    let rows = this.twins;
    if (this.filters.source) {
      rows = rows.filter((t) => t.source === this.filters.source);
    }
    if (this.filters.diagnosis) {
      const needle = this.filters.diagnosis.toLowerCase();
      rows = rows.filter((t) => t.diagnosis.toLowerCase().includes(needle));
    }
    if (this.filters.mmr) {
      rows = rows.filter((t) => (t.biomarkers['msi/mss']?.status ?? '') === this.filters.mmr);
    }
    const keyOf = (t: TwinJson): number | string => {
      switch (this.sortBy) {
        case 'pfs':
          return durationSortKey(t.PFS);
        case 'os':
          return durationSortKey(t.OS);
        case 'line':
          return t['treatment line'] ?? Number.NEGATIVE_INFINITY;
        default:
          return t.id;
      }
    };
    const sorted = [...rows].sort((a, b) => {
      const ka = keyOf(a);
      const kb = keyOf(b);
      const cmp = ka < kb ? -1 : ka > kb ? 1 : 0;
      return this.sortDescending ? -cmp : cmp;
    });
    return sorted;
  }

  render(): void {
    const pane = this.view.table;
    pane.replaceChildren();
    const rows = this.visibleTwins();
    if (this.serviceCount === 0) {
      const note = document.createElement('p');
      note.className = 'empty-state';
      note.textContent = 'no digital twins in the store yet';
      pane.appendChild(note);
      return;
    }
    const table = document.createElement('table');
    const thead = document.createElement('thead');
    const headRow = document.createElement('tr');
    for (const column of COLUMNS) {
      const th = document.createElement('th');
      th.textContent = column;
      headRow.appendChild(th);
    }
    thead.appendChild(headRow);
    const tbody = document.createElement('tbody');
    for (const twin of rows) {
      const tr = document.createElement('tr');
      tr.dataset.twinId = twin.id;
      const pdl1 = twin.biomarkers['pd-l1'];
      const cells = [
        twin.id,
        twin.source,
        twin.diagnosis,
        pdl1 ? (pdl1.cps !== null ? `CPS ${formatNumber(pdl1.cps)}` : pdl1.raw) : 'n/a',
        twin.biomarkers['msi/mss']?.status ?? 'n/a',
        formatNumber(twin.biomarkers['tmb/mb']?.value ?? null),
        formatNumber(twin['treatment line']),
        twin['study treatment response']['treatment response'].raw || 'n/a',
        formatDuration(twin.PFS),
        formatDuration(twin.OS),
      ];
      for (const value of cells) {
        const td = document.createElement('td');
        td.textContent = value;
        tr.appendChild(td);
      }
      tr.addEventListener('click', () => this.renderDetail(twin));
      tbody.appendChild(tr);
    }
    table.append(thead, tbody);
    pane.appendChild(table);
  }

  renderDetail(twin: TwinJson): void {
    const pane = this.view.detailPane;
    pane.replaceChildren();
    const title = document.createElement('h3');
    title.textContent = `${twin.id} · ${twin.diagnosis}`;
    const provenance = document.createElement('p');
    provenance.className = 'provenance';
    provenance.textContent = `source: ${twin.source} (${twin.source_ref}) · adjudication: ${twin.adjudication}`;
    pane.append(title, provenance);

    const trajectory = document.createElement('ol');
    trajectory.className = 'trajectory';
    for (const event of twin['previous treatments']) {
      const li = document.createElement('li');
      li.textContent = event.line !== null ? `line ${event.line}: ${event.description}` : event.description;
      trajectory.appendChild(li);
    }
    const current = document.createElement('li');
    current.className = 'current-line';
    const line = twin['treatment line'];
    current.textContent =
      `${line !== null ? `line ${line}: ` : ''}${twin['study treatment']} → ` +
      `${twin['study treatment response']['treatment response'].raw || 'n/a'}`;
    trajectory.appendChild(current);
    pane.appendChild(trajectory);

    const outcomes = document.createElement('p');
    outcomes.textContent = `PFS ${formatDuration(twin.PFS)} mo · OS ${formatDuration(twin.OS)} mo`;
    pane.appendChild(outcomes);
  }
}
