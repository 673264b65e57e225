import { beforeEach, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api';
import { WhatIfPanel } from '../src/whatifPanel';
import {
  fixtureFetch,
  harvestNumericTokens,
  makePanelDom,
  numericTokensInText,
  type PanelDom,
  type ServedLog,
} from './helpers';

function makePanel(): { panel: WhatIfPanel; dom: PanelDom; log: ServedLog } {
  const log: ServedLog = { served: [], requests: [] };
  const api = new ApiClient('', fixtureFetch(log));
  const dom = makePanelDom();
  const panel = new WhatIfPanel(api, dom, 0);
  return { panel, dom, log };
}

describe('what-if panel', () => {
  let ctx: ReturnType<typeof makePanel>;

  beforeEach(() => {
    ctx = makePanel();
  });

  it('renders six analog cards and the recommendation list for the default profile', async () => {
    await ctx.panel.selectTwin('case-1', { region: 'Bavaria', allow_off_label: true, as_of: '2024-08-15' });
    const cards = ctx.dom.analogList.querySelectorAll('.analog-card');
    expect(cards).toHaveLength(6);
    expect(ctx.dom.analogList.textContent).toContain('analog cases (n=6)');
    const recs = ctx.dom.recommendationList.querySelectorAll('.recommendation-card');
    expect(recs).toHaveLength(11);
    expect(ctx.dom.recommendationList.textContent).toContain('Trastuzumab deruxtecan');
  });

  it('toggling HER2 positive -> negative removes the trastuzumab-deruxtecan card', async () => {
    await ctx.panel.selectTwin('case-1', { region: 'Bavaria', allow_off_label: true, as_of: '2024-08-15' });
    expect(ctx.dom.recommendationList.textContent).toContain('Trastuzumab deruxtecan');

    ctx.panel.setMarkerOverride('HER2', 'negative');
    await ctx.panel.refresh();

    expect(ctx.dom.recommendationList.textContent).not.toContain('Trastuzumab deruxtecan');
    expect(ctx.dom.recommendationList.querySelectorAll('.recommendation-card')).toHaveLength(9);
  });

  it('raising min CPS 40 -> 80 shrinks the analog cohort from 6 to 3', async () => {
    await ctx.panel.selectTwin('case-1', { region: 'Bavaria', allow_off_label: true });
    expect(ctx.dom.analogList.querySelectorAll('.analog-card')).toHaveLength(6);

    ctx.panel.setSlider('min_cps', 80);
    await ctx.panel.refresh();

    const cards = [...ctx.dom.analogList.querySelectorAll('.analog-card')];
    expect(cards).toHaveLength(3);
    const ids = cards.map((card) => (card as HTMLElement).dataset.twinId).sort();
    expect(ids).toEqual(['case-4', 'case-5', 'case-7']);
    expect(ctx.dom.analogList.textContent).toContain('analog cases (n=3)');
  });

  it('an out-of-profile override renders the empty state with the failing rules', async () => {
    await ctx.panel.selectTwin('case-1');
    ctx.panel.setBiomarkerOverride('mmr', 'dMMR');
    await ctx.panel.refresh();
    const empty = ctx.dom.analogList.querySelector('.empty-state');
    expect(empty).not.toBeNull();
    expect(empty!.textContent).toContain('mmr');
  });

  it('never renders a numeric value that did not come from a service response', async () => {
    await ctx.panel.selectTwin('case-1', { region: 'Bavaria', allow_off_label: true, as_of: '2024-08-15' });
    ctx.panel.setSlider('min_cps', 80);
    await ctx.panel.refresh();

    const allowed = new Set<string>();
    for (const payload of ctx.log.served) {
      harvestNumericTokens(payload, allowed);
    }
    const panes = [ctx.dom.analogList, ctx.dom.summaryPane, ctx.dom.recommendationList];
    const rendered = panes.flatMap((pane) => numericTokensInText(pane.textContent ?? ''));
    expect(rendered.length).toBeGreaterThan(0);
    for (const token of rendered) {
      expect(allowed, `rendered number ${token} must originate from a service response`).toContain(token);
    }
  });

  it('renders censored durations with explicit bound semantics', async () => {
    await ctx.panel.selectTwin('case-1');
    const text = ctx.dom.analogList.textContent ?? '';
    expect(text).toContain('≥49'); // case-2 PFS ">49 (ongoing)"
  });

  it('surfaces service errors inline with a retry control', async () => {
    const dom = makePanelDom();
    const api = new ApiClient('', async () =>
      new Response(JSON.stringify({ status: 500, code: 'internal', message: 'boom' }), { status: 500 }),
    );
    const panel = new WhatIfPanel(api, dom, 0);
    await panel.selectTwin('case-1');
    expect(dom.statusLine.textContent).toContain('service error');
    expect(dom.statusLine.querySelector('button.retry')).not.toBeNull();
  });
});
