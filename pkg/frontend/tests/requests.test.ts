import { describe, expect, it, vi } from 'vitest';

import { ApiClient } from '../src/api';
import { Debouncer, RequestGate } from '../src/requests';
import { WhatIfPanel } from '../src/whatifPanel';
import { loadFixture, makePanelDom } from './helpers';

describe('request gate', () => {
  it('applies only the newest ticket', () => {
    const gate = new RequestGate();
    const first = gate.begin();
    const second = gate.begin();
    expect(gate.shouldApply(second)).toBe(true);
    expect(gate.shouldApply(first)).toBe(false);
  });
});

describe('debouncer', () => {
  it('collapses rapid calls into the trailing one', async () => {
    vi.useFakeTimers();
    const debouncer = new Debouncer(100);
    const calls: number[] = [];
    debouncer.run('k', () => calls.push(1));
    debouncer.run('k', () => calls.push(2));
    debouncer.run('k', () => calls.push(3));
    await vi.advanceTimersByTimeAsync(150);
    expect(calls).toEqual([3]);
    vi.useRealTimers();
  });
});

describe('response supersession', () => {
  it('never renders an older response after a newer one', async () => {
    // The first (slow) request resolves with the 6-analog payload AFTER the
    // second (fast) request already rendered the 3-analog payload; the stale
    // render must be discarded.
    const slowDefault = loadFixture('whatif_default.json');
    const fastTightened = loadFixture('whatif_mincps80.json');
    const recommendPayload = loadFixture('recommend_default.json');

    let release: (() => void) | null = null;
    const blocked = new Promise<void>((resolve) => {
      release = resolve;
    });

    const fetchImpl = async (url: string, init?: RequestInit): Promise<Response> => {
      const body = init?.body ? JSON.parse(String(init.body)) : {};
      if (url.includes('/v1/recommend')) {
        return new Response(JSON.stringify(recommendPayload), { status: 200 });
      }
      if (body?.spec?.min_cps === 80) {
        return new Response(JSON.stringify(fastTightened), { status: 200 });
      }
      await blocked; // hold the slider-at-40 response until after the newer one
      return new Response(JSON.stringify(slowDefault), { status: 200 });
    };

    const dom = makePanelDom();
    const panel = new WhatIfPanel(new ApiClient('', fetchImpl), dom, 0);
    panel.state.twinId = 'case-1';

    const stale = panel.refresh(); // ticket 1, blocked
    panel.setSlider('min_cps', 80);
    await panel.refresh(); // ticket 2, resolves immediately
    expect(dom.analogList.querySelectorAll('.analog-card')).toHaveLength(3);

    release!();
    await stale; // ticket 1 lands late and must be discarded
    expect(dom.analogList.querySelectorAll('.analog-card')).toHaveLength(3);
    expect(dom.analogList.textContent).toContain('n=3');
  });
});
