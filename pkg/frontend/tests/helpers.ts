import { readFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';

import type { FetchLike } from '../src/api';

const fixturesDir = join(dirname(fileURLToPath(import.meta.url)), 'fixtures');

export function loadFixture<T = unknown>(name: string): T {
  return JSON.parse(readFileSync(join(fixturesDir, name), 'utf-8')) as T;
}

export interface ServedLog {
  served: unknown[];
  requests: { url: string; body: unknown }[];
}

/** Fake service transport routing requests onto the captured fixture
 * responses; records every payload it serves so tests can assert that
 * rendered values trace back to the wire. */
export function fixtureFetch(log: ServedLog): FetchLike {
  return async (url: string, init?: RequestInit) => {
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    log.requests.push({ url, body });

    const respond = (payload: unknown): Response => {
      log.served.push(payload);
      return new Response(JSON.stringify(payload), {
        status: 200,
        headers: { 'content-type': 'application/json' },
      });
    };

    if (url.endsWith('/v1/twins') && !init?.method) {
      return respond(loadFixture('twins.json'));
    }
    if (url.includes('/v1/whatif')) {
      if (body?.overrides?.mmr === 'dMMR') {
        return respond(loadFixture('whatif_dmmr.json'));
      }
      if (body?.spec?.min_cps === 80) {
        return respond(loadFixture('whatif_mincps80.json'));
      }
      return respond(loadFixture('whatif_default.json'));
    }
    if (url.includes('/v1/recommend')) {
      if (body?.overrides?.others?.HER2 === 'negative') {
        return respond(loadFixture('recommend_her2_negative.json'));
      }
      return respond(loadFixture('recommend_default.json'));
    }
    if (url.includes('/v1/kb')) {
      return respond(loadFixture('kb.json'));
    }
    return new Response(JSON.stringify({ status: 404, code: 'not_found', message: url }), { status: 404 });
  };
}

const NUMBER_TOKEN = /\d+(?:\.\d+)?/g;

/** Every numeric token present anywhere in a JSON tree (number leaves and
 * digit substrings inside string leaves). */
export function harvestNumericTokens(value: unknown, out = new Set<string>()): Set<string> {
  if (typeof value === 'number') {
    out.add(String(value));
    for (const token of String(value).match(NUMBER_TOKEN) ?? []) {
      out.add(token);
    }
  } else if (typeof value === 'string') {
    for (const token of value.match(NUMBER_TOKEN) ?? []) {
      out.add(token);
    }
  } else if (Array.isArray(value)) {
    for (const item of value) {
      harvestNumericTokens(item, out);
    }
  } else if (value && typeof value === 'object') {
    for (const item of Object.values(value)) {
      harvestNumericTokens(item, out);
    }
  }
  return out;
}

export function numericTokensInText(text: string): string[] {
  return text.match(NUMBER_TOKEN) ?? [];
}

export interface PanelDom {
  analogList: HTMLElement;
  summaryPane: HTMLElement;
  recommendationList: HTMLElement;
  statusLine: HTMLElement;
}

export function makePanelDom(): PanelDom {
  const make = (id: string): HTMLElement => {
    const node = document.createElement('div');
    node.id = id;
    document.body.appendChild(node);
    return node;
  };
  document.body.replaceChildren();
  return {
    analogList: make('analog-list'),
    summaryPane: make('summary-pane'),
    recommendationList: make('recommendation-list'),
    statusLine: make('whatif-status'),
  };
}

export function makeBrowserDom() {
  const make = (id: string): HTMLElement => {
    const node = document.createElement('div');
    node.id = id;
    document.body.appendChild(node);
    return node;
  };
  document.body.replaceChildren();
  return {
    table: make('cohort-table'),
    detailPane: make('twin-detail'),
    statusLine: make('browser-status'),
  };
}
