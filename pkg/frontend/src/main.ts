/** Explorer bootstrap. Configuration is a single base URL, taken from the
 * `data-api-base` attribute on <body> (default: same origin). */
import { ApiClient } from './api';
import { CohortBrowser } from './cohortBrowser';
import { WhatIfPanel } from './whatifPanel';

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node;
}

export function bootstrap(): { panel: WhatIfPanel; browser: CohortBrowser } {
  const baseUrl = document.body.dataset.apiBase ?? '';
  const api = new ApiClient(baseUrl);

  const panel = new WhatIfPanel(api, {
    analogList: el('analog-list'),
    summaryPane: el('summary-pane'),
    recommendationList: el('recommendation-list'),
    statusLine: el('whatif-status'),
  });
  const browser = new CohortBrowser(api, {
    table: el('cohort-table'),
    detailPane: el('twin-detail'),
    statusLine: el('browser-status'),
  });

  const twinSelect = el('twin-select') as HTMLSelectElement;
  const cpsSlider = el('min-cps') as HTMLInputElement;
  const cpsValue = el('min-cps-value');
  const tmbSlider = el('max-tmb') as HTMLInputElement;
  const tmbValue = el('max-tmb-value');
  const her2Toggle = el('her2-toggle') as HTMLInputElement;
  const regionInput = el('region') as HTMLInputElement;

  void browser.load().then(async () => {
    const twins = browser.visibleTwins();
    for (const twin of twins) {
      const option = document.createElement('option');
      option.value = twin.id;
      option.textContent = `${twin.id} (${twin.diagnosis})`;
      twinSelect.appendChild(option);
    }
    if (twins.length > 0 && twins[0]) {
      twinSelect.value = twins[0].id;
      await panel.selectTwin(twins[0].id, {
        region: regionInput.value || undefined,
        allow_off_label: true,
      });
    }
  });

  twinSelect.addEventListener('change', () => {
    void panel.selectTwin(twinSelect.value, {
      region: regionInput.value || undefined,
      allow_off_label: true,
    });
  });
  cpsSlider.addEventListener('input', () => {
    cpsValue.textContent = cpsSlider.value;
    panel.setSlider('min_cps', Number(cpsSlider.value));
  });
  tmbSlider.addEventListener('input', () => {
    tmbValue.textContent = tmbSlider.value;
    panel.setSlider('max_tmb_exclusive', Number(tmbSlider.value));
  });
  her2Toggle.addEventListener('change', () => {
    panel.setMarkerOverride('HER2', her2Toggle.checked ? null : 'negative');
  });

  return { panel, browser };
}

if (typeof document !== 'undefined' && document.readyState !== 'loading') {
  if (document.getElementById('twin-select')) {
    bootstrap();
  }
} else if (typeof document !== 'undefined') {
  document.addEventListener('DOMContentLoaded', () => {
    if (document.getElementById('twin-select')) {
      bootstrap();
    }
  });
}
