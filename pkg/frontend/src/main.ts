/**
 * What-if console: enter a patient state, request the policy's prescribed
 * action, then steer the action sliders while predicted glucose and risk
 * update live from the service.
 *
 * Layout: connection bar, patient form, what-if panel with readouts and a
 * risk gauge. All controls are generated from /metadata at load time.
 */

import {
  ApiError,
  FeatureValues,
  Metadata,
  RecommendResponse,
  Scores,
  Transport,
  httpTransport,
} from './api.js';
import {
  actionControls,
  readValues,
  renderControls,
  setControlValue,
  showFieldErrors,
  stateControls,
  validateState,
} from './form.js';
import { formatScores } from './format.js';
import { ReadoutView, WhatIfPanel } from './whatif.js';

const DEFAULT_BASE_URL = 'http://127.0.0.1:8100';

// ------------------------------------------------------------------ Gauge

/**
 * Semicircular risk gauge. The needle sweeps with log-compressed risk and
 * the two halves are annotated with the domain asymmetry: risk climbs far
 * more steeply toward low glucose than toward high.
 */
function gaugeMarkup(risk: number): string {
  const capped = Math.min(Math.max(risk, 0), 100);
  const frac = Math.log1p(capped) / Math.log1p(100);
  const angle = Math.PI * (1 - frac);
  const x = 100 + 80 * Math.cos(angle);
  const y = 90 - 80 * Math.sin(angle);
  return `
    <svg viewBox="0 0 200 100" class="gauge">
      <path d="M 20 90 A 80 80 0 0 1 180 90" fill="none"
            stroke="#ccc" stroke-width="10" />
      <line x1="100" y1="90" x2="${x.toFixed(1)}" y2="${y.toFixed(1)}"
            stroke="#b33" stroke-width="3" />
      <text x="30" y="70" class="gauge-note">low BG: steep</text>
      <text x="128" y="70" class="gauge-note">high BG: gentle</text>
    </svg>`;
}

// ------------------------------------------------------------------ View

class DomReadoutView implements ReadoutView {
  constructor(private readonly panelEl: HTMLElement,
              private readonly glucoseUnit: string | null,
              private readonly onRetry: () => void) {}

  showReadouts(scores: Scores, action: FeatureValues): void {
    const strings = formatScores(scores, this.glucoseUnit);
    this.set('glucose', strings.glucose);
    this.set('risk', strings.risk);
    this.set('reward', strings.reward);
    const gauge = this.panelEl.querySelector('.gauge-holder');
    if (gauge) {
      gauge.innerHTML = gaugeMarkup(scores.risk);
    }
    this.clearStale();
  }

  markStale(message: string): void {
    const note = this.panelEl.querySelector<HTMLElement>('.stale-note');
    if (note) {
      note.hidden = false;
      const text = note.querySelector<HTMLElement>('.stale-text');
      if (text) {
        text.textContent = `readouts out of date: ${message}`;
      }
    }
  }

  private clearStale(): void {
    const note = this.panelEl.querySelector<HTMLElement>('.stale-note');
    if (note) {
      note.hidden = true;
    }
  }

  private set(name: string, value: string): void {
    const el = this.panelEl.querySelector<HTMLElement>(`[data-readout="${name}"]`);
    if (el) {
      el.textContent = value;
    }
  }

  wireRetry(): void {
    this.panelEl.querySelector('.retry-whatif')
      ?.addEventListener('click', () => this.onRetry());
  }
}

// ------------------------------------------------------------------ Panel

function buildPanel(doc: Document, meta: Metadata, transport: Transport,
                    state: FeatureValues, rec: RecommendResponse,
                    host: HTMLElement): void {
  host.innerHTML = `
    <h2>What-if exploration</h2>
    <div class="readouts">
      <div>predicted glucose: <strong data-readout="glucose"></strong></div>
      <div>risk: <strong data-readout="risk"></strong></div>
      <div>reward: <strong data-readout="reward"></strong></div>
    </div>
    <div class="gauge-holder"></div>
    <div class="stale-note" hidden>
      <span class="stale-text"></span>
      <button type="button" class="retry-whatif">retry</button>
    </div>
    <div class="panel-controls"></div>
    <button type="button" class="reset-rec">reset to recommendation</button>`;

  const controlsHost = host.querySelector<HTMLElement>('.panel-controls')!;
  const controls = renderControls(doc, actionControls(meta), rec.action);
  controlsHost.appendChild(controls);

  let panel: WhatIfPanel;
  const view = new DomReadoutView(host, meta.outcome.unit, () => panel.retry());
  panel = new WhatIfPanel(transport, view, state);
  view.wireRetry();
  panel.populate(rec);

  controls.addEventListener('input', () => {
    panel.setValues(readValues(controls));
  });
  controls.addEventListener('change', () => {
    panel.setValues(readValues(controls));
  });
  host.querySelector('.reset-rec')?.addEventListener('click', () => {
    controls.querySelectorAll<HTMLInputElement | HTMLSelectElement>(
      '[data-feature]').forEach((input) => {
      const name = input.dataset.feature as string;
      if (name in rec.action) {
        setControlValue(input, rec.action[name]);
      }
    });
    panel.setValues({ ...rec.action });
  });
}

// ------------------------------------------------------------------ Form

function buildForm(doc: Document, meta: Metadata, transport: Transport,
                   formHost: HTMLElement, panelHost: HTMLElement): void {
  formHost.innerHTML = '<h2>Patient</h2>';
  const controls = renderControls(doc, stateControls(meta));
  formHost.appendChild(controls);

  const submit = doc.createElement('button');
  submit.type = 'button';
  submit.textContent = 'recommend';
  submit.disabled = true;
  formHost.appendChild(submit);

  const refresh = (): boolean => {
    const errors = validateState(meta, readValues(controls));
    showFieldErrors(controls, errors);
    submit.disabled = errors.length > 0;
    return errors.length === 0;
  };
  controls.addEventListener('input', refresh);
  controls.addEventListener('change', refresh);
  refresh();

  submit.addEventListener('click', async () => {
    if (!refresh()) {
      return; // client validation failed; nothing leaves the browser
    }
    const state = readValues(controls);
    try {
      const rec = await transport.recommend(state, 'deterministic');
      buildPanel(doc, meta, transport, state, rec, panelHost);
    } catch (err) {
      if (err instanceof ApiError && err.detail.length > 0) {
        showFieldErrors(controls, err.detail);
      } else {
        panelHost.textContent =
          `recommendation failed: ${err instanceof Error ? err.message : err}`;
      }
    }
  });
}

// ------------------------------------------------------------------ Boot

async function connect(doc: Document, baseUrl: string): Promise<void> {
  const banner = doc.querySelector<HTMLElement>('#banner')!;
  const formHost = doc.querySelector<HTMLElement>('#patient-form')!;
  const panelHost = doc.querySelector<HTMLElement>('#whatif-panel')!;
  const transport = httpTransport(baseUrl);
  try {
    const meta = await transport.metadata();
    banner.hidden = true;
    buildForm(doc, meta, transport, formHost, panelHost);
  } catch (err) {
    // blocking banner: no form until the service answers
    formHost.innerHTML = '';
    panelHost.innerHTML = '';
    banner.hidden = false;
    banner.querySelector<HTMLElement>('.banner-text')!.textContent =
      `service unreachable at ${baseUrl}: ${err instanceof Error ? err.message : err}`;
  }
}

function boot(doc: Document): void {
  const urlInput = doc.querySelector<HTMLInputElement>('#base-url')!;
  urlInput.value = DEFAULT_BASE_URL;
  const go = (): void => void connect(doc, urlInput.value);
  doc.querySelector('#connect')?.addEventListener('click', go);
  doc.querySelector('#banner .retry-connect')?.addEventListener('click', go);
  go();
}

if (typeof document !== 'undefined') {
  boot(document);
}
