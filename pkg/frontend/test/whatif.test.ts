/**
 * Freshness discipline of the what-if panel: readouts must always belong
 * to the slider values currently shown, under debounce, out-of-order
 * completions, and network failures.
 */

import { afterEach, beforeEach, describe, expect, it, vi } from 'vitest';

import {
  FeatureValues,
  Metadata,
  RecommendResponse,
  Scores,
  Transport,
  WhatIfRequest,
} from '../src/api.js';
import { formatScores } from '../src/format.js';
import { DEBOUNCE_MS, ReadoutView, WhatIfPanel } from '../src/whatif.js';

import metaFixture from './fixtures/metadata.json';
import recFixture from './fixtures/recommend.json';
import whatifFixture from './fixtures/whatif.json';
import demoState from './fixtures/demo_state.json';

const meta = metaFixture as unknown as Metadata;
const rec = recFixture as unknown as RecommendResponse;
const state = demoState as unknown as FeatureValues;

// deterministic scores so a response can be traced back to its action
function scoresFor(action: FeatureValues): Scores {
  let acc = 0;
  for (const name of Object.keys(action).sort()) {
    acc = (acc + action[name]) * 1.0001;
  }
  return { predicted_glucose: acc, risk: acc * acc, reward: -(acc * acc) };
}

function actionKey(a: FeatureValues): string {
  return JSON.stringify(Object.keys(a).sort().map((k) => [k, a[k]]));
}

class ScriptedTransport implements Transport {
  pending: { action: FeatureValues;
             resolve: (s: Scores) => void;
             reject: (e: Error) => void }[] = [];
  calls = 0;

  metadata(): Promise<Metadata> {
    return Promise.resolve(meta);
  }

  recommend(): Promise<RecommendResponse> {
    return Promise.resolve(rec);
  }

  whatif(req: WhatIfRequest): Promise<Scores> {
    this.calls += 1;
    const action = { ...req.action };
    return new Promise((resolve, reject) => {
      this.pending.push({ action, resolve, reject });
    });
  }

  settle(i: number): void {
    const [p] = this.pending.splice(i, 1);
    p.resolve(scoresFor(p.action));
  }

  fail(i: number): void {
    const [p] = this.pending.splice(i, 1);
    p.reject(new Error('connection reset'));
  }
}

interface Rendered {
  scores: Scores;
  action: FeatureValues;
  truthAtRender: FeatureValues;
}

class RecordingView implements ReadoutView {
  rendered: Rendered[] = [];
  stale: string[] = [];

  constructor(private readonly truth: () => FeatureValues) {}

  showReadouts(scores: Scores, action: FeatureValues): void {
    this.rendered.push({ scores, action, truthAtRender: this.truth() });
  }

  markStale(message: string): void {
    this.stale.push(message);
  }

  last(): Rendered {
    return this.rendered[this.rendered.length - 1];
  }
}

// microtask drain: lets awaited responses and finally blocks run
async function flush(): Promise<void> {
  for (let i = 0; i < 8; i += 1) {
    await Promise.resolve();
  }
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

beforeEach(() => {
  vi.useFakeTimers();
});

afterEach(() => {
  vi.useRealTimers();
});

describe('debounce', () => {
  it('collapses a burst of slider moves into one trailing request', async () => {
    const transport = new ScriptedTransport();
    let latest: FeatureValues = { ...rec.action };
    const view = new RecordingView(() => latest);
    const panel = new WhatIfPanel(transport, view, state);
    panel.populate(rec);

    for (let i = 0; i < 10; i += 1) {
      latest = { ...latest, DRXTKCAL: 1000 + i };
      panel.setValues(latest);
      await vi.advanceTimersByTimeAsync(DEBOUNCE_MS - 10);
    }
    expect(transport.calls).toBe(0);

    await vi.advanceTimersByTimeAsync(DEBOUNCE_MS);
    expect(transport.calls).toBe(1);
    expect(transport.pending[0].action.DRXTKCAL).toBe(1009);

    transport.settle(0);
    await flush();
    expect(view.last().action.DRXTKCAL).toBe(1009);
  });

  it('two separated moves produce two requests', async () => {
    const transport = new ScriptedTransport();
    const view = new RecordingView(() => ({}));
    const panel = new WhatIfPanel(transport, view, state);
    panel.populate(rec);

    panel.setValue('ALQ', 1);
    await vi.advanceTimersByTimeAsync(DEBOUNCE_MS + 10);
    transport.settle(0);
    await flush();
    panel.setValue('ALQ', 2);
    await vi.advanceTimersByTimeAsync(DEBOUNCE_MS + 10);
    expect(transport.calls).toBe(2);
  });
});

describe('freshness under a drag storm', () => {
  it('never renders readouts for non-current slider values', async () => {
    const rng = mulberry32(20240917);
    const transport = new ScriptedTransport();
    let latest: FeatureValues = { ...rec.action };
    const view = new RecordingView(() => latest);
    const panel = new WhatIfPanel(transport, view, state);
    panel.populate(rec);

    const movable = meta.features.filter((f) => f.role === 'action');
    for (let event = 0; event < 100; event += 1) {
      const roll = rng();
      if (roll < 0.55) {
        // drag one slider or flip one toggle
        const f = movable[Math.floor(rng() * movable.length)];
        const value = f.kind === 'binary'
          ? Math.round(rng())
          : f.range![0] + rng() * (f.range![1] - f.range![0]);
        latest = { ...latest, [f.name]: value };
        panel.setValue(f.name, value);
      } else if (roll < 0.8) {
        await vi.advanceTimersByTimeAsync(Math.floor(rng() * 240));
      } else if (transport.pending.length > 0) {
        // adversarial network: settle or fail an arbitrary pending request
        const i = Math.floor(rng() * transport.pending.length);
        if (rng() < 0.15) {
          transport.fail(i);
        } else {
          transport.settle(i);
        }
        await flush();
      }
    }
    await vi.advanceTimersByTimeAsync(DEBOUNCE_MS * 3);
    while (transport.pending.length > 0) {
      transport.settle(Math.floor(rng() * transport.pending.length));
      await flush();
    }
    await vi.advanceTimersByTimeAsync(DEBOUNCE_MS * 3);
    while (transport.pending.length > 0) {
      transport.settle(0);
      await flush();
    }

    expect(view.rendered.length).toBeGreaterThan(1);
    view.rendered.forEach((r, i) => {
      // the readout belongs to the values that were current when it rendered
      expect(actionKey(r.action)).toBe(actionKey(r.truthAtRender));
      if (i > 0) {
        // all post-populate renders came from the scripted network
        expect(r.scores).toEqual(scoresFor(r.action));
      }
    });
    // and the panel ends on the final slider values
    expect(actionKey(view.last().action)).toBe(actionKey(latest));
  });
});

describe('round trip to the recommendation', () => {
  it('reproduces the original readouts byte-identically', async () => {
    const recKey = actionKey(rec.action);
    const transport: Transport = {
      metadata: () => Promise.resolve(meta),
      recommend: () => Promise.resolve(rec),
      whatif: ({ action }) =>
        Promise.resolve(actionKey(action) === recKey
          ? ({ ...whatifFixture } as Scores)
          : { predicted_glucose: 50.0, risk: 123.4, reward: -123.4 }),
    };
    let latest: FeatureValues = { ...rec.action };
    const view = new RecordingView(() => latest);
    const panel = new WhatIfPanel(transport, view, state);
    panel.populate(rec);

    const unit = meta.outcome.unit;
    const original = formatScores(view.last().scores, unit);

    latest = { ...latest, DRXTSUGR: 12.5 };
    panel.setValue('DRXTSUGR', 12.5);
    await vi.advanceTimersByTimeAsync(DEBOUNCE_MS + 10);
    await flush();
    const elsewhere = formatScores(view.last().scores, unit);
    expect(elsewhere).not.toEqual(original);

    latest = { ...rec.action };
    panel.setValues({ ...rec.action });
    await vi.advanceTimersByTimeAsync(DEBOUNCE_MS + 10);
    await flush();

    const back = formatScores(view.last().scores, unit);
    expect(back.glucose).toBe(original.glucose);
    expect(back.risk).toBe(original.risk);
    expect(back.reward).toBe(original.reward);
    // the recorded service responses behind this agree exactly too
    expect(whatifFixture.predicted_glucose).toBe(rec.predicted_glucose);
    expect(whatifFixture.risk).toBe(rec.risk);
    expect(whatifFixture.reward).toBe(rec.reward);
  });
});

describe('failure handling', () => {
  it('marks readouts stale on network error and recovers on retry', async () => {
    const transport = new ScriptedTransport();
    let latest: FeatureValues = { ...rec.action };
    const view = new RecordingView(() => latest);
    const panel = new WhatIfPanel(transport, view, state);
    panel.populate(rec);

    latest = { ...latest, SMD: 3 };
    panel.setValue('SMD', 3);
    await vi.advanceTimersByTimeAsync(DEBOUNCE_MS + 10);
    transport.fail(0);
    await flush();
    expect(view.stale).toEqual(['connection reset']);
    expect(view.last().action.SMD).not.toBe(3);

    panel.retry();
    await flush();
    expect(transport.pending.length).toBe(1);
    transport.settle(0);
    await flush();
    expect(view.last().action.SMD).toBe(3);
    expect(view.last().scores).toEqual(scoresFor(latest));
  });
});
