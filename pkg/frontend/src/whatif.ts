/**
 * What-if exploration with strict freshness: readouts on screen always
 * correspond to the slider values on screen.
 *
 * Every slider change bumps a monotonic sequence number. A trailing-edge
 * debounce (150 ms) collapses drags into one request, and a response only
 * renders if its sequence number still matches the newest change; anything
 * older is discarded, so out-of-order network completions can never paint
 * stale numbers. One what-if request is in flight at a time.
 */

import {
  FeatureValues,
  RecommendResponse,
  Scores,
  Transport,
} from './api.js';

export const DEBOUNCE_MS = 150;

/** Rendering surface the panel drives; DOM in the app, a recorder in tests. */
export interface ReadoutView {
  /** Fresh scores for exactly the given slider values. */
  showReadouts(scores: Scores, action: FeatureValues): void;
  /** Readouts no longer trust the screen; offer a retry. */
  markStale(message: string): void;
}

export class WhatIfPanel {
  private seq = 0;
  private inFlight = false;
  private queued = false;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private values: FeatureValues = {};

  constructor(private readonly transport: Transport,
              private readonly view: ReadoutView,
              private readonly state: FeatureValues,
              private readonly delayMs: number = DEBOUNCE_MS) {}

  /** Initialize sliders from a recommendation; its scores render directly. */
  populate(rec: RecommendResponse): void {
    this.seq += 1;
    this.values = { ...rec.action };
    this.cancelTimer();
    const { predicted_glucose, risk, reward } = rec;
    this.view.showReadouts({ predicted_glucose, risk, reward },
                           { ...this.values });
  }

  /** Current slider values as the panel understands them. */
  current(): FeatureValues {
    return { ...this.values };
  }

  /** A slider or toggle moved; schedule a refresh for the new values. */
  setValue(name: string, value: number): void {
    this.setValues({ ...this.values, [name]: value });
  }

  /** Replace all values at once (reset-to-recommendation path). */
  setValues(values: FeatureValues): void {
    this.seq += 1;
    this.values = { ...values };
    this.cancelTimer();
    const seq = this.seq;
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.issue(seq);
    }, this.delayMs);
  }

  /** Re-request scores for the values already on screen. */
  retry(): void {
    void this.issue(this.seq);
  }

  private cancelTimer(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  private async issue(seq: number): Promise<void> {
    if (seq !== this.seq) {
      return; // superseded before the request left
    }
    if (this.inFlight) {
      this.queued = true; // re-issue once the current request settles
      return;
    }
    const action = { ...this.values };
    this.inFlight = true;
    try {
      const scores = await this.transport.whatif({ state: this.state, action });
      if (seq === this.seq) {
        this.view.showReadouts(scores, action);
      }
    } catch (err) {
      if (seq === this.seq) {
        this.view.markStale(err instanceof Error ? err.message : String(err));
      }
    } finally {
      this.inFlight = false;
      if (this.queued) {
        this.queued = false;
        this.cancelTimer(); // the drain below already covers the newest seq
        void this.issue(this.seq);
      }
    }
  }
}
