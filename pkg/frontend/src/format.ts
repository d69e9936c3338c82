/**
 * Deterministic readout formatting. Pure functions of the response values,
 * so identical numbers always produce identical strings; the round-trip
 * guarantee (return sliders to the recommendation, get the original
 * readouts back) rests on that.
 */

import { Scores } from './api.js';

export function formatNumber(v: number): string {
  if (v === 0) {
    return '0';
  }
  const mag = Math.abs(v);
  if (mag >= 10000 || mag < 0.01) {
    return v.toExponential(3);
  }
  return v.toFixed(2);
}

export interface ReadoutStrings {
  glucose: string;
  risk: string;
  reward: string;
}

export function formatScores(scores: Scores, glucoseUnit: string | null): ReadoutStrings {
  const unit = glucoseUnit ? ` ${glucoseUnit}` : '';
  return {
    glucose: `${formatNumber(scores.predicted_glucose)}${unit}`,
    risk: formatNumber(scores.risk),
    reward: formatNumber(scores.reward),
  };
}
