/**
 * Metadata-driven form construction and client-side validation.
 *
 * Nothing in here hardcodes a feature list: every control is generated
 * from the /metadata response, so schema changes need no UI edits. The
 * validator mirrors the service's field checks one-for-one, which keeps
 * any client-accepted payload acceptable to the service.
 */

import {
  FeatureDescriptor,
  FeatureValues,
  FieldError,
  Metadata,
} from './api.js';

// ------------------------------------------------------------------ Specs

export interface ControlSpec {
  name: string;
  label: string;
  kind: 'number' | 'slider' | 'select' | 'toggle';
  unit: string | null;
  min?: number;
  max?: number;
  step?: number;
  levels?: number[];
}

function continuousStep(lo: number, hi: number): number {
  // ~200 positions across the range, rounded to a power of ten
  const raw = (hi - lo) / 200;
  return Math.pow(10, Math.floor(Math.log10(Math.max(raw, 1e-9))));
}

function toSpec(f: FeatureDescriptor, continuousAs: 'number' | 'slider'): ControlSpec {
  if (f.kind === 'continuous') {
    const [lo, hi] = f.range ?? [0, 1];
    return { name: f.name, label: f.label, kind: continuousAs, unit: f.unit,
             min: lo, max: hi, step: continuousStep(lo, hi) };
  }
  if (f.kind === 'categorical') {
    return { name: f.name, label: f.label, kind: 'select', unit: f.unit,
             levels: f.levels ?? [] };
  }
  return { name: f.name, label: f.label, kind: 'toggle', unit: f.unit };
}

/** One numeric input, select, or toggle per state feature. */
export function stateControls(meta: Metadata): ControlSpec[] {
  return meta.features
    .filter((f) => f.role === 'state')
    .map((f) => toSpec(f, 'number'));
}

/** Sliders for continuous actions, toggles for binary ones. */
export function actionControls(meta: Metadata): ControlSpec[] {
  return meta.features
    .filter((f) => f.role === 'action')
    .map((f) => toSpec(f, 'slider'));
}

// ------------------------------------------------------------------ Validation

function checkValue(f: FeatureDescriptor, value: number): string | null {
  if (!Number.isFinite(value)) {
    return 'value must be a finite number';
  }
  if (f.kind === 'continuous' && f.range) {
    const [lo, hi] = f.range;
    if (value < lo || value > hi) {
      return `value ${value} outside [${lo}, ${hi}]`;
    }
  } else if (f.kind === 'binary') {
    if (value !== 0 && value !== 1) {
      return 'value must be 0 or 1';
    }
  } else if (f.kind === 'categorical') {
    if (!(f.levels ?? []).includes(value)) {
      return `value ${value} not among levels`;
    }
  }
  return null;
}

function validateAgainst(features: FeatureDescriptor[], values: FeatureValues,
                         role: 'state' | 'action'): FieldError[] {
  const errors: FieldError[] = [];
  const known = new Map(features.map((f) => [f.name, f]));
  for (const name of Object.keys(values)) {
    if (!known.has(name)) {
      errors.push({ field: name, error: `not a ${role} feature in this schema` });
    }
  }
  for (const f of features) {
    if (!(f.name in values)) {
      errors.push({ field: f.name, error: `missing ${role} feature` });
      continue;
    }
    const problem = checkValue(f, values[f.name]);
    if (problem !== null) {
      errors.push({ field: f.name, error: problem });
    }
  }
  return errors;
}

/** Same checks the service runs on /recommend payloads. */
export function validateState(meta: Metadata, values: FeatureValues): FieldError[] {
  return validateAgainst(meta.features.filter((f) => f.role === 'state'),
                         values, 'state');
}

/** Same checks the service runs on the action half of /whatif payloads. */
export function validateAction(meta: Metadata, values: FeatureValues): FieldError[] {
  return validateAgainst(meta.features.filter((f) => f.role === 'action'),
                         values, 'action');
}

// ------------------------------------------------------------------ Rendering

function labelText(spec: ControlSpec): string {
  return spec.unit ? `${spec.label} (${spec.unit})` : spec.label;
}

/**
 * Build one labeled control element per spec. Values are read back via
 * readValues, keyed by the data-feature attribute.
 */
export function renderControls(doc: Document, specs: ControlSpec[],
                               initial?: FeatureValues): HTMLElement {
  const container = doc.createElement('div');
  container.className = 'controls';
  for (const spec of specs) {
    const row = doc.createElement('label');
    row.className = `control control-${spec.kind}`;

    const caption = doc.createElement('span');
    caption.className = 'caption';
    caption.textContent = labelText(spec);
    row.appendChild(caption);

    let input: HTMLInputElement | HTMLSelectElement;
    if (spec.kind === 'select') {
      input = doc.createElement('select');
      for (const level of spec.levels ?? []) {
        const opt = doc.createElement('option');
        opt.value = String(level);
        opt.textContent = String(level);
        input.appendChild(opt);
      }
    } else if (spec.kind === 'toggle') {
      input = doc.createElement('input');
      input.type = 'checkbox';
    } else {
      input = doc.createElement('input');
      input.type = spec.kind === 'slider' ? 'range' : 'number';
      input.min = String(spec.min);
      input.max = String(spec.max);
      input.step = String(spec.step);
    }
    input.dataset.feature = spec.name;
    if (initial && spec.name in initial) {
      setControlValue(input, initial[spec.name]);
    }
    row.appendChild(input);

    const err = doc.createElement('span');
    err.className = 'field-error';
    err.dataset.errorFor = spec.name;
    row.appendChild(err);

    container.appendChild(row);
  }
  return container;
}

export function setControlValue(input: HTMLInputElement | HTMLSelectElement,
                                value: number): void {
  if (input instanceof HTMLInputElement && input.type === 'checkbox') {
    input.checked = value === 1;
  } else {
    input.value = String(value);
  }
}

function controlValue(input: HTMLInputElement | HTMLSelectElement): number {
  if (input instanceof HTMLInputElement && input.type === 'checkbox') {
    return input.checked ? 1 : 0;
  }
  return Number(input.value);
}

/** Collect current values from every control under the container. */
export function readValues(container: HTMLElement): FeatureValues {
  const values: FeatureValues = {};
  const inputs = container.querySelectorAll<HTMLInputElement | HTMLSelectElement>(
    '[data-feature]');
  inputs.forEach((input) => {
    values[input.dataset.feature as string] = controlValue(input);
  });
  return values;
}

/** Write per-field messages next to their controls; clears the rest. */
export function showFieldErrors(container: HTMLElement,
                                errors: FieldError[]): void {
  const byField = new Map(errors.map((e) => [e.field, e.error]));
  container.querySelectorAll<HTMLElement>('[data-error-for]').forEach((el) => {
    el.textContent = byField.get(el.dataset.errorFor as string) ?? '';
  });
}
