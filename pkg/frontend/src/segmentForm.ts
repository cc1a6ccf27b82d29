// Segment selection form. All gating happens here, before any network I/O:
// the submit callback only ever sees four integers in [0,59] with start < end.

import { el } from './dom.js';
import type { SegmentPayload } from './types.js';

const FIELDS = ['start_min', 'start_s', 'end_min', 'end_s'] as const;
type FieldName = (typeof FIELDS)[number];

const LABELS: Record<FieldName, string> = {
  start_min: 'start minute (0-59)',
  start_s: 'start second (0-59)',
  end_min: 'end minute (0-59)',
  end_s: 'end second (0-59)',
};

function parseField(raw: string): number | null {
  if (!/^\d+$/.test(raw.trim())) return null;
  const value = Number(raw.trim());
  return value >= 0 && value <= 59 ? value : null;
}

export class SegmentForm {
  readonly root: HTMLElement;
  private readonly inputs: Record<FieldName, HTMLInputElement>;
  private readonly submitButton: HTMLButtonElement;
  private readonly durationLabel: HTMLElement;
  private readonly errorLabel: HTMLElement;
  private submitting = false;

  constructor(private readonly onSubmit: (payload: SegmentPayload) => Promise<void>) {
    this.inputs = {} as Record<FieldName, HTMLInputElement>;
    const rows: HTMLElement[] = [];
    for (const name of FIELDS) {
      const input = el('input', {
        type: 'number',
        min: '0',
        max: '59',
        step: '1',
        name,
        'data-field': name,
      });
      input.addEventListener('input', () => this.refresh());
      this.inputs[name] = input;
      rows.push(el('label', { class: 'segment-field' }, LABELS[name], input));
    }

    this.durationLabel = el('span', { class: 'duration', 'data-role': 'duration' }, '');
    this.errorLabel = el('span', { class: 'form-error', 'data-role': 'form-error' }, '');
    this.submitButton = el('button', { type: 'button', 'data-role': 'submit' }, 'Create segment');
    this.submitButton.disabled = true;
    this.submitButton.addEventListener('click', () => void this.submit());

    this.root = el(
      'form',
      { class: 'segment-form' },
      ...rows,
      this.durationLabel,
      this.errorLabel,
      this.submitButton,
    );
    this.refresh();
  }

  private values(): SegmentPayload | null {
    const parsed: Partial<Record<FieldName, number>> = {};
    for (const name of FIELDS) {
      const value = parseField(this.inputs[name].value);
      if (value === null) return null;
      parsed[name] = value;
    }
    const p = parsed as SegmentPayload;
    const start = p.start_min * 60 + p.start_s;
    const end = p.end_min * 60 + p.end_s;
    if (start >= end) return null;
    return p;
  }

  private refresh(): void {
    const payload = this.values();
    this.submitButton.disabled = payload === null || this.submitting;
    if (payload === null) {
      this.durationLabel.textContent = '';
      const touched = FIELDS.some((name) => this.inputs[name].value !== '');
      this.errorLabel.textContent = touched
        ? 'each field must be a whole number 0-59 and start must come before end'
        : '';
      return;
    }
    this.errorLabel.textContent = '';
    const seconds =
      payload.end_min * 60 + payload.end_s - (payload.start_min * 60 + payload.start_s);
    this.durationLabel.textContent = `duration ${seconds}s`;
  }

  private async submit(): Promise<void> {
    const payload = this.values();
    if (payload === null || this.submitting) return; // invalid input never reaches the network
    this.submitting = true;
    this.refresh();
    try {
      await this.onSubmit(payload);
    } finally {
      this.submitting = false;
      this.refresh();
    }
  }
}
