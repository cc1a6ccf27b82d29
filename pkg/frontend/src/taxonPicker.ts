// Dropdown over the registry vocabulary. Options come straight from
// GET /taxa; the picker never invents or filters entries.

import { el } from './dom.js';
import type { Taxon } from './types.js';

export class TaxonPicker {
  readonly root: HTMLElement;
  private readonly select: HTMLSelectElement;

  constructor(taxa: Taxon[], onPick: (taxonId: string) => void) {
    this.select = el('select', { 'data-role': 'taxon-picker' });
    this.select.append(el('option', { value: '' }, 'choose taxon'));
    for (const taxon of taxa) {
      this.select.append(
        el('option', { value: taxon.taxon_id }, `${taxon.common_name} (${taxon.taxon_id})`),
      );
    }
    const confirm = el('button', { type: 'button', 'data-role': 'pick-confirm' }, 'Apply');
    confirm.addEventListener('click', () => {
      if (this.select.value !== '') onPick(this.select.value);
    });
    this.root = el('span', { class: 'taxon-picker' }, this.select, confirm);
  }

  choose(taxonId: string): void {
    this.select.value = taxonId;
  }

  options(): string[] {
    return Array.from(this.select.options)
      .map((o) => o.value)
      .filter((v) => v !== '');
  }
}
