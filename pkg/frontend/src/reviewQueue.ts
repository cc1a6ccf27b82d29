// Review queue for expert assessment.
//
// The queue never keeps optimistic state: every card renders from the last
// GET /review response, each action fires exactly one resolve call, and every
// completed call (including "someone else got there first") is followed by a
// fresh fetch so the screen always shows server truth.

import { ApiError, ServiceClient } from './api.js';
import { clear, el } from './dom.js';
import { TaxonPicker } from './taxonPicker.js';
import type { ReviewItem, Taxon } from './types.js';

export const CONFLICT_NOTICE = 'someone else resolved this';

export class ReviewQueue {
  readonly root: HTMLElement;
  private readonly list: HTMLElement;
  private readonly notice: HTMLElement;
  private fetched: ReviewItem[] = [];

  constructor(
    private readonly api: ServiceClient,
    private readonly taxa: Taxon[],
    private readonly onServerChange?: () => Promise<void> | void,
  ) {
    this.notice = el('p', { 'data-role': 'queue-notice' }, '');
    this.list = el('div', { 'data-role': 'review-queue' });
    this.root = el('section', { class: 'review' }, this.notice, this.list);
  }

  // the queue's whole display state; tests compare this against the server
  items(): ReviewItem[] {
    return this.fetched;
  }

  async load(): Promise<void> {
    const items = await this.api.listReview();
    this.fetched = items.filter((item) => item.resolution === null);
    clear(this.list);
    for (const item of this.fetched) {
      this.list.append(this.renderCard(item));
    }
  }

  private renderCard(item: ReviewItem): HTMLElement {
    const card = el('article', { class: 'review-card', 'data-item-id': item.item_id });
    card.append(el('h3', {}, item.kind.replaceAll('_', ' ')));

    const transcript = item.subject['transcript'];
    const confidence = item.subject['confidence'];
    if (typeof transcript === 'string') {
      const conf = typeof confidence === 'number' ? ` (confidence ${confidence.toFixed(2)})` : '';
      card.append(el('p', { 'data-role': 'transcript' }, `"${transcript}"${conf}`));
    }
    const proposed = item.subject['proposed_taxon'];
    if (typeof proposed === 'string') {
      card.append(el('p', { 'data-role': 'proposed' }, `proposed: ${proposed}`));
    }
    const batchId = item.subject['batch_id'];
    if (typeof batchId === 'string') {
      card.append(el('p', { 'data-role': 'batch' }, `batch ${batchId}`));
    }
    const frameId = item.subject['frame_id'];
    if (typeof frameId === 'string') {
      // thumbnails load lazily through the media URL, not through the client
      card.append(
        el('img', { 'data-role': 'thumb', src: this.api.frameUrl(frameId), alt: 'frame' }),
      );
    }

    const actions = el('div', { class: 'actions' });
    actions.append(
      this.actionButton(card, item, 'confirm', 'approve'),
      this.actionButton(card, item, 'reject', 'reject'),
    );

    const correct = el('button', { type: 'button', 'data-role': 'correct' }, 'Correct...');
    const pickerSlot = el('span', {});
    correct.addEventListener('click', () => {
      clear(pickerSlot);
      const picker = new TaxonPicker(this.taxa, (taxonId) => {
        void this.act(card, item, taxonId);
      });
      pickerSlot.append(picker.root);
    });
    actions.append(correct, pickerSlot);
    card.append(actions);
    return card;
  }

  private actionButton(
    card: HTMLElement,
    item: ReviewItem,
    role: string,
    decision: string,
  ): HTMLButtonElement {
    const button = el('button', { type: 'button', 'data-role': role }, role);
    button.addEventListener('click', () => void this.act(card, item, decision));
    return button;
  }

  private async act(card: HTMLElement, item: ReviewItem, decision: string): Promise<void> {
    this.notice.textContent = '';
    try {
      await this.api.resolveReview(item.item_id, decision);
    } catch (err) {
      if (err instanceof ApiError && err.code === 'AlreadyResolved') {
        this.notice.textContent = CONFLICT_NOTICE;
      } else {
        this.offerRetry(card, item, decision);
        return; // nothing changed server-side that we know of; keep the card
      }
    }
    await this.load();
    await this.onServerChange?.();
  }

  private offerRetry(card: HTMLElement, item: ReviewItem, decision: string): void {
    if (card.querySelector('[data-role="retry"]')) return;
    const retry = el('button', { type: 'button', 'data-role': 'retry' }, 'Retry');
    retry.addEventListener('click', () => {
      retry.remove();
      void this.act(card, item, decision);
    });
    card.append(el('span', { 'data-role': 'retry-note' }, 'request failed'), retry);
  }
}
