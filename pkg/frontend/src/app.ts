// Single page wiring: login -> workbench. The app owns no domain state; each
// panel refetches what it shows after every mutation.

import { ServiceClient, type FetchLike } from './api.js';
import { clear, el } from './dom.js';
import { VoiceoverRecorder, type AudioBackend, type Clock } from './recorder.js';
import { ReviewQueue } from './reviewQueue.js';
import { SegmentForm } from './segmentForm.js';
import type { SegmentInfo, Taxon, VideoInfo } from './types.js';

export interface AppOptions {
  fetchImpl?: FetchLike;
  audioBackend?: AudioBackend;
  clock?: Clock;
}

export class App {
  client: ServiceClient | null = null;
  queue: ReviewQueue | null = null;
  recorder: VoiceoverRecorder | null = null;
  segment: SegmentInfo | null = null;
  video: VideoInfo | null = null;
  lowBandwidth = false;
  private taxa: Taxon[] = [];

  constructor(
    private readonly root: HTMLElement,
    private readonly opts: AppOptions = {},
  ) {}

  renderLogin(): void {
    clear(this.root);
    const url = el('input', { type: 'text', 'data-role': 'base-url', placeholder: 'service URL' });
    url.value = 'http://127.0.0.1:8077';
    const token = el('input', { type: 'password', 'data-role': 'token', placeholder: 'token' });
    const connect = el('button', { type: 'button', 'data-role': 'connect' }, 'Connect');
    connect.addEventListener('click', () => void this.connect(url.value, token.value));
    this.root.append(
      el('h1', {}, 'Annotation workbench'),
      el('div', { class: 'login' }, url, token, connect),
      el('p', { 'data-role': 'login-error' }, ''),
    );
  }

  async connect(baseUrl: string, token: string): Promise<void> {
    const client = new ServiceClient({
      baseUrl,
      token: token || undefined,
      fetchImpl: this.opts.fetchImpl,
    });
    try {
      this.taxa = await client.listTaxa();
    } catch (err) {
      const slot = this.root.querySelector('[data-role="login-error"]');
      if (slot) slot.textContent = `cannot connect: ${(err as Error).message}`;
      return;
    }
    this.client = client;
    this.renderWorkbench();
  }

  renderWorkbench(): void {
    const client = this.client;
    if (!client) return;
    clear(this.root);

    const lowBw = el('input', { type: 'checkbox', 'data-role': 'low-bandwidth' });
    lowBw.addEventListener('change', () => {
      this.lowBandwidth = lowBw.checked;
      this.renderMedia();
    });

    const videoId = el('input', { type: 'text', 'data-role': 'video-id', placeholder: 'video id' });
    const open = el('button', { type: 'button', 'data-role': 'open-video' }, 'Open');
    open.addEventListener('click', () => void this.openVideo(videoId.value));

    this.queue = new ReviewQueue(client, this.taxa, () => this.renderMedia());
    this.root.append(
      el('header', {}, el('label', {}, lowBw, ' low bandwidth'), videoId, open),
      el('p', { 'data-role': 'video-error' }, ''),
      el('section', { 'data-role': 'video-panel' }),
      el('section', { 'data-role': 'segment-panel' }),
      this.queue.root,
    );
    void this.queue.load();
  }

  async openVideo(videoId: string): Promise<void> {
    const client = this.client;
    if (!client) return;
    try {
      this.video = await client.getVideo(videoId.trim());
    } catch (err) {
      const slot = this.root.querySelector('[data-role="video-error"]');
      if (slot) slot.textContent = (err as Error).message;
      return;
    }
    this.segment = null;
    this.renderMedia();
    this.renderSegmentPanel();
  }

  renderMedia(): void {
    const client = this.client;
    const panel = this.root.querySelector<HTMLElement>('[data-role="video-panel"]');
    if (!client || !panel || !this.video) return;
    clear(panel);
    panel.append(
      el(
        'p',
        { 'data-role': 'video-meta' },
        `${this.video.video_id.slice(0, 12)} ${this.video.duration_s}s ` +
          `${this.video.width_px}x${this.video.height_px}`,
      ),
    );
    if (this.lowBandwidth) {
      // thumbnails only; field connectivity often cannot stream the clip
      const strip = el('div', { 'data-role': 'thumb-strip' });
      for (const frameId of this.batchThumbs().slice(0, 8)) {
        strip.append(el('img', { src: client.frameUrl(frameId), alt: 'frame' }));
      }
      panel.append(strip);
    } else {
      const video = el('video', { controls: true, 'data-role': 'player' });
      video.src = client.videoUrl(this.video.video_id);
      panel.append(video);
    }
  }

  private thumbSource: string[] = [];

  setThumbSource(frameIds: string[]): void {
    this.thumbSource = frameIds;
  }

  private batchThumbs(): string[] {
    return this.thumbSource;
  }

  renderSegmentPanel(): void {
    const client = this.client;
    const panel = this.root.querySelector<HTMLElement>('[data-role="segment-panel"]');
    if (!client || !panel || !this.video) return;
    const video = this.video;
    clear(panel);

    const status = el('p', { 'data-role': 'segment-status' }, '');
    const form = new SegmentForm(async (payload) => {
      const segment = await client.createSegment(video.video_id, payload);
      this.segment = segment;
      status.textContent = `segment ${segment.segment_id}: ` +
        `${segment.start_time_s}s to ${segment.end_time_s}s`;
      this.mountRecorder(panel, segment);
      this.mountPipeline(panel, segment);
    });
    panel.append(form.root, status);
  }

  // machine proposals come from the same service the review queue reads, so
  // running the pipeline refreshes the queue rather than rendering its output
  private mountPipeline(panel: HTMLElement, segment: SegmentInfo): void {
    const client = this.client;
    if (!client) return;
    const old = panel.querySelector('.pipeline');
    if (old) old.remove();
    const fps = el('input', { type: 'number', 'data-role': 'fps', value: '2' });
    fps.value = '2';
    const info = el('p', { 'data-role': 'batch-info' }, '');
    const run = el('button', { type: 'button', 'data-role': 'run-pipeline' }, 'Run labeling');
    run.addEventListener('click', () => {
      run.disabled = true;
      void client
        .runPipeline(segment.segment_id, Number(fps.value))
        .then(async (result) => {
          info.textContent =
            `batch ${result.batch_id}: ${result.n_labeled} labeled of ` +
            `${result.n_frames} frames, ${result.review_item_ids.length} review item(s)`;
          this.setThumbSource(result.frame_ids);
          this.renderMedia();
          await this.queue?.load();
        })
        .catch((err: Error) => {
          info.textContent = err.message;
        })
        .finally(() => {
          run.disabled = false;
        });
    });
    panel.append(el('div', { class: 'pipeline' }, fps, run, info));
  }

  private mountRecorder(panel: HTMLElement, segment: SegmentInfo): void {
    const client = this.client;
    if (!client) return;
    const old = panel.querySelector('.voiceover');
    if (old) old.remove();
    const playerEl = this.root.querySelector<HTMLVideoElement>('[data-role="player"]');
    const playback = {
      get muted() {
        return playerEl ? playerEl.muted : true;
      },
      setMuted(muted: boolean) {
        if (playerEl) playerEl.muted = muted;
      },
    };
    this.recorder = new VoiceoverRecorder(
      segment,
      playback,
      (audio) => client.uploadVoiceover(segment.segment_id, audio),
      this.opts.audioBackend,
      this.opts.clock,
    );
    if (playerEl && !playerEl.dataset['muteGuard']) {
      playerEl.dataset['muteGuard'] = '1';
      // native controls must not break the precondition mid-take
      playerEl.addEventListener('volumechange', () => {
        if (this.recorder?.recording && !playerEl.muted) {
          playerEl.muted = true;
          this.recorder.setPlaybackMuted(false); // refused, shows the warning
        }
      });
    }
    panel.append(this.recorder.root);
  }
}

export function mount(root: HTMLElement, opts: AppOptions = {}): App {
  const app = new App(root, opts);
  app.renderLogin();
  return app;
}
