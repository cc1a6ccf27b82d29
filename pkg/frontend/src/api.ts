// Thin typed client for the curation service. Every method is one HTTP call;
// callers own refetching, the client holds no resource state.

import type {
  BatchInfo,
  Manifest,
  PipelineResult,
  ReviewItem,
  SegmentInfo,
  SegmentPayload,
  Taxon,
  VideoInfo,
  VoiceoverResult,
} from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export interface ClientOptions {
  baseUrl: string;
  token?: string;
  fetchImpl?: FetchLike;
}

export class ServiceClient {
  private readonly baseUrl: string;
  private readonly token: string | undefined;
  private readonly fetchImpl: FetchLike;

  constructor(opts: ClientOptions) {
    this.baseUrl = opts.baseUrl.replace(/\/+$/, '');
    this.token = opts.token;
    this.fetchImpl = opts.fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private headers(json: boolean): Record<string, string> {
    const h: Record<string, string> = {};
    if (json) h['Content-Type'] = 'application/json';
    if (this.token) h['Authorization'] = `Bearer ${this.token}`;
    return h;
  }

  private async request<T>(method: string, path: string, body?: unknown, form?: FormData): Promise<T> {
    const init: RequestInit = { method, headers: this.headers(body !== undefined) };
    if (body !== undefined) init.body = JSON.stringify(body);
    if (form !== undefined) init.body = form;
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) {
      let code = 'HttpError';
      let message = `${resp.status}`;
      try {
        const payload = (await resp.json()) as { code?: string; message?: string };
        code = payload.code ?? code;
        message = payload.message ?? message;
      } catch {
        // non-JSON error body, keep the status text
      }
      throw new ApiError(resp.status, code, message);
    }
    return (await resp.json()) as T;
  }

  listTaxa(): Promise<Taxon[]> {
    return this.request('GET', '/taxa');
  }

  getVideo(videoId: string): Promise<VideoInfo> {
    return this.request('GET', `/videos/${videoId}`);
  }

  createSegment(videoId: string, payload: SegmentPayload): Promise<SegmentInfo> {
    return this.request('POST', `/videos/${videoId}/segments`, payload);
  }

  getSegment(segmentId: string): Promise<SegmentInfo> {
    return this.request('GET', `/segments/${segmentId}`);
  }

  uploadVoiceover(segmentId: string, audio: Blob, filename = 'voiceover.wav'): Promise<VoiceoverResult> {
    const form = new FormData();
    form.append('file', audio, filename);
    return this.request('POST', `/segments/${segmentId}/voiceover`, undefined, form);
  }

  runPipeline(segmentId: string, fps: number): Promise<PipelineResult> {
    return this.request('POST', `/segments/${segmentId}/pipeline`, { fps });
  }

  getBatch(batchId: string): Promise<BatchInfo> {
    return this.request('GET', `/batches/${batchId}`);
  }

  listReview(state?: string): Promise<ReviewItem[]> {
    const qs = state ? `?state=${state}` : '';
    return this.request('GET', `/review${qs}`);
  }

  resolveReview(itemId: string, decision: string): Promise<ReviewItem> {
    return this.request('POST', `/review/${itemId}/resolve`, { decision });
  }

  getManifest(version: string | number = 'current'): Promise<Manifest> {
    return this.request('GET', `/datasets/${version}/manifest`);
  }

  // media URLs are handed to <img>/<video> elements, not fetched by the client
  frameUrl(frameId: string): string {
    return `${this.baseUrl}/frames/${frameId}/content`;
  }

  videoUrl(videoId: string): string {
    return `${this.baseUrl}/videos/${videoId}/content`;
  }
}
