// Voiceover capture for one segment.
//
// Recording is refused while playback is unmuted (narration would bleed into
// the track), runs for the segment duration, and only uploads when the
// captured length lands within one second of that duration. Anything else is
// a re-record prompt, never a silent upload.

import { clear, el } from './dom.js';
import type { SegmentInfo, Utterance, VoiceoverResult } from './types.js';

export const MUTE_WARNING = 'Turn speakers off during voiceover recording.';
export const DURATION_TOLERANCE_S = 1.0;

export interface CaptureResult {
  data: Blob;
  duration_s: number;
}

export interface CaptureSession {
  stop(): Promise<CaptureResult>;
}

// open() must reject when the user denies microphone permission
export interface AudioBackend {
  open(): Promise<CaptureSession>;
}

export interface PlaybackControl {
  muted: boolean;
  setMuted(muted: boolean): void;
}

export interface Clock {
  wait(seconds: number): Promise<void>;
}

const realClock: Clock = {
  wait: (seconds) => new Promise((resolve) => setTimeout(resolve, seconds * 1000)),
};

export function mediaRecorderBackend(): AudioBackend {
  return {
    async open(): Promise<CaptureSession> {
      const stream = await navigator.mediaDevices.getUserMedia({ audio: true });
      const recorder = new MediaRecorder(stream);
      const chunks: BlobPart[] = [];
      const startedAt = performance.now();
      recorder.ondataavailable = (ev) => {
        if (ev.data && ev.data.size > 0) chunks.push(ev.data);
      };
      recorder.start();
      return {
        stop: () =>
          new Promise<CaptureResult>((resolve) => {
            recorder.onstop = () => {
              stream.getTracks().forEach((track) => track.stop());
              resolve({
                data: new Blob(chunks, { type: recorder.mimeType }),
                duration_s: (performance.now() - startedAt) / 1000,
              });
            };
            recorder.stop();
          }),
      };
    },
  };
}

export class VoiceoverRecorder {
  readonly root: HTMLElement;
  recording = false;

  private readonly status: HTMLElement;
  private readonly utteranceList: HTMLElement;
  private readonly recordButton: HTMLButtonElement;
  private readonly retryButton: HTMLButtonElement;

  constructor(
    private readonly segment: SegmentInfo,
    private readonly playback: PlaybackControl,
    private readonly upload: (audio: Blob) => Promise<VoiceoverResult>,
    private readonly backend: AudioBackend = mediaRecorderBackend(),
    private readonly clock: Clock = realClock,
  ) {
    this.status = el('p', { 'data-role': 'recorder-status' }, '');
    this.utteranceList = el('ul', { 'data-role': 'utterances' });
    this.recordButton = el('button', { type: 'button', 'data-role': 'record' }, 'Record voiceover');
    this.recordButton.addEventListener('click', () => void this.start());
    this.retryButton = el('button', { type: 'button', 'data-role': 'rerecord' }, 'Record again');
    this.retryButton.hidden = true;
    this.retryButton.addEventListener('click', () => void this.start());
    this.root = el(
      'div',
      { class: 'voiceover' },
      this.recordButton,
      this.retryButton,
      this.status,
      this.utteranceList,
    );
  }

  // Mute toggling is owned by the recorder while recording so the precondition
  // cannot be broken mid-capture.
  setPlaybackMuted(muted: boolean): boolean {
    if (this.recording && !muted) {
      this.status.textContent = MUTE_WARNING;
      return false;
    }
    this.playback.setMuted(muted);
    return true;
  }

  async start(): Promise<void> {
    if (this.recording) return;
    if (!this.playback.muted) {
      this.status.textContent = MUTE_WARNING;
      return;
    }
    this.retryButton.hidden = true;
    clear(this.utteranceList);

    let session: CaptureSession;
    try {
      session = await this.backend.open();
    } catch {
      this.status.textContent = 'microphone permission denied';
      return;
    }

    this.recording = true;
    this.recordButton.disabled = true;
    const targetS = this.segment.end_time_s - this.segment.start_time_s;
    this.status.textContent = `recording ${targetS}s...`;
    try {
      await this.clock.wait(targetS);
      const captured = await session.stop();
      await this.finish(captured, targetS);
    } finally {
      this.recording = false;
      this.recordButton.disabled = false;
    }
  }

  private async finish(captured: CaptureResult, targetS: number): Promise<void> {
    if (Math.abs(captured.duration_s - targetS) > DURATION_TOLERANCE_S) {
      this.status.textContent =
        `captured ${captured.duration_s.toFixed(1)}s but the segment is ${targetS}s; ` +
        'please record again';
      this.retryButton.hidden = false;
      return;
    }
    const result = await this.upload(captured.data);
    this.status.textContent = `uploaded, ${result.utterances.length} utterance(s)`;
    for (const utt of result.utterances) {
      this.utteranceList.append(renderUtterance(utt));
    }
  }
}

function renderUtterance(utt: Utterance): HTMLElement {
  const taxon = utt.match.taxon_id ?? utt.match.kind;
  return el(
    'li',
    { 'data-utterance': utt.utterance_id },
    `${utt.start_s.toFixed(1)}-${utt.end_s.toFixed(1)}s "${utt.transcript}" -> ${taxon}`,
  );
}
