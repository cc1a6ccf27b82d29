// Payload shapes for the curation service API.

export interface Taxon {
  taxon_id: string;
  common_name: string;
  scientific_name: string;
  aliases: string[];
}

export interface CaptureMeta {
  harvester_id: string;
  site: string;
  capture_date: string;
  season: string;
  device_note: string | null;
}

export interface VideoInfo {
  video_id: string;
  duration_s: number;
  width_px: number;
  height_px: number;
  capture: CaptureMeta;
  location_stripped: boolean;
}

// The four form fields, sent verbatim; each must be an integer in [0, 59].
export interface SegmentPayload {
  start_min: number;
  start_s: number;
  end_min: number;
  end_s: number;
}

export interface SegmentInfo extends SegmentPayload {
  segment_id: string;
  video_id: string;
  start_time_s: number;
  end_time_s: number;
}

export interface SpokenMatch {
  kind: 'matched' | 'ambiguous' | 'no_match';
  taxon_id: string | null;
  candidates: string[];
}

export interface Utterance {
  utterance_id: string;
  video_id: string;
  start_s: number;
  end_s: number;
  transcript: string;
  confidence: number;
  match: SpokenMatch;
  origin: string;
}

export interface VoiceoverResult {
  audio_id: string;
  utterances: Utterance[];
}

export interface Resolution {
  decision: string;
  actor: string;
  timestamp: string;
}

// subject keys vary by kind: batch_approval carries batch/segment/video ids,
// ambiguous_utterance and low_confidence_label carry transcript, confidence,
// proposed_taxon, candidates, frame_id as applicable
export interface ReviewItem {
  item_id: string;
  kind: string;
  subject: Record<string, unknown>;
  created_at: string;
  resolution: Resolution | null;
}

export interface QcReport {
  frame_id: string;
  verdict: string;
  sharpness: number;
  mean_luma: number;
  duplicate_of: string | null;
}

export interface BatchInfo {
  batch_id: string;
  video_id: string;
  segment_id: string;
  fps: number;
  frame_ids: string[];
  labels: Record<string, [string, string]>; // frame_id -> [taxon_id, utterance_id]
  qc: Record<string, QcReport>;
  created_at: string;
}

export interface PipelineResult {
  batch_id: string;
  segment_id: string;
  video_id: string;
  frame_ids: string[];
  n_frames: number;
  n_labeled: number;
  n_pass: number;
  n_utterances: number;
  review_item_ids: string[];
}

export interface ManifestEntry {
  frame_id: string;
  taxon_id: string;
  provenance: Record<string, string>;
  qc_verdict: string;
  review_state: string;
  batch_id: string;
  split: string;
  quarantined: boolean;
}

export interface Manifest {
  version: number;
  entries: ManifestEntry[];
  class_counts: Record<string, number>;
  split_policy: Record<string, unknown> | null;
}
