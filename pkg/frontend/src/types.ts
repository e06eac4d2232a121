/** Wire types mirroring the service endpoints. */

/** A video reference: a corpus id, or a full frame-handle descriptor. */
export type VideoRef = string | VideoDescriptor;

export interface VideoDescriptor {
  id: string;
  frame_count: number;
  source_fps: number;
  frames: string[];
}

/** A ground-truth reference: a corpus id, an annotation document, or null to
 * let the server resolve it from its corpus. */
export type GroundTruthRef = string | AnnotationDocument | null;

export interface AnnotationDocument {
  video_id: string;
  frame_count: number;
  source_fps: number;
  status: "normal" | "abnormal";
  anomalies: Array<{
    type: string;
    start_frame: number;
    end_frame: number;
    reason: string;
    saliency: "salient" | "non_salient";
    boxes: Record<string, number[][]>;
  }>;
}

export interface VerdictRecord {
  video_id: string;
  status: "normal" | "abnormal";
  scalar_reward: number;
  window_source: [number, number] | null;
  turn1: unknown;
  turn2: unknown;
  evidence: Array<{
    type: string;
    reason: string;
    problem_region: string;
    boxes: Record<string, number[][]>;
  }>;
  flags: string[];
}

export interface RewardBreakdownRecord {
  r_fmt: number;
  r_stat: number;
  r_type: number;
  r_temp: number;
  r_spa: number;
  gamma_bar: number;
  mask_m: number;
  total: number;
}

export interface RolloutScoreResult {
  video_id: string;
  rewards: number[];
  advantages: number[];
  breakdowns: RewardBreakdownRecord[];
  executed_turns: number[];
}

export interface BestOfNResult {
  selected_index: number;
  scores: number[];
}

/** A parsed response plus the exact bytes the server sent. */
export interface WithRaw<T> {
  data: T;
  /** Verbatim response body; byte-identical across identical requests. */
  raw: string;
}
