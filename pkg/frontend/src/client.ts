import { resolveConfig, type ClientConfig, type ResolvedConfig } from "./config.js";
import { ValidationError } from "./errors.js";
import { getJson, postJson } from "./http.js";
import { withRetry } from "./retry.js";
import type {
  BestOfNResult,
  GroundTruthRef,
  RolloutScoreResult,
  VerdictRecord,
  VideoRef,
  WithRaw,
} from "./types.js";

function validateVideoRef(ref: VideoRef, where: string): void {
  if (typeof ref === "string") {
    if (ref.length === 0) {
      throw new ValidationError(`${where}: video id must be non-empty`);
    }
    return;
  }
  if (ref === null || typeof ref !== "object") {
    throw new ValidationError(`${where}: video ref must be an id or a descriptor`);
  }
  if (!ref.id || typeof ref.id !== "string") {
    throw new ValidationError(`${where}: descriptor needs a non-empty id`);
  }
  if (!Number.isInteger(ref.frame_count) || ref.frame_count < 1) {
    throw new ValidationError(`${where}: descriptor frame_count must be a positive integer`);
  }
  if (!(ref.source_fps > 0)) {
    throw new ValidationError(`${where}: descriptor source_fps must be positive`);
  }
  if (!Array.isArray(ref.frames) || ref.frames.length !== ref.frame_count) {
    throw new ValidationError(
      `${where}: descriptor must carry exactly frame_count frame handles`,
    );
  }
}

/**
 * Synchronous-feeling client for the reward service.
 *
 * No reward math lives here: every number comes from the engine, and each
 * response also exposes the server's verbatim bytes. Batched calls preserve
 * input order: result i always answers request item i. Retries fire only on
 * transport/timeout failures, never on domain errors.
 */
export class EngineClient {
  private readonly config: ResolvedConfig;

  constructor(config: ClientConfig) {
    this.config = resolveConfig(config);
  }

  private async post<T>(path: string, body: unknown): Promise<WithRaw<T>> {
    const response = await withRetry(
      () => postJson(this.config.baseUrl + path, body, this.config.timeoutMs),
      this.config.retry,
    );
    return { data: JSON.parse(response.text) as T, raw: response.text };
  }

  /** Service liveness/version probe. */
  async health(): Promise<WithRaw<{ status: string; version: string }>> {
    const response = await withRetry(
      () => getJson(this.config.baseUrl + "/healthz", this.config.timeoutMs),
      this.config.retry,
    );
    return { data: JSON.parse(response.text), raw: response.text };
  }

  /** Two-turn verdict and scalar reward for one video. */
  async getReward(
    videoRef: VideoRef,
    prompt = "",
    seed?: number,
  ): Promise<WithRaw<VerdictRecord>> {
    validateVideoRef(videoRef, "getReward");
    const body: Record<string, unknown> = { video: videoRef, prompt };
    if (seed !== undefined) body.seed = seed;
    return this.post<VerdictRecord>("/v1/reward", body);
  }

  /**
   * Reward a batch of videos. Requests run at most `batchSize` at a time;
   * the result array is index-aligned with `videoRefs`.
   */
  async getRewards(
    videoRefs: VideoRef[],
    prompt = "",
    seed?: number,
  ): Promise<WithRaw<VerdictRecord>[]> {
    videoRefs.forEach((ref, i) => validateVideoRef(ref, `getRewards[${i}]`));
    const results: WithRaw<VerdictRecord>[] = new Array(videoRefs.length);
    for (let start = 0; start < videoRefs.length; start += this.config.batchSize) {
      const chunk = videoRefs.slice(start, start + this.config.batchSize);
      const settled = await Promise.all(
        chunk.map((ref, offset) =>
          this.getReward(ref, prompt, seed === undefined ? undefined : seed + start + offset),
        ),
      );
      settled.forEach((value, offset) => {
        results[start + offset] = value;
      });
    }
    return results;
  }

  /** Sample and score a rollout group server-side. */
  async scoreRollouts(
    videoRef: VideoRef,
    gtRef: GroundTruthRef,
    groupSize: number,
    seed?: number,
  ): Promise<WithRaw<RolloutScoreResult>> {
    validateVideoRef(videoRef, "scoreRollouts");
    if (!Number.isInteger(groupSize) || groupSize < 1) {
      throw new ValidationError(`scoreRollouts: groupSize must be a positive integer`);
    }
    const body: Record<string, unknown> = { video: videoRef, group_size: groupSize };
    if (gtRef !== null) body.ground_truth = gtRef;
    if (seed !== undefined) body.seed = seed;
    return this.post<RolloutScoreResult>("/v1/rollouts/score", body);
  }

  /** Pick the candidate with the highest scalar reward. */
  async selectBest(
    candidateRefs: VideoRef[],
    prompt = "",
    seed?: number,
  ): Promise<WithRaw<BestOfNResult>> {
    if (candidateRefs.length === 0) {
      throw new ValidationError("selectBest: need at least one candidate");
    }
    candidateRefs.forEach((ref, i) => validateVideoRef(ref, `selectBest[${i}]`));
    const body: Record<string, unknown> = { candidates: candidateRefs, prompt };
    if (seed !== undefined) body.seed = seed;
    return this.post<BestOfNResult>("/v1/best-of-n", body);
  }
}
