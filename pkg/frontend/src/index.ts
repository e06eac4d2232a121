export { EngineClient } from "./client.js";
export { resolveConfig } from "./config.js";
export type { ClientConfig, ResolvedConfig, RetryPolicy } from "./config.js";
export {
  DomainError,
  ServerError,
  TimeoutError,
  TransportError,
  ValidationError,
} from "./errors.js";
export { withRetry } from "./retry.js";
export type {
  AnnotationDocument,
  BestOfNResult,
  GroundTruthRef,
  RewardBreakdownRecord,
  RolloutScoreResult,
  VerdictRecord,
  VideoDescriptor,
  VideoRef,
  WithRaw,
} from "./types.js";
