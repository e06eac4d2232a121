import { ValidationError } from "./errors.js";

/** Retry policy applied to transport/timeout failures only. */
export interface RetryPolicy {
  /** Total attempts including the first (>= 1). */
  maxAttempts: number;
  /** Base backoff in milliseconds; attempt n waits n * backoffMs. */
  backoffMs: number;
}

export interface ClientConfig {
  /** Service base URL, e.g. "http://127.0.0.1:8080". */
  baseUrl: string;
  /** Per-request timeout in milliseconds (> 0). Default 30000. */
  timeoutMs?: number;
  /** Retry policy. Default { maxAttempts: 3, backoffMs: 100 }. */
  retry?: RetryPolicy;
  /** Max in-flight requests per batched call (>= 1). Default 4. */
  batchSize?: number;
}

export interface ResolvedConfig {
  baseUrl: string;
  timeoutMs: number;
  retry: RetryPolicy;
  batchSize: number;
}

export function resolveConfig(config: ClientConfig): ResolvedConfig {
  if (!config.baseUrl) {
    throw new ValidationError("baseUrl is required");
  }
  const timeoutMs = config.timeoutMs ?? 30000;
  if (timeoutMs <= 0) {
    throw new ValidationError(`timeoutMs must be positive, got ${timeoutMs}`);
  }
  const retry = config.retry ?? { maxAttempts: 3, backoffMs: 100 };
  if (retry.maxAttempts < 1) {
    throw new ValidationError(`retry.maxAttempts must be >= 1, got ${retry.maxAttempts}`);
  }
  if (retry.backoffMs < 0) {
    throw new ValidationError(`retry.backoffMs must be >= 0, got ${retry.backoffMs}`);
  }
  const batchSize = config.batchSize ?? 4;
  if (batchSize < 1) {
    throw new ValidationError(`batchSize must be >= 1, got ${batchSize}`);
  }
  return {
    baseUrl: config.baseUrl.replace(/\/$/, ""),
    timeoutMs,
    retry,
    batchSize,
  };
}
