import { TransportError } from "./errors.js";
import type { RetryPolicy } from "./config.js";

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/**
 * Run `fn`, retrying only on TransportError (which includes timeouts).
 * Domain and server errors propagate immediately: the server saw the
 * request, so replaying it cannot be the client's decision.
 */
export async function withRetry<T>(fn: () => Promise<T>, policy: RetryPolicy): Promise<T> {
  let lastError: unknown;
  for (let attempt = 1; attempt <= policy.maxAttempts; attempt++) {
    try {
      return await fn();
    } catch (error) {
      if (!(error instanceof TransportError)) {
        throw error;
      }
      lastError = error;
      if (attempt < policy.maxAttempts && policy.backoffMs > 0) {
        await sleep(attempt * policy.backoffMs);
      }
    }
  }
  throw lastError;
}
