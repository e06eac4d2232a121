/**
 * Error taxonomy for the client.
 *
 * Only transport-level failures (network errors, timeouts) are retriable;
 * any response the server actually produced — including judge failures —
 * is surfaced as-is and never retried.
 */

/** The request never completed: connection refused, reset, DNS, abort. */
export class TransportError extends Error {
  readonly cause?: unknown;

  constructor(message: string, cause?: unknown) {
    super(message);
    this.name = "TransportError";
    this.cause = cause;
  }
}

/** The request exceeded the configured timeout. */
export class TimeoutError extends TransportError {
  constructor(message: string) {
    super(message);
    this.name = "TimeoutError";
  }
}

/** The server rejected the request: schema (400) or domain (422) violation. */
export class DomainError extends Error {
  readonly status: number;
  readonly body: string;

  constructor(status: number, body: string, message?: string) {
    super(message ?? `server rejected request (HTTP ${status}): ${body}`);
    this.name = "DomainError";
    this.status = status;
    this.body = body;
  }
}

/** The server failed (5xx), including judge transport failures (502/504). */
export class ServerError extends Error {
  readonly status: number;
  readonly body: string;

  constructor(status: number, body: string) {
    super(`server error (HTTP ${status}): ${body}`);
    this.name = "ServerError";
    this.status = status;
    this.body = body;
  }
}

/** The request was rejected client-side before any call was made. */
export class ValidationError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ValidationError";
  }
}
