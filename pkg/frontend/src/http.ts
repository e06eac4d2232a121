import { DomainError, ServerError, TimeoutError, TransportError } from "./errors.js";

export interface HttpResponse {
  status: number;
  text: string;
}

/**
 * POST a JSON body and return the raw response text.
 *
 * Network failures and timeouts throw TransportError/TimeoutError (retriable);
 * HTTP error statuses throw DomainError (4xx) or ServerError (5xx).
 */
export async function postJson(
  url: string,
  body: unknown,
  timeoutMs: number,
): Promise<HttpResponse> {
  const controller = new AbortController();
  const timer = setTimeout(() => controller.abort(), timeoutMs);
  let response: Response;
  try {
    response = await fetch(url, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal: controller.signal,
    });
  } catch (error) {
    if (error instanceof Error && error.name === "AbortError") {
      throw new TimeoutError(`request to ${url} timed out after ${timeoutMs}ms`);
    }
    throw new TransportError(`request to ${url} failed: ${String(error)}`, error);
  } finally {
    clearTimeout(timer);
  }

  const text = await response.text();
  if (response.status >= 500) {
    throw new ServerError(response.status, text);
  }
  if (response.status >= 400) {
    throw new DomainError(response.status, text);
  }
  return { status: response.status, text };
}

export async function getJson(url: string, timeoutMs: number): Promise<HttpResponse> {
  const controller = new AbortController();
  const timer = setTimeout(() => controller.abort(), timeoutMs);
  try {
    const response = await fetch(url, { signal: controller.signal });
    const text = await response.text();
    if (response.status >= 500) {
      throw new ServerError(response.status, text);
    }
    if (response.status >= 400) {
      throw new DomainError(response.status, text);
    }
    return { status: response.status, text };
  } catch (error) {
    if (error instanceof DomainError || error instanceof ServerError) {
      throw error;
    }
    if (error instanceof Error && error.name === "AbortError") {
      throw new TimeoutError(`request to ${url} timed out after ${timeoutMs}ms`);
    }
    throw new TransportError(`request to ${url} failed: ${String(error)}`, error);
  } finally {
    clearTimeout(timer);
  }
}
