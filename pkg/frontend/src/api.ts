/** Typed client for the annotation service's JSON API.
 *
 * Failures surface as ApiError (network / unexpected status) or
 * ConflictError (409: someone else saved first; carries the server's
 * current revision so the caller can reload and merge).
 */

import { TileSummary } from "./browser.js";
import { SaveBody, TileAnnotations } from "./session.js";

export class ApiError extends Error {
  readonly status: number | null;

  constructor(message: string, status: number | null = null) {
    super(message);
    this.name = "ApiError";
    this.status = status;
  }
}

export class ConflictError extends ApiError {
  /** The revision the server holds now (ours was stale). */
  readonly revision: number;

  constructor(message: string, revision: number) {
    super(message, 409);
    this.name = "ConflictError";
    this.revision = revision;
  }
}

async function request(path: string, init?: RequestInit): Promise<Response> {
  let response: Response;
  try {
    response = await fetch(path, init);
  } catch (err) {
    throw new ApiError(`annotation service unreachable: ${String(err)}`);
  }
  return response;
}

async function detailOf(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: string };
    if (typeof body.detail === "string") return body.detail;
  } catch {
    // non-JSON error body; fall through to the status line
  }
  return `request failed with status ${response.status}`;
}

export async function fetchTiles(): Promise<TileSummary[]> {
  const response = await request("/api/tiles");
  if (!response.ok) throw new ApiError(await detailOf(response), response.status);
  return (await response.json()) as TileSummary[];
}

export async function fetchAnnotations(tileId: string): Promise<TileAnnotations> {
  const response = await request(
    `/api/tiles/${encodeURIComponent(tileId)}/annotations`,
  );
  if (!response.ok) throw new ApiError(await detailOf(response), response.status);
  return (await response.json()) as TileAnnotations;
}

/** PUT the session's annotations; resolves to the new revision. */
export async function putAnnotations(
  tileId: string,
  body: SaveBody,
): Promise<number> {
  const response = await request(
    `/api/tiles/${encodeURIComponent(tileId)}/annotations`,
    {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    },
  );
  if (response.status === 409) {
    const conflict = (await response.json()) as { detail: string; revision: number };
    throw new ConflictError(conflict.detail, conflict.revision);
  }
  if (!response.ok) throw new ApiError(await detailOf(response), response.status);
  const saved = (await response.json()) as { revision: number };
  return saved.revision;
}

export function tileImageUrl(tileId: string): string {
  return `/api/tiles/${encodeURIComponent(tileId)}/image`;
}
