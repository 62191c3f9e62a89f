import { afterEach, describe, expect, it, vi } from "vitest";

import {
  ApiError,
  ConflictError,
  fetchAnnotations,
  fetchTiles,
  putAnnotations,
  tileImageUrl,
} from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("service client", () => {
  it("fetches and parses the tile listing", async () => {
    const listing = [
      {
        id: "t0",
        labeled: false,
        count: 0,
        label: "no cow",
        split: "train",
        revision: 0,
        width: 128,
        height: 128,
      },
    ];
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse(listing));
    vi.stubGlobal("fetch", fetchMock);
    expect(await fetchTiles()).toEqual(listing);
    expect(fetchMock).toHaveBeenCalledWith("/api/tiles", undefined);
  });

  it("turns a network failure into an ApiError instead of retrying", async () => {
    const fetchMock = vi.fn().mockRejectedValue(new TypeError("fetch failed"));
    vi.stubGlobal("fetch", fetchMock);
    await expect(fetchTiles()).rejects.toThrow(ApiError);
    await expect(fetchTiles()).rejects.toThrow(/unreachable/);
    expect(fetchMock).toHaveBeenCalledTimes(2); // once per call, no retry loop
  });

  it("fetches annotations for one tile", async () => {
    const body = {
      points: [{ x: 1.5, y: 2.5 }],
      label: "cow",
      revision: 4,
      width: 128,
      height: 128,
    };
    vi.stubGlobal("fetch", vi.fn().mockResolvedValue(jsonResponse(body)));
    expect(await fetchAnnotations("tile 7")).toEqual(body);
    expect(vi.mocked(fetch).mock.calls[0][0]).toBe(
      "/api/tiles/tile%207/annotations",
    );
  });

  it("resolves a successful PUT to the new revision", async () => {
    vi.stubGlobal("fetch", vi.fn().mockResolvedValue(jsonResponse({ revision: 5 })));
    const revision = await putAnnotations("t0", {
      points: [{ x: 1, y: 2 }],
      label: "cow",
      revision: 4,
    });
    expect(revision).toBe(5);
    const [url, init] = vi.mocked(fetch).mock.calls[0];
    expect(url).toBe("/api/tiles/t0/annotations");
    expect(init?.method).toBe("PUT");
    expect(JSON.parse(String(init?.body))).toEqual({
      points: [{ x: 1, y: 2 }],
      label: "cow",
      revision: 4,
    });
  });

  it("raises ConflictError carrying the server's revision on 409", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn().mockResolvedValue(
        jsonResponse({ detail: "revision mismatch", revision: 9 }, 409),
      ),
    );
    const attempt = putAnnotations("t0", { points: [], label: "no cow", revision: 2 });
    await expect(attempt).rejects.toMatchObject({
      name: "ConflictError",
      status: 409,
      revision: 9,
    });
  });

  it("surfaces other error statuses with the server's detail", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn().mockResolvedValue(jsonResponse({ detail: "unknown tile id" }, 404)),
    );
    await expect(fetchAnnotations("ghost")).rejects.toMatchObject({
      name: "ApiError",
      status: 404,
      message: "unknown tile id",
    });
  });

  it("builds image URLs that survive odd tile ids", () => {
    expect(tileImageUrl("a/b c")).toBe("/api/tiles/a%2Fb%20c/image");
  });
});
