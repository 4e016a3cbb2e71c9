import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, ConnectionError, StudioApi } from "../src/api.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("StudioApi", () => {
  it("sends the bearer token on requests once set", async () => {
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse(200, { models: [] }));
    vi.stubGlobal("fetch", fetchMock);
    const api = new StudioApi("", "s3cret");
    await api.models();
    const [, init] = fetchMock.mock.calls[0];
    expect(init.headers.authorization).toBe("Bearer s3cret");
  });

  it("sends no auth header without a token", async () => {
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse(200, { models: [] }));
    vi.stubGlobal("fetch", fetchMock);
    await new StudioApi().models();
    const [, init] = fetchMock.mock.calls[0];
    expect("authorization" in init.headers).toBe(false);
  });

  it("lifts service error bodies into ApiError with code and detail", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn().mockResolvedValue(jsonResponse(409, { error: "OutOfOrder", detail: "submit first" })),
    );
    const err = await new StudioApi().getReport("r1").catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(409);
    expect((err as ApiError).code).toBe("OutOfOrder");
    expect((err as ApiError).detail).toBe("submit first");
  });

  it("wraps transport failures in ConnectionError", async () => {
    vi.stubGlobal("fetch", vi.fn().mockRejectedValue(new TypeError("fetch failed")));
    const err = await new StudioApi().health().catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ConnectionError);
  });

  it("asks for a partial report through the query string", async () => {
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse(200, { partial: true }));
    vi.stubGlobal("fetch", fetchMock);
    await new StudioApi().getReport("r1", true);
    expect(fetchMock.mock.calls[0][0]).toBe("/v1/runs/r1/report?partial=true");
  });

  it("posts job bodies as JSON", async () => {
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse(200, { job_id: "j1" }));
    vi.stubGlobal("fetch", fetchMock);
    await new StudioApi().createJob({ dataset_id: "d", config_id: "c", model: "m", params: { a: 1 } });
    const [path, init] = fetchMock.mock.calls[0];
    expect(path).toBe("/v1/jobs");
    expect(init.headers["content-type"]).toBe("application/json");
    expect(JSON.parse(init.body)).toEqual({ dataset_id: "d", config_id: "c", model: "m", params: { a: 1 } });
  });
});
