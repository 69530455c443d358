// HTTP client behavior against a scripted fetch: payload shapes, error
// mapping, and the 409 refetch-and-reapply loop.
import { describe, expect, it } from "vitest";

import {
  ApiError,
  VersionConflict,
  WorldsmithClient,
  type FetchLike,
  type SessionDoc,
} from "../src/api.js";

interface Call {
  url: string;
  method: string;
  body: unknown;
}

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

function sessionDoc(version: number): SessionDoc {
  return { session_id: "s1", version } as unknown as SessionDoc;
}

/** Fetch stub that replays a script of responses and records every call. */
function scripted(responses: Response[]): { fetch: FetchLike; calls: Call[] } {
  const calls: Call[] = [];
  const fetchImpl: FetchLike = async (url, init) => {
    calls.push({
      url,
      method: init?.method ?? "GET",
      body: init?.body ? JSON.parse(init.body as string) : undefined,
    });
    const next = responses.shift();
    if (!next) throw new Error("fetch script exhausted");
    return next;
  };
  return { fetch: fetchImpl, calls };
}

describe("request shapes", () => {
  it("sends versioned bodies with snake_case fields", async () => {
    const { fetch, calls } = scripted([jsonResponse(200, sessionDoc(4))]);
    const client = new WorldsmithClient("http://example.test/", fetch);
    await client.patchInputs("s1", 3, {
      tile_id: "t2",
      set: { scene_prompt: "a brass gate", seed: 7 },
    });
    expect(calls[0]!.url).toBe("http://example.test/api/sessions/s1/inputs");
    expect(calls[0]!.method).toBe("PATCH");
    expect(calls[0]!.body).toEqual({
      expected_version: 3,
      tile_id: "t2",
      set: { scene_prompt: "a brass gate", seed: 7 },
    });
  });

  it("builds image URLs with an optional thumbnail switch", () => {
    const client = new WorldsmithClient("http://example.test");
    expect(client.imageUrl("s1", "a".repeat(64))).toBe(
      `http://example.test/api/sessions/s1/images/${"a".repeat(64)}`,
    );
    expect(client.imageUrl("s1", "a".repeat(64), true)).toContain("?thumb=1");
  });
});

describe("error mapping", () => {
  it("surfaces the server detail string", async () => {
    const { fetch } = scripted([jsonResponse(404, { detail: "unknown session 'nope'" })]);
    const client = new WorldsmithClient("http://example.test", fetch);
    const err = await client.getSession("nope").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err).not.toBeInstanceOf(VersionConflict);
    expect(err.status).toBe(404);
    expect(err.detail).toBe("unknown session 'nope'");
  });

  it("maps 409 to VersionConflict", async () => {
    const { fetch } = scripted([jsonResponse(409, { detail: "expected version 2, is 5" })]);
    const client = new WorldsmithClient("http://example.test", fetch);
    const err = await client
      .generate("s1", "t0", 2)
      .catch((e) => e);
    expect(err).toBeInstanceOf(VersionConflict);
  });
});

describe("conflict recovery", () => {
  it("refetches the session and reapplies on 409", async () => {
    const { fetch, calls } = scripted([
      jsonResponse(200, sessionDoc(2)), // initial GET
      jsonResponse(409, { detail: "expected version 2, is 5" }),
      jsonResponse(200, sessionDoc(5)), // refetch
      jsonResponse(200, { job_id: "j1", version: 6 }),
    ]);
    const client = new WorldsmithClient("http://example.test", fetch);
    const attempts: number[] = [];
    const job = await client.withFreshVersion("s1", (doc) => {
      attempts.push(doc.version);
      return client.generate(doc.session_id, "t0", doc.version);
    });
    expect(job).toEqual({ job_id: "j1", version: 6 });
    expect(attempts).toEqual([2, 5]);
    expect(calls.map((c) => c.method)).toEqual(["GET", "POST", "GET", "POST"]);
    expect(calls[3]!.body).toEqual({ expected_version: 5 });
  });

  it("passes non-conflict errors straight through", async () => {
    const { fetch, calls } = scripted([
      jsonResponse(200, sessionDoc(2)),
      jsonResponse(422, { detail: "tile has no scene prompt" }),
    ]);
    const client = new WorldsmithClient("http://example.test", fetch);
    const err = await client
      .withFreshVersion("s1", (doc) => client.generate("s1", "t0", doc.version))
      .catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(422);
    expect(calls).toHaveLength(2); // no retry, no refetch
  });

  it("gives up after the retry budget", async () => {
    const conflict = () => jsonResponse(409, { detail: "stale" });
    const { fetch, calls } = scripted([
      jsonResponse(200, sessionDoc(1)),
      conflict(),
      jsonResponse(200, sessionDoc(2)),
      conflict(),
      jsonResponse(200, sessionDoc(3)),
      conflict(),
    ]);
    const client = new WorldsmithClient("http://example.test", fetch);
    const err = await client
      .withFreshVersion("s1", (doc) => client.generate("s1", "t0", doc.version), 2)
      .catch((e) => e);
    expect(err).toBeInstanceOf(VersionConflict);
    expect(calls).toHaveLength(6);
  });
});
