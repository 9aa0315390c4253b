/** Flow tests against a recorded fake server. The assertions pin the
 * statelessness contract: every number handed to the view is the server's,
 * and parameter errors surface verbatim. */

import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { commitFlow, reclusterFlow } from "../src/flows.js";
import { initialState, selectClass } from "../src/state.js";

const EMBEDDING = {
  class: 1,
  points: [
    { idx: 0, x: 0.1, y: 0.2, cluster: 0, role: "core" },
    { idx: 1, x: 0.4, y: 0.1, cluster: -1, role: "noise" },
  ],
};
const SUMMARY = {
  classes: [
    { class: 0, total: 60, kept: 58, removed: 2, kept_pct: 96.66666666667 },
    { class: 1, total: 40, kept: 36, removed: 4, kept_pct: 90.0 },
  ],
  total: { n: 100, kept: 94, removed: 6, kept_pct: 94.0 },
};

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

function stubFetch(routes: Record<string, (init?: RequestInit) => Response>) {
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  vi.stubGlobal("fetch", (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    const key = Object.keys(routes).find((k) => url.startsWith(k));
    if (!key) {
      throw new Error(`unrouted request: ${url}`);
    }
    return Promise.resolve(routes[key](init));
  });
  return calls;
}

function readyState() {
  return selectClass(initialState(), 1, { eps: 0.5, min_pts: 5 });
}

describe("reclusterFlow", () => {
  it("posts the slider params and refreshes from server truth", async () => {
    const calls = stubFetch({
      "/api/cluster": () => jsonResponse({ class: 1, clusters: 2, noise_count: 4 }),
      "/api/embedding": () => jsonResponse(EMBEDDING),
      "/api/summary": () => jsonResponse(SUMMARY),
    });
    const { state, view } = await reclusterFlow(new ApiClient(), readyState());
    const posted = JSON.parse(String(calls[0].init?.body));
    expect(posted).toEqual({ class: 1, eps: 0.5, min_pts: 5 });
    // displayed counts are the response fields, untouched
    expect(state.status).toContain("2 clusters");
    expect(state.status).toContain("4 noise points");
    expect(state.points).toEqual(EMBEDDING.points);
    expect(view.summary).toEqual(SUMMARY);
    expect(state.pending).toBe(false);
  });

  it("surfaces 422 parameter rejections verbatim", async () => {
    stubFetch({
      "/api/cluster": () => jsonResponse({ detail: "eps must be > 0" }, 422),
    });
    const err = await reclusterFlow(new ApiClient(), readyState()).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(422);
    expect(err.state.status).toContain("422");
    expect(err.state.status).toContain("eps must be > 0");
    expect(err.state.pending).toBe(false);
  });

  it("identical params give identical responses (idempotent server)", async () => {
    stubFetch({
      "/api/cluster": () => jsonResponse({ class: 1, clusters: 3, noise_count: 1 }),
      "/api/embedding": () => jsonResponse(EMBEDDING),
      "/api/summary": () => jsonResponse(SUMMARY),
    });
    const a = await reclusterFlow(new ApiClient(), readyState());
    const b = await reclusterFlow(new ApiClient(), readyState());
    expect(a.state.status).toEqual(b.state.status);
    expect(a.view).toEqual(b.view);
  });
});

describe("commitFlow", () => {
  it("shows the manifest path and two-decimal kept percentage", async () => {
    stubFetch({
      "/api/commit": () =>
        jsonResponse({
          manifest_path: "/runs/manifest_x.json",
          summary: { total: 100, kept: 94, removed: 6, kept_pct: 94.0 },
        }),
      "/api/summary": () => jsonResponse(SUMMARY),
    });
    const { state, commit, summary } = await commitFlow(new ApiClient(), readyState());
    expect(commit.manifest_path).toBe("/runs/manifest_x.json");
    expect(state.status).toContain("/runs/manifest_x.json");
    expect(state.status).toContain("94.00%");
    expect(summary).toEqual(SUMMARY);
  });

  it("surfaces the 409 all-noise refusal", async () => {
    stubFetch({
      "/api/commit": () =>
        jsonResponse({ detail: "empty filtered dataset: every point is noise" }, 409),
    });
    const err = await commitFlow(new ApiClient(), readyState()).catch((e) => e);
    expect(err.status).toBe(409);
    expect(err.state.status).toContain("409");
    expect(err.state.status).toContain("every point is noise");
  });
});
