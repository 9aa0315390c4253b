/** Interaction flows. Each flow issues requests and returns fresh server
 * truth; nothing is recomputed or optimistically patched on the client. */

import { ApiClient, ApiError, CommitResponse, EmbeddingResponse, SummaryResponse } from "./api.js";
import { ViewState, beginMutation, endMutation, sliderParams } from "./state.js";

export interface RefreshResult {
  embedding: EmbeddingResponse;
  summary: SummaryResponse;
}

export async function refreshView(api: ApiClient, cls: number): Promise<RefreshResult> {
  const [embedding, summary] = await Promise.all([api.getEmbedding(cls), api.getSummary()]);
  return { embedding, summary };
}

/** POST /api/cluster for the selected class, then re-pull scatter and
 * summary. Errors (422 parameter rejections included) surface verbatim. */
export async function reclusterFlow(
  api: ApiClient,
  state: ViewState,
): Promise<{ state: ViewState; view: RefreshResult }> {
  if (state.selectedClass === null) {
    throw new Error("no class selected");
  }
  const cls = state.selectedClass;
  let next = beginMutation(state);
  try {
    const params = sliderParams(next);
    const result = await api.recluster(cls, params);
    const view = await refreshView(api, cls);
    next = endMutation(
      next,
      `class ${result.class}: ${result.clusters} clusters, ${result.noise_count} noise points`,
    );
    return { state: { ...next, points: view.embedding.points, summary: view.summary }, view };
  } catch (err) {
    next = endMutation(next, describeError(err));
    throw Object.assign(err as Error, { state: next });
  }
}

/** POST /api/commit and return the manifest path plus refreshed summary. */
export async function commitFlow(
  api: ApiClient,
  state: ViewState,
): Promise<{ state: ViewState; commit: CommitResponse; summary: SummaryResponse }> {
  let next = beginMutation(state);
  try {
    const commit = await api.commit();
    const summary = await api.getSummary();
    next = endMutation(
      next,
      `manifest written: ${commit.manifest_path} (kept ${commit.summary.kept_pct.toFixed(2)}%)`,
    );
    return { state: { ...next, summary }, commit, summary };
  } catch (err) {
    next = endMutation(next, describeError(err));
    throw Object.assign(err as Error, { state: next });
  }
}

export function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    return `server refused (${err.status}): ${err.detail}`;
  }
  return err instanceof Error ? err.message : String(err);
}
