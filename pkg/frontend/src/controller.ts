// App state transitions, kept free of DOM access so they test headlessly.
// Every transition calls `notify` so the shell can re-render; state is
// only ever a projection of what the service returned.

import { ApiError, IncidentDetail, IncidentSummary, ReviewApi, SchemaResponse } from "./api.js";
import { applyGroupAnswers } from "./model.js";

export interface Banner {
  kind: "info" | "error";
  text: string;
}

export interface AppState {
  incidents: IncidentSummary[] | null;
  schema: SchemaResponse | null;
  detail: IncidentDetail | null;
  running: Set<string>;
  banners: Banner[];
  pendingAnswerable: Set<string> | null;
}

export function initialState(): AppState {
  return {
    incidents: null,
    schema: null,
    detail: null,
    running: new Set(),
    banners: [],
    pendingAnswerable: null,
  };
}

export function runKey(articleId: string, group: string): string {
  return `${articleId}|${group}`;
}

function pushBanner(state: AppState, kind: Banner["kind"], text: string): void {
  state.banners = [...state.banners, { kind, text }];
}

function bannerFor(articleId: string, group: string, err: unknown): Banner {
  if (err instanceof ApiError) {
    if (err.status === 409) {
      return { kind: "info", text: `Re-run of "${group}" is already running` };
    }
    if (err.status === 502) {
      return { kind: "error", text: `Model gateway fault while re-running "${group}": ${err.message}` };
    }
    return { kind: "error", text: `Re-run of "${group}" failed (${err.code}): ${err.message}` };
  }
  return { kind: "error", text: `Re-run of "${group}" failed: ${String(err)}` };
}

export async function loadIncidents(state: AppState, client: ReviewApi, notify: () => void): Promise<void> {
  try {
    state.incidents = await client.listIncidents();
  } catch (err) {
    pushBanner(state, "error", `Could not load incidents: ${String(err)}`);
  }
  notify();
}

export async function openIncident(
  state: AppState,
  client: ReviewApi,
  articleId: string,
  notify: () => void,
): Promise<void> {
  try {
    if (state.schema === null) state.schema = await client.getSchema();
    state.detail = await client.getIncident(articleId);
    state.pendingAnswerable =
      state.detail.answerable === null ? null : new Set(state.detail.answerable);
  } catch (err) {
    pushBanner(state, "error", `Could not load incident ${articleId}: ${String(err)}`);
  }
  notify();
}

export async function rerunGroup(
  state: AppState,
  client: ReviewApi,
  articleId: string,
  group: string,
  notify: () => void,
): Promise<void> {
  const key = runKey(articleId, group);
  if (state.running.has(key)) {
    // client-side single flight; the server enforces the same rule with 409
    pushBanner(state, "info", `Re-run of "${group}" is already running`);
    notify();
    return;
  }
  state.running = new Set(state.running).add(key);
  notify();
  try {
    const result = await client.rerunGroup(articleId, group);
    if (state.detail !== null && state.detail.article_id === articleId) {
      state.detail = applyGroupAnswers(state.detail, result.answers);
    }
    pushBanner(state, "info", `Group "${group}" re-ran with ${Object.keys(result.answers).length} answers`);
    notify();
    // verdicts are computed server-side; refresh so badges match the swap
    try {
      const fresh = await client.getIncident(articleId);
      if (state.detail !== null && state.detail.article_id === articleId) {
        state.detail = fresh;
      }
    } catch {
      // the swap already happened; stale badges surface on next open
    }
  } catch (err) {
    state.banners = [...state.banners, bannerFor(articleId, group, err)];
  } finally {
    const running = new Set(state.running);
    running.delete(key);
    state.running = running;
    notify();
  }
}

export function toggleAnswerable(state: AppState, key: string): void {
  const pending = new Set(state.pendingAnswerable ?? []);
  if (pending.has(key)) pending.delete(key);
  else pending.add(key);
  state.pendingAnswerable = pending;
}

export async function saveAnnotations(
  state: AppState,
  client: ReviewApi,
  articleId: string,
  notify: () => void,
): Promise<void> {
  if (state.pendingAnswerable === null) return;
  try {
    const saved = await client.putAnnotations(articleId, [...state.pendingAnswerable].sort());
    if (state.detail !== null && state.detail.article_id === articleId) {
      state.detail = { ...state.detail, answerable: saved.answerable };
      state.pendingAnswerable = new Set(saved.answerable);
    }
    pushBanner(state, "info", `Saved ${saved.answerable.length} answerable keys`);
  } catch (err) {
    pushBanner(state, "error", `Saving annotations failed: ${String(err)}`);
  }
  notify();
}

export function dismissBanner(state: AppState, index: number): void {
  state.banners = state.banners.filter((_, i) => i !== index);
}
