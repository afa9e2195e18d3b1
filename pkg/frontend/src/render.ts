// HTML string renderers. Pure functions of state so a refresh that
// refetches the same API responses reproduces the identical page.

import type { IncidentSummary } from "./api.js";
import type { AppState, Banner } from "./controller.js";
import { runKey } from "./controller.js";
import type { FormView, GroupView, PlaceCell } from "./model.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderBanners(banners: Banner[]): string {
  if (banners.length === 0) return "";
  const items = banners
    .map(
      (banner, i) =>
        `<div class="banner banner-${banner.kind}" role="status">` +
        `<span>${escapeHtml(banner.text)}</span>` +
        `<button type="button" data-dismiss="${i}">dismiss</button></div>`,
    )
    .join("");
  return `<div class="banners">${items}</div>`;
}

export function renderIncidentList(incidents: IncidentSummary[]): string {
  if (incidents.length === 0) {
    return `<section class="empty-state"><h1>Form 57 review</h1>` +
      `<p>No incidents in this state directory yet.</p></section>`;
  }
  const rows = incidents
    .map((incident) => {
      const id = escapeHtml(incident.article_id);
      const linkage =
        incident.matched_record_id !== null
          ? escapeHtml(incident.matched_record_id)
          : escapeHtml(incident.linkage_decision ?? "unlinked");
      const form = incident.has_form
        ? `${incident.n_answers} answers, ${incident.n_unknown} unknown`
        : "no form";
      return (
        `<tr class="incident-row" data-incident="${id}">` +
        `<td><a href="#/incident/${encodeURIComponent(incident.article_id)}">${id}</a></td>` +
        `<td>${linkage}</td><td>${form}</td></tr>`
      );
    })
    .join("");
  return (
    `<section class="incident-list"><h1>Form 57 review</h1>` +
    `<table><thead><tr><th>Article</th><th>FRA record</th><th>Extraction</th></tr></thead>` +
    `<tbody>${rows}</tbody></table></section>`
  );
}

function renderLinkageBanner(view: FormView): string {
  const { decision, recordId, dayOffset } = view.linkage;
  if (decision === "matched" && recordId !== null) {
    const offset = dayOffset === null ? "" : `, filed ${dayOffset} day(s) before the article`;
    return `<div class="linkage linkage-matched">Matched FRA record ` +
      `<strong>${escapeHtml(recordId)}</strong>${escapeHtml(offset)}</div>`;
  }
  if (decision === "ambiguous") {
    return `<div class="linkage linkage-ambiguous">Multiple FRA records are plausible; unresolved</div>`;
  }
  return `<div class="linkage linkage-unmatched">No FRA record matched</div>`;
}

function verdictBadge(cell: PlaceCell): string {
  if (cell.verdict === null) return "";
  return `<span class="badge badge-${cell.verdict.toLowerCase()}">${cell.verdict}</span>`;
}

function renderCellRow(fieldName: string, span: number, cell: PlaceCell, first: boolean, checked: boolean): string {
  const classes = cell.unknown ? "cell unknown" : "cell";
  const provenance = cell.entry === null ? "" : cell.entry.raw_model_text;
  const fieldCell = first
    ? `<td class="field-name" rowspan="${span}">${escapeHtml(fieldName)}</td>`
    : "";
  const flag = cell.unknown ? `<span class="flag">Unknown</span>` : "";
  return (
    `<tr>${fieldCell}<td>${escapeHtml(cell.placeName)}</td>` +
    `<td class="${classes}" data-key="${escapeHtml(cell.key)}" title="${escapeHtml(provenance)}">` +
    `${escapeHtml(cell.display)}${flag}</td>` +
    `<td>${verdictBadge(cell)}</td>` +
    `<td><input type="checkbox" data-annot="${escapeHtml(cell.key)}"${checked ? " checked" : ""}></td></tr>`
  );
}

function renderGroup(group: GroupView, view: FormView, state: AppState): string {
  const running = state.running.has(runKey(view.articleId, group.name));
  const button = running
    ? `<button type="button" class="rerun running" data-rerun="${escapeHtml(group.name)}" disabled>running</button>`
    : `<button type="button" class="rerun" data-rerun="${escapeHtml(group.name)}">Re-run group</button>`;
  const pending = state.pendingAnswerable ?? new Set<string>();
  const rows = group.fields
    .map((field) =>
      field.cells
        .map((cell, i) =>
          renderCellRow(field.name, field.cells.length, cell, i === 0, pending.has(cell.key)),
        )
        .join(""),
    )
    .join("");
  return (
    `<section class="group" data-group="${escapeHtml(group.name)}">` +
    `<header><h2>${escapeHtml(group.name)}</h2>${button}</header>` +
    `<table><thead><tr><th>Field</th><th>Place</th><th>Answer</th>` +
    `<th>Verdict</th><th>Answerable</th></tr></thead>` +
    `<tbody>${rows}</tbody></table></section>`
  );
}

export function renderIncident(view: FormView, state: AppState): string {
  const header =
    `<header class="incident-header"><a href="#/">all incidents</a>` +
    `<h1>${escapeHtml(view.articleId)}</h1></header>`;
  if (!view.hasForm) {
    return `${header}${renderLinkageBanner(view)}` +
      `<p class="empty-state">No extracted form for this incident yet.</p>`;
  }
  const groups = view.groups.map((group) => renderGroup(group, view, state)).join("");
  const save = `<button type="button" class="save-annotations" data-save-annotations>Save annotations</button>`;
  return `${header}${renderLinkageBanner(view)}${groups}${save}`;
}

export function renderApp(state: AppState, view: FormView | null): string {
  const body =
    view !== null
      ? renderIncident(view, state)
      : state.incidents !== null
        ? renderIncidentList(state.incidents)
        : `<p class="loading">loading</p>`;
  return `${renderBanners(state.banners)}${body}`;
}
