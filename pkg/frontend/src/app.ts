// Browser shell: hash routing plus event delegation over the rendered
// HTML. All state changes go through controller transitions.

import { Client } from "./api.js";
import * as controller from "./controller.js";
import { buildFormView } from "./model.js";
import { renderApp } from "./render.js";

const client = new Client("");
const state = controller.initialState();
const root = document.getElementById("app") as HTMLElement;

function currentIncident(): string | null {
  const match = /^#\/incident\/(.+)$/.exec(window.location.hash);
  const id = match?.[1];
  return id === undefined ? null : decodeURIComponent(id);
}

function render(): void {
  const articleId = currentIncident();
  const view =
    articleId !== null && state.detail !== null && state.schema !== null &&
    state.detail.article_id === articleId
      ? buildFormView(state.detail, state.schema.fields)
      : null;
  root.innerHTML = renderApp(state, view);
}

async function route(): Promise<void> {
  const articleId = currentIncident();
  if (articleId === null) {
    state.detail = null;
    state.pendingAnswerable = null;
    await controller.loadIncidents(state, client, render);
  } else {
    await controller.openIncident(state, client, articleId, render);
  }
}

root.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const articleId = currentIncident();
  const dismiss = target.getAttribute("data-dismiss");
  if (dismiss !== null) {
    controller.dismissBanner(state, Number(dismiss));
    render();
    return;
  }
  if (articleId === null) return;
  const group = target.getAttribute("data-rerun");
  if (group !== null) {
    void controller.rerunGroup(state, client, articleId, group, render);
    return;
  }
  const annot = target.getAttribute("data-annot");
  if (annot !== null) {
    controller.toggleAnswerable(state, annot);
    return;
  }
  if (target.hasAttribute("data-save-annotations")) {
    void controller.saveAnnotations(state, client, articleId, render);
  }
});

window.addEventListener("hashchange", () => void route());
void route();
