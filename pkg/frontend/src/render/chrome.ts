import type { AppState, Tab } from "../types.js";

export function escapeHtml(value: string): string {
  return value
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

export function escapeAttr(value: string): string {
  return escapeHtml(value);
}

/** 2023-09-01T12:34:56+00:00 -> 2023-09-01 12:34 */
export function fmtWhen(iso: string): string {
  return iso.slice(0, 16).replace("T", " ");
}

/** 2023090112 -> 09-01 12h, 20230901 -> 09-01 */
export function fmtBinKey(key: string): string {
  const day = `${key.slice(4, 6)}-${key.slice(6, 8)}`;
  return key.length >= 10 ? `${day} ${key.slice(8, 10)}h` : day;
}

const TABS: [Tab, string][] = [
  ["browse", "Browse"],
  ["search", "Search"],
  ["mentions", "Mentions"],
  ["admin", "Admin"],
];

export function renderTabs(state: AppState): string {
  const items = TABS.map(([tab, label]) => {
    const current = state.view.tab === tab ? " current" : "";
    return `<button class="tab${current}" data-action="set-tab" data-tab="${tab}">${label}</button>`;
  });
  return `<nav class="tabs">${items.join("")}</nav>`;
}

export function renderSession(state: AppState): string {
  if (state.view.user === null) {
    return `<span class="session">not signed in</span>`;
  }
  return `<span class="session">signed in as <strong>${escapeHtml(state.view.user)}</strong></span>`;
}

export function renderToast(state: AppState): string {
  if (state.ui.toast === null) return "";
  return `<div class="toast" data-action="toast-dismiss">${escapeHtml(state.ui.toast)}</div>`;
}

export function pagerControls(page: number, hasMore: boolean): string {
  const prev =
    page > 0
      ? `<button data-action="set-page" data-page="${page - 1}">&larr; prev</button>`
      : `<button disabled>&larr; prev</button>`;
  const next = hasMore
    ? `<button data-action="set-page" data-page="${page + 1}">next &rarr;</button>`
    : `<button disabled>next &rarr;</button>`;
  return `<div class="pager">${prev}<span class="page-no">page ${page}</span>${next}</div>`;
}
