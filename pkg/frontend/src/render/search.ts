import type { AppState } from "../types.js";
import { escapeAttr, escapeHtml, pagerControls } from "./chrome.js";

function resultsTable(state: AppState): string {
  const job = state.data.job;
  if (job === null) return "";
  if (job.row_count === 0) {
    return `<p class="empty">No results for <code>${escapeHtml(job.pattern)}</code>.</p>`;
  }
  const results = state.data.results;
  if (results === null) return `<p class="loading">loading results&hellip;</p>`;
  const rows = results.rows
    .map(
      (row) => `<tr>
        <td>${escapeHtml(row.tweet_id ?? "")}</td>
        <td>${escapeHtml(row.created_at ?? "")}</td>
        <td>@${escapeHtml(row.screen_name ?? "")}</td>
        <td>${escapeHtml(row.text ?? "")}</td>
        <td class="file">${escapeHtml(row.source_file)}</td>
      </tr>`,
    )
    .join("");
  const seen = results.page * results.page_size + results.rows.length;
  return `<table class="results">
    <thead><tr><th>id</th><th>created</th><th>user</th><th>text</th><th>file</th></tr></thead>
    <tbody>${rows}</tbody>
  </table>
  ${pagerControls(results.page, seen < results.row_count)}`;
}

function exportControls(state: AppState): string {
  const job = state.data.job;
  if (job === null) return "";
  const last = state.data.lastExport;
  const done =
    last === null
      ? ""
      : `<p class="export-done">Wrote ${last.rows} row(s) to <code>${escapeHtml(last.csv_key)}</code></p>`;
  return `<form id="export" class="export">
    <input name="fields" value="id_str,created_at,user.screen_name,text" />
    <button type="submit">Export matching rows to CSV</button>
    ${done}
  </form>`;
}

export function renderSearch(state: AppState): string {
  if (state.view.event === null) {
    return `<section class="pane"><p class="empty">Pick an event to search.</p></section>`;
  }
  const job = state.data.job;
  const summary =
    job === null
      ? ""
      : `<p class="job-summary">Pattern <code>${escapeHtml(job.pattern)}</code>
          matched <strong>${job.row_count}</strong> row(s).</p>`;
  return `<section class="pane search">
    <form id="submit-query" class="query">
      <input name="pattern" placeholder="substring, matched case-insensitively" value="${escapeAttr(job?.pattern ?? "")}" />
      <button type="submit">Search stored tweets</button>
    </form>
    ${summary}
    ${resultsTable(state)}
    ${exportControls(state)}
  </section>`;
}
