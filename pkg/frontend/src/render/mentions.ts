import type { AppState } from "../types.js";
import { escapeHtml, pagerControls } from "./chrome.js";

export function renderMentions(state: AppState): string {
  if (state.view.event === null) {
    return `<section class="pane"><p class="empty">Pick an event to see mentions.</p></section>`;
  }
  if (state.data.mentionsPending) {
    return `<section class="pane mentions">
      <p class="pending">No mention counts yet for this event.</p>
      <button data-action="run-workflow">Run analysis now</button>
    </section>`;
  }
  const page = state.data.mentions;
  if (page === null) {
    return `<section class="pane mentions"><p class="loading">loading mentions&hellip;</p></section>`;
  }
  const offset = page.page * page.page_size;
  const rows = page.rows
    .map(
      (row, i) => `<tr>
        <td class="rank">${offset + i + 1}</td>
        <td>@${escapeHtml(row.screen_name)}</td>
        <td class="count">${row.count}</td>
      </tr>`,
    )
    .join("");
  const seen = offset + page.rows.length;
  return `<section class="pane mentions">
    <table class="mentions">
      <thead><tr><th>#</th><th>account</th><th>mentions</th></tr></thead>
      <tbody>${rows}</tbody>
    </table>
    ${pagerControls(page.page, seen < page.total)}
    <p class="total">${page.total} mentioned account(s)</p>
    <button data-action="run-workflow">Recompute</button>
  </section>`;
}
