import { tagColor } from "../color.js";
import { inSlice, visibleBins } from "../state.js";
import type { Annotation, AppState, TweetRow } from "../types.js";
import { escapeAttr, escapeHtml, fmtBinKey, pagerControls } from "./chrome.js";

export const CHART_WIDTH = 800;
export const CHART_HEIGHT = 120;

function histogramSvg(state: AppState): string {
  const histogram = state.data.histogram;
  if (histogram === null) return `<p class="loading">loading histogram&hellip;</p>`;
  const set = visibleBins(histogram.histogram);
  if (set.bins.length === 0) return `<p class="empty">No tweets stored yet.</p>`;

  const max = Math.max(...set.bins.map(([, count]) => count));
  const barWidth = CHART_WIDTH / set.bins.length;
  const bars = set.bins
    .map(([key, count], index) => {
      const height = max > 0 ? Math.max((count / max) * CHART_HEIGHT, 1) : 1;
      const x = (index * barWidth).toFixed(2);
      const y = (CHART_HEIGHT - height).toFixed(2);
      const cls = inSlice(key, state.view.slice) ? "bar in-slice" : "bar";
      return `<rect class="${cls}" data-bin="${index}" x="${x}" y="${y}" width="${barWidth.toFixed(2)}" height="${height.toFixed(2)}"><title>${fmtBinKey(key)}: ${count}</title></rect>`;
    })
    .join("");
  const note = set.truncated
    ? `<p class="note">Daily bars, oldest days cut to fit.</p>`
    : set.unit === "day"
      ? `<p class="note">Daily bars (too many hours to show).</p>`
      : "";
  return `<svg id="histogram" viewBox="0 0 ${CHART_WIDTH} ${CHART_HEIGHT}" data-unit="${set.unit}" data-bins="${set.bins.length}" preserveAspectRatio="none">${bars}</svg>${note}`;
}

function sliceControls(state: AppState): string {
  const slice = state.view.slice;
  if (slice === null) {
    return `<p class="slice-hint">Drag across the chart to zoom a time window.</p>`;
  }
  return `<p class="slice-label">Window ${fmtBinKey(slice.since)} &ndash; ${fmtBinKey(slice.until)}
    <button data-action="clear-slice">clear</button></p>`;
}

function chipRow(annotations: Annotation[], tweetId: string): string {
  const chips = annotations
    .filter((a) => a.tweet_id === tweetId)
    .map((a) => {
      const color = tagColor(a.tag);
      return `<span class="chip" style="background:${color.css}" title="by ${escapeAttr(a.author)}">${escapeHtml(a.tag)}</span>`;
    });
  return chips.length > 0 ? `<span class="chips">${chips.join("")}</span>` : "";
}

function tweetCells(row: TweetRow): { id: string; when: string; who: string; text: string } {
  const tweet = row.tweet;
  const user = tweet["user"];
  const who =
    typeof user === "object" && user !== null && "screen_name" in user
      ? String((user as { screen_name: unknown }).screen_name)
      : "?";
  return {
    id: typeof tweet["id_str"] === "string" ? tweet["id_str"] : "?",
    when: typeof tweet["created_at"] === "string" ? tweet["created_at"] : "?",
    who,
    text: typeof tweet["text"] === "string" ? tweet["text"] : "",
  };
}

function detailPanel(state: AppState, file: string, tweetId: string): string {
  const detail = state.data.detail;
  const body =
    detail !== null && detail.file === file && detail.tweetId === tweetId
      ? `<pre class="detail-json">${escapeHtml(prettyJson(detail.text))}</pre>`
      : `<p class="loading">loading detail&hellip;</p>`;
  return `<div class="detail">
    ${body}
    <form id="annotate" class="annotate" data-file="${escapeAttr(file)}" data-tweet-id="${escapeAttr(tweetId)}">
      <input name="tag" placeholder="tag this tweet" />
      <button type="submit">Annotate</button>
    </form>
  </div>`;
}

function prettyJson(text: string): string {
  try {
    return JSON.stringify(JSON.parse(text), null, 2);
  } catch {
    return text;
  }
}

function tweetTable(state: AppState): string {
  const page = state.data.tweets;
  if (page === null) return `<p class="loading">loading tweets&hellip;</p>`;
  if (page.tweets.length === 0) {
    return `<p class="empty">Nothing stored in this window.</p>`;
  }
  const annotations = state.data.annotations ?? [];
  const expanded = state.ui.expanded;
  const rows = page.tweets
    .map((row) => {
      const cells = tweetCells(row);
      const open =
        expanded !== null &&
        expanded.file === row.file &&
        expanded.tweetId === cells.id;
      const main = `<tr class="tweet${open ? " open" : ""}" data-action="toggle-expand" data-file="${escapeAttr(row.file)}" data-tweet-id="${escapeAttr(cells.id)}">
        <td class="id">${escapeHtml(cells.id)}</td>
        <td class="when">${escapeHtml(cells.when)}</td>
        <td class="who">@${escapeHtml(cells.who)}</td>
        <td class="text">${escapeHtml(cells.text)} ${chipRow(annotations, cells.id)}</td>
      </tr>`;
      const extra = open
        ? `<tr class="expanded"><td colspan="4">${detailPanel(state, row.file, cells.id)}</td></tr>`
        : "";
      return main + extra;
    })
    .join("");
  const seen = page.page * page.page_size + page.tweets.length;
  return `<table class="tweets">
    <thead><tr><th>id</th><th>created</th><th>user</th><th>text</th></tr></thead>
    <tbody>${rows}</tbody>
  </table>
  ${pagerControls(page.page, seen < page.total)}
  <p class="total">${page.total} tweet(s) in window</p>`;
}

export function renderBrowse(state: AppState): string {
  if (state.view.event === null) {
    return `<section class="pane"><p class="empty">Pick an event to browse.</p></section>`;
  }
  return `<section class="pane browse">
    <div class="chart">${histogramSvg(state)}${sliceControls(state)}</div>
    ${tweetTable(state)}
  </section>`;
}
