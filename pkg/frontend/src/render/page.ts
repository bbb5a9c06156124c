import type { AppState } from "../types.js";
import { renderAdmin } from "./admin.js";
import { renderBrowse } from "./browse.js";
import { renderConsole } from "./console.js";
import { renderMentions } from "./mentions.js";
import { renderSearch } from "./search.js";
import { renderSession, renderTabs, renderToast } from "./chrome.js";

function activePane(state: AppState): string {
  switch (state.view.tab) {
    case "browse":
      return renderBrowse(state);
    case "search":
      return renderSearch(state);
    case "mentions":
      return renderMentions(state);
    case "admin":
      return renderAdmin(state);
  }
}

/** The whole screen as one string; rendering twice never differs. */
export function renderPage(state: AppState): string {
  return `<div class="layout">
    <header>
      <h1>crisisdesk</h1>
      ${renderTabs(state)}
      ${renderSession(state)}
    </header>
    <main>
      ${renderConsole(state)}
      ${activePane(state)}
    </main>
    ${renderToast(state)}
  </div>`;
}
