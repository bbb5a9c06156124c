import type { AppState, EventDoc } from "../types.js";
import { escapeAttr, escapeHtml, fmtWhen } from "./chrome.js";

function statusChip(status: string): string {
  const cls = status === "ACTIVE" ? "status active" : "status stopped";
  return `<span class="${cls}">${escapeHtml(status)}</span>`;
}

function eventRow(doc: EventDoc, selected: boolean): string {
  const name = escapeAttr(doc.name);
  const current = selected ? " selected" : "";
  const toggle =
    doc.status === "ACTIVE"
      ? `<button data-action="set-status" data-event="${name}" data-status="STOPPED">stop</button>`
      : `<button data-action="set-status" data-event="${name}" data-status="ACTIVE">start</button>`;
  return `<li class="event-row${current}">
    <button class="event-pick" data-action="select-event" data-event="${name}">${escapeHtml(doc.display_name)}</button>
    ${statusChip(doc.status)}
    <span class="keywords">${doc.keywords.map(escapeHtml).join(", ")}</span>
    <span class="owner">by ${escapeHtml(doc.created_by)}</span>
    ${toggle}
  </li>`;
}

/** Newest entries first; the log itself is stored oldest first. */
function activityLog(doc: EventDoc): string {
  const rows = [...doc.activity]
    .reverse()
    .map(
      (entry) =>
        `<li><code>${escapeHtml(entry.action)}</code> by ${escapeHtml(entry.user)} at ${escapeHtml(fmtWhen(entry.at))}</li>`,
    );
  return `<ul class="activity">${rows.join("")}</ul>`;
}

export function renderConsole(state: AppState): string {
  const events = state.data.events;
  const list =
    events === null
      ? `<p class="loading">loading events&hellip;</p>`
      : events.length === 0
        ? `<p class="empty">No events yet.</p>`
        : `<ul class="events">${events
            .map((doc) => eventRow(doc, doc.name === state.view.event))
            .join("")}</ul>`;

  const selected =
    events !== null && state.view.event !== null
      ? events.find((doc) => doc.name === state.view.event)
      : undefined;
  const detail =
    selected === undefined
      ? ""
      : `<section class="event-detail">
          <h3>${escapeHtml(selected.display_name)} activity</h3>
          ${activityLog(selected)}
        </section>`;

  const formError =
    state.ui.formError === null
      ? ""
      : `<p class="form-error">${escapeHtml(state.ui.formError)}</p>`;

  return `<aside class="console">
    <h2>Events</h2>
    ${list}
    ${detail}
    <form id="create-event" class="create-event">
      <h3>New event</h3>
      <input name="name" placeholder="slug (e.g. river-flood)" />
      <input name="display_name" placeholder="display name" />
      <input name="keywords" placeholder="keywords, comma separated" />
      ${formError}
      <button type="submit">Create</button>
    </form>
  </aside>`;
}
