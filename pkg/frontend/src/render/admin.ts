import type { AppState, UserRecord } from "../types.js";
import { escapeAttr, escapeHtml, fmtWhen } from "./chrome.js";

function accessCell(state: AppState, record: UserRecord): string {
  const id = escapeAttr(record.id);
  if (!record.authorized) {
    return `<button data-action="set-access" data-user="${id}" data-authorized="true">enable</button>`;
  }
  // Revoking your own session locks you out; make that a two-step click.
  if (record.id === state.view.user) {
    if (state.ui.confirmRevoke === record.id) {
      return `<span class="confirm">drops your own access!
        <button data-action="set-access" data-user="${id}" data-authorized="false">confirm</button>
        <button data-action="cancel-revoke">cancel</button></span>`;
    }
    return `<button data-action="ask-revoke" data-user="${id}">revoke</button>`;
  }
  return `<button data-action="set-access" data-user="${id}" data-authorized="false">revoke</button>`;
}

function usersTable(state: AppState): string {
  const users = state.data.users;
  if (users === null) return `<p class="loading">loading users&hellip;</p>`;
  const rows = users
    .map(
      (record) => `<tr>
        <td>${escapeHtml(record.id)}</td>
        <td>${escapeHtml(record.email)}</td>
        <td>${escapeHtml(fmtWhen(record.first_seen))}</td>
        <td>${record.authorized ? "authorized" : "blocked"}</td>
        <td>${accessCell(state, record)}</td>
      </tr>`,
    )
    .join("");
  return `<table class="users">
    <thead><tr><th>user</th><th>email</th><th>first seen</th><th>access</th><th></th></tr></thead>
    <tbody>${rows}</tbody>
  </table>`;
}

export function renderAdmin(state: AppState): string {
  const login = `<form id="login" class="login">
    <h3>Session</h3>
    <input name="user" placeholder="user id for a dev token" />
    <button type="submit">Sign in</button>
    <input name="token" placeholder="or paste an issued token" />
    <button type="button" data-action="use-token">Use token</button>
  </form>`;
  const body =
    state.view.token === null
      ? `<p class="empty">Sign in to manage users.</p>`
      : usersTable(state);
  return `<section class="pane admin">${login}${body}</section>`;
}
