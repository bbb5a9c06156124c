/**
 * Browser entry point: owns the DOM, the store loop, and nothing else.
 * All rendering and state transitions live in pure modules; this file
 * forwards DOM events to actions and fetch results back into the store.
 */
import { Api, ApiError, GatewayClient, isAnalysisPending, requestKey, tokenSubject } from "./client.js";
import {
  binIndexAt,
  brushSlice,
  fetchPlan,
  initialState,
  reduce,
  visibleBins,
  type Action,
  type FetchSpec,
} from "./state.js";
import { renderPage } from "./render/page.js";
import type { AppState } from "./types.js";

declare global {
  interface Window {
    GATEWAY_BASE?: string;
  }
}

const base = window.GATEWAY_BASE ?? "";
const client = new GatewayClient(base);
const api = new Api(client);
const root = document.getElementById("app");
if (root === null) throw new Error("missing #app mount point");

let state: AppState = initialState();
const pending = new Set<string>();

function dispatch(action: Action): void {
  state = reduce(state, action);
  draw();
  void sync();
}

function draw(): void {
  root!.innerHTML = renderPage(state);
}

function toastError(err: unknown): void {
  const message =
    err instanceof ApiError ? `${err.status}: ${err.message}` : String(err);
  dispatch({ kind: "toast", message });
}

/** True when this request is still part of the plan for the current view. */
function stillWanted(spec: FetchSpec): boolean {
  const jobId = state.data.job?.job_id ?? null;
  return fetchPlan(state.view, { jobId }).some(
    (candidate) =>
      candidate.slot === spec.slot &&
      requestKey(candidate.path, candidate.params) ===
        requestKey(spec.path, spec.params),
  );
}

function applyResponse(spec: FetchSpec, body: unknown): void {
  switch (spec.slot) {
    case "events":
      dispatch({ kind: "events-loaded", events: (body as { events: never[] }).events });
      break;
    case "tweets":
      dispatch({ kind: "tweets-loaded", tweets: body as never });
      break;
    case "histogram":
      dispatch({ kind: "histogram-loaded", histogram: body as never });
      break;
    case "annotations":
      dispatch({
        kind: "annotations-loaded",
        annotations: (body as { annotations: never[] }).annotations,
      });
      break;
    case "results":
      dispatch({ kind: "results-loaded", results: body as never });
      break;
    case "mentions":
      dispatch({ kind: "mentions-loaded", mentions: body as never });
      break;
    case "users":
      dispatch({ kind: "users-loaded", users: (body as { users: never[] }).users });
      break;
  }
}

function slotEmpty(spec: FetchSpec): boolean {
  if (spec.slot === "mentions") {
    return state.data.mentions === null && !state.data.mentionsPending;
  }
  return state.data[spec.slot] === null;
}

async function sync(): Promise<void> {
  const jobId = state.data.job?.job_id ?? null;
  for (const spec of fetchPlan(state.view, { jobId })) {
    const key = requestKey(spec.path, spec.params);
    if (!slotEmpty(spec) || pending.has(key)) continue;
    pending.add(key);
    client
      .get(spec.path, spec.params)
      .then((body) => {
        if (stillWanted(spec)) applyResponse(spec, body);
      })
      .catch((err: unknown) => {
        if (spec.slot === "mentions" && isAnalysisPending(err)) {
          if (stillWanted(spec)) dispatch({ kind: "mentions-pending" });
        } else {
          toastError(err);
        }
      })
      .finally(() => {
        pending.delete(key);
        draw();
      });
  }
  await syncDetail();
}

async function syncDetail(): Promise<void> {
  const expanded = state.ui.expanded;
  const event = state.view.event;
  if (expanded === null || event === null) return;
  const detail = state.data.detail;
  if (
    detail !== null &&
    detail.file === expanded.file &&
    detail.tweetId === expanded.tweetId
  ) {
    return;
  }
  const key = `detail:${expanded.file}:${expanded.tweetId}`;
  if (pending.has(key)) return;
  pending.add(key);
  try {
    const text = await api.detail(event, expanded.file, expanded.tweetId);
    const current = state.ui.expanded;
    if (
      current !== null &&
      current.file === expanded.file &&
      current.tweetId === expanded.tweetId
    ) {
      dispatch({
        kind: "detail-loaded",
        file: expanded.file,
        tweetId: expanded.tweetId,
        text,
      });
    }
  } catch (err) {
    toastError(err);
  } finally {
    pending.delete(key);
  }
}

// -- writes ---------------------------------------------------------------------

async function createEvent(form: HTMLFormElement): Promise<void> {
  const fields = new FormData(form);
  const name = String(fields.get("name") ?? "").trim();
  const displayName = String(fields.get("display_name") ?? "").trim();
  const keywords = String(fields.get("keywords") ?? "")
    .split(",")
    .map((k) => k.trim())
    .filter((k) => k.length > 0);
  if (keywords.length === 0) {
    dispatch({ kind: "form-error", message: "keywords must contain at least one entry" });
    return;
  }
  try {
    await api.createEvent(name, displayName, keywords);
    dispatch({ kind: "form-error", message: null });
    dispatch({ kind: "invalidate-events" });
  } catch (err) {
    if (err instanceof ApiError) {
      dispatch({ kind: "form-error", message: err.message });
    } else {
      toastError(err);
    }
  }
}

async function setStatus(event: string, status: string): Promise<void> {
  try {
    await api.setStatus(event, status);
    dispatch({ kind: "invalidate-events" });
  } catch (err) {
    toastError(err);
  }
}

async function annotate(form: HTMLFormElement): Promise<void> {
  const event = state.view.event;
  const tweetId = form.dataset["tweetId"];
  if (event === null || tweetId === undefined) return;
  const tag = String(new FormData(form).get("tag") ?? "").trim();
  if (tag.length === 0) return;
  try {
    await api.annotate(event, tweetId, tag);
    const annotations = await api.annotations(event);
    dispatch({ kind: "annotations-loaded", annotations });
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      dispatch({ kind: "toast", message: `already tagged: ${err.message}` });
    } else {
      toastError(err);
    }
  }
}

async function submitQuery(form: HTMLFormElement): Promise<void> {
  const event = state.view.event;
  if (event === null) return;
  const pattern = String(new FormData(form).get("pattern") ?? "");
  try {
    const job = await api.submitQuery(event, pattern);
    dispatch({ kind: "job-submitted", job });
  } catch (err) {
    toastError(err);
  }
}

async function exportCsv(form: HTMLFormElement): Promise<void> {
  const event = state.view.event;
  const job = state.data.job;
  if (event === null || job === null) return;
  const fields = String(new FormData(form).get("fields") ?? "")
    .split(",")
    .map((f) => f.trim())
    .filter((f) => f.length > 0);
  try {
    const result = await api.exportCsv(event, fields, job.pattern);
    dispatch({ kind: "export-done", result });
  } catch (err) {
    toastError(err);
  }
}

async function runWorkflow(): Promise<void> {
  const event = state.view.event;
  if (event === null) return;
  try {
    await api.runWorkflow(event);
    dispatch({ kind: "invalidate-mentions" });
  } catch (err) {
    toastError(err);
  }
}

async function login(form: HTMLFormElement): Promise<void> {
  const user = String(new FormData(form).get("user") ?? "").trim();
  if (user.length === 0) return;
  try {
    const res = await api.login(user);
    client.token = res.token;
    dispatch({ kind: "session", token: res.token, user: res.user.id });
  } catch (err) {
    toastError(err);
  }
}

function useToken(form: HTMLFormElement): void {
  const token = String(new FormData(form).get("token") ?? "").trim();
  if (token.length === 0) return;
  client.token = token;
  dispatch({ kind: "session", token, user: tokenSubject(token) ?? "(token)" });
}

async function setAccess(userId: string, authorized: boolean): Promise<void> {
  try {
    await api.setAccess(userId, authorized);
    dispatch({ kind: "confirm-revoke", user: null });
    dispatch({ kind: "invalidate-users" });
  } catch (err) {
    toastError(err);
  }
}

// -- DOM wiring -------------------------------------------------------------------

root.addEventListener("click", (domEvent) => {
  const target = (domEvent.target as HTMLElement).closest<HTMLElement>("[data-action]");
  if (target === null) return;
  const data = target.dataset;
  switch (data["action"]) {
    case "set-tab":
      dispatch({ kind: "set-tab", tab: data["tab"] as never });
      break;
    case "select-event":
      dispatch({ kind: "select-event", event: data["event"] ?? null });
      break;
    case "set-page":
      dispatch({ kind: "set-page", page: Number(data["page"]) });
      break;
    case "set-status":
      void setStatus(data["event"] ?? "", data["status"] ?? "");
      break;
    case "clear-slice":
      dispatch({ kind: "set-slice", slice: null });
      break;
    case "toggle-expand":
      dispatch({
        kind: "toggle-expand",
        file: data["file"] ?? "",
        tweetId: data["tweetId"] ?? "",
      });
      break;
    case "run-workflow":
      void runWorkflow();
      break;
    case "ask-revoke":
      dispatch({ kind: "confirm-revoke", user: data["user"] ?? null });
      break;
    case "cancel-revoke":
      dispatch({ kind: "confirm-revoke", user: null });
      break;
    case "set-access":
      void setAccess(data["user"] ?? "", data["authorized"] === "true");
      break;
    case "use-token": {
      const form = target.closest("form");
      if (form !== null) useToken(form);
      break;
    }
    case "toast-dismiss":
      dispatch({ kind: "toast", message: null });
      break;
  }
});

root.addEventListener("submit", (domEvent) => {
  const form = domEvent.target as HTMLFormElement;
  domEvent.preventDefault();
  switch (form.id) {
    case "create-event":
      void createEvent(form);
      break;
    case "annotate":
      void annotate(form);
      break;
    case "submit-query":
      void submitQuery(form);
      break;
    case "export":
      void exportCsv(form);
      break;
    case "login":
      void login(form);
      break;
  }
});

// Brush: drag across the histogram, release to set the hour window.
let brushStart: number | null = null;

function binFromPointer(domEvent: PointerEvent): number | null {
  const svg = (domEvent.target as Element).closest<SVGSVGElement>("#histogram");
  if (svg === null) return null;
  const rect = svg.getBoundingClientRect();
  const count = Number(svg.dataset["bins"] ?? "0");
  return binIndexAt(domEvent.clientX - rect.left, rect.width, count);
}

root.addEventListener("pointerdown", (domEvent) => {
  const bin = binFromPointer(domEvent);
  if (bin !== null) brushStart = bin;
});

root.addEventListener("pointerup", (domEvent) => {
  if (brushStart === null) return;
  const start = brushStart;
  brushStart = null;
  const end = binFromPointer(domEvent);
  const histogram = state.data.histogram;
  if (end === null || histogram === null) return;
  const slice = brushSlice(visibleBins(histogram.histogram), start, end);
  if (slice !== null) dispatch({ kind: "set-slice", slice });
});

draw();
void sync();
