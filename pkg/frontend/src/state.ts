import type {
  Annotation,
  AppData,
  AppState,
  EventDoc,
  ExportResponse,
  HistogramResponse,
  MentionsPage,
  QueryJob,
  QueryResults,
  Tab,
  TimeSlice,
  TweetPage,
  UserRecord,
  ViewState,
} from "./types.js";

export const DEFAULT_PAGE_SIZE = 25;

/** Hour bins beyond this are shown aggregated per day instead. */
export const MAX_VISIBLE_BINS = 1000;

export function initialView(): ViewState {
  return {
    token: null,
    user: null,
    event: null,
    tab: "browse",
    page: 0,
    pageSize: DEFAULT_PAGE_SIZE,
    slice: null,
  };
}

function emptyData(): AppData {
  return {
    events: null,
    tweets: null,
    histogram: null,
    annotations: null,
    detail: null,
    job: null,
    results: null,
    mentionsPending: false,
    mentions: null,
    lastExport: null,
    users: null,
  };
}

export function initialState(): AppState {
  return {
    view: initialView(),
    data: emptyData(),
    ui: { toast: null, formError: null, expanded: null, confirmRevoke: null },
  };
}

export type Action =
  | { kind: "set-tab"; tab: Tab }
  | { kind: "select-event"; event: string | null }
  | { kind: "set-page"; page: number }
  | { kind: "set-page-size"; pageSize: number }
  | { kind: "set-slice"; slice: TimeSlice | null }
  | { kind: "session"; token: string | null; user: string | null }
  | { kind: "events-loaded"; events: EventDoc[] }
  | { kind: "tweets-loaded"; tweets: TweetPage }
  | { kind: "histogram-loaded"; histogram: HistogramResponse }
  | { kind: "annotations-loaded"; annotations: Annotation[] }
  | { kind: "detail-loaded"; file: string; tweetId: string; text: string }
  | { kind: "job-submitted"; job: QueryJob }
  | { kind: "results-loaded"; results: QueryResults }
  | { kind: "mentions-loaded"; mentions: MentionsPage }
  | { kind: "mentions-pending" }
  | { kind: "export-done"; result: ExportResponse }
  | { kind: "users-loaded"; users: UserRecord[] }
  | { kind: "invalidate-events" }
  | { kind: "invalidate-tweets" }
  | { kind: "invalidate-mentions" }
  | { kind: "invalidate-users" }
  | { kind: "toggle-expand"; file: string; tweetId: string }
  | { kind: "toast"; message: string | null }
  | { kind: "form-error"; message: string | null }
  | { kind: "confirm-revoke"; user: string | null };

/** Wipe responses that were scoped to the previously selected event. */
function dropEventData(data: AppData): AppData {
  return {
    ...emptyData(),
    events: data.events,
    users: data.users,
  };
}

/** Wipe the page-shaped responses; totals and slices stay valid. */
function dropPageData(data: AppData): AppData {
  return { ...data, tweets: null, results: null, mentions: null };
}

export function reduce(state: AppState, action: Action): AppState {
  const { view, data, ui } = state;
  switch (action.kind) {
    case "set-tab":
      if (action.tab === view.tab) return state;
      return {
        view: { ...view, tab: action.tab, page: 0 },
        data: dropPageData(data),
        ui: { ...ui, toast: null, formError: null, confirmRevoke: null },
      };
    case "select-event":
      if (action.event === view.event) return state;
      return {
        view: { ...view, event: action.event, page: 0, slice: null },
        data: dropEventData(data),
        ui: { ...ui, expanded: null, toast: null },
      };
    case "set-page":
      if (action.page === view.page || action.page < 0) return state;
      return {
        view: { ...view, page: action.page },
        data: dropPageData(data),
        ui: { ...ui, expanded: null },
      };
    case "set-page-size":
      if (action.pageSize < 1 || action.pageSize > 1000) return state;
      return {
        view: { ...view, pageSize: action.pageSize, page: 0 },
        data: dropPageData(data),
        ui: { ...ui, expanded: null },
      };
    case "set-slice":
      return {
        view: { ...view, slice: action.slice, page: 0 },
        data: { ...data, tweets: null },
        ui: { ...ui, expanded: null },
      };
    case "session":
      return {
        view: { ...view, token: action.token, user: action.user },
        data: { ...data, users: null },
        ui: { ...ui, confirmRevoke: null },
      };
    case "events-loaded":
      return { ...state, data: { ...data, events: action.events } };
    case "tweets-loaded":
      return { ...state, data: { ...data, tweets: action.tweets } };
    case "histogram-loaded":
      return { ...state, data: { ...data, histogram: action.histogram } };
    case "annotations-loaded":
      return { ...state, data: { ...data, annotations: action.annotations } };
    case "detail-loaded":
      return {
        ...state,
        data: {
          ...data,
          detail: { file: action.file, tweetId: action.tweetId, text: action.text },
        },
      };
    case "job-submitted":
      return {
        view: { ...view, page: 0 },
        data: { ...data, job: action.job, results: null },
        ui: { ...ui, formError: null },
      };
    case "results-loaded":
      return { ...state, data: { ...data, results: action.results } };
    case "mentions-loaded":
      return {
        ...state,
        data: { ...data, mentions: action.mentions, mentionsPending: false },
      };
    case "mentions-pending":
      return {
        ...state,
        data: { ...data, mentions: null, mentionsPending: true },
      };
    case "export-done":
      return { ...state, data: { ...data, lastExport: action.result } };
    case "users-loaded":
      return { ...state, data: { ...data, users: action.users } };
    case "invalidate-events":
      return { ...state, data: { ...data, events: null } };
    case "invalidate-tweets":
      return {
        ...state,
        data: { ...data, tweets: null, histogram: null, annotations: null },
      };
    case "invalidate-mentions":
      return {
        ...state,
        data: { ...data, mentions: null, mentionsPending: false },
      };
    case "invalidate-users":
      return { ...state, data: { ...data, users: null } };
    case "toggle-expand": {
      const same =
        ui.expanded !== null &&
        ui.expanded.file === action.file &&
        ui.expanded.tweetId === action.tweetId;
      return {
        ...state,
        data: same ? data : { ...data, detail: null },
        ui: {
          ...ui,
          expanded: same ? null : { file: action.file, tweetId: action.tweetId },
        },
      };
    }
    case "toast":
      return { ...state, ui: { ...ui, toast: action.message } };
    case "form-error":
      return { ...state, ui: { ...ui, formError: action.message } };
    case "confirm-revoke":
      return { ...state, ui: { ...ui, confirmRevoke: action.user } };
  }
}

// -- histogram bins -----------------------------------------------------------

export interface BinSet {
  /** Granularity of the visible bars. */
  unit: "hour" | "day";
  /** Ascending (key, count) pairs; keys are YYYYMMDDHH or YYYYMMDD. */
  bins: [string, number][];
  /** True when even daily bars exceeded the cap and the oldest were cut. */
  truncated: boolean;
}

/**
 * Reduce a raw hour histogram to at most MAX_VISIBLE_BINS bars. Hour keys
 * sort chronologically as strings, so plain lexicographic order is the
 * time order. Past the cap, hours collapse into day totals.
 */
export function visibleBins(histogram: Record<string, number>): BinSet {
  const hours = Object.keys(histogram).sort();
  if (hours.length <= MAX_VISIBLE_BINS) {
    return {
      unit: "hour",
      bins: hours.map((k) => [k, histogram[k] ?? 0]),
      truncated: false,
    };
  }
  const days = new Map<string, number>();
  for (const key of hours) {
    const day = key.slice(0, 8);
    days.set(day, (days.get(day) ?? 0) + (histogram[key] ?? 0));
  }
  let bins: [string, number][] = [...days.entries()];
  let truncated = false;
  if (bins.length > MAX_VISIBLE_BINS) {
    bins = bins.slice(bins.length - MAX_VISIBLE_BINS);
    truncated = true;
  }
  return { unit: "day", bins, truncated };
}

/** Map a pixel offset inside the chart to a bin index, clamped to range. */
export function binIndexAt(x: number, width: number, count: number): number {
  if (count <= 0 || width <= 0) return 0;
  const index = Math.floor((x / width) * count);
  return Math.min(Math.max(index, 0), count - 1);
}

/**
 * Turn a brushed bin range into an inclusive hour window. Day bars expand
 * to their first and last hours, so the bounds are always whole hours.
 */
export function brushSlice(set: BinSet, a: number, b: number): TimeSlice | null {
  if (set.bins.length === 0) return null;
  const lo = Math.min(Math.max(Math.min(a, b), 0), set.bins.length - 1);
  const hi = Math.min(Math.max(Math.max(a, b), 0), set.bins.length - 1);
  const first = set.bins[lo]![0];
  const last = set.bins[hi]![0];
  if (set.unit === "hour") {
    return { since: first, until: last };
  }
  return { since: `${first}00`, until: `${last}23` };
}

/** True when an hour key (or a bar key of either unit) falls in the slice. */
export function inSlice(key: string, slice: TimeSlice | null): boolean {
  if (slice === null) return true;
  const asHourStart = key.length === 8 ? `${key}00` : key;
  const asHourEnd = key.length === 8 ? `${key}23` : key;
  return asHourEnd >= slice.since && asHourStart <= slice.until;
}

// -- fetch planning -----------------------------------------------------------

export interface FetchSpec {
  /** Slot in AppData the response lands in. */
  slot: "events" | "tweets" | "histogram" | "annotations" | "results" | "mentions" | "users";
  path: string;
  params: Record<string, string>;
}

/**
 * Every read the current view needs, as a pure function of the view plus
 * ids minted by earlier responses (the submitted query job). Nothing else
 * feeds a request, which keeps refetching deterministic.
 */
export function fetchPlan(view: ViewState, ctx: { jobId: string | null }): FetchSpec[] {
  const plan: FetchSpec[] = [{ slot: "events", path: "/events/", params: {} }];
  const paging = {
    page: String(view.page),
    page_size: String(view.pageSize),
  };
  if (view.event !== null) {
    const event = view.event;
    if (view.tab === "browse") {
      const params: Record<string, string> = { ...paging };
      if (view.slice !== null) {
        params["since"] = view.slice.since;
        params["until"] = view.slice.until;
      }
      plan.push({ slot: "tweets", path: `/tweets/${event}/`, params });
      plan.push({ slot: "histogram", path: `/tweets/${event}/histogram`, params: {} });
      plan.push({ slot: "annotations", path: `/events/${event}/annotations/`, params: {} });
    }
    if (view.tab === "search" && ctx.jobId !== null) {
      plan.push({
        slot: "results",
        path: `/filter/${event}/results/${ctx.jobId}`,
        params: { ...paging },
      });
    }
    if (view.tab === "mentions") {
      plan.push({ slot: "mentions", path: `/mentions/${event}/`, params: { ...paging } });
    }
  }
  if (view.tab === "admin" && view.token !== null) {
    plan.push({ slot: "users", path: "/users/", params: {} });
  }
  return plan;
}
