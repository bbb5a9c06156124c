/** Wire shapes returned by the gateway, plus the dashboard's own state. */

export interface ActivityEntry {
  action: string;
  user: string;
  at: string;
}

export interface EventDoc {
  name: string;
  display_name: string;
  keywords: string[];
  status: string;
  created_by: string;
  activity: ActivityEntry[];
}

export interface EventList {
  events: EventDoc[];
}

/** One stored tweet plus the batch file it came from. */
export interface TweetRow {
  file: string;
  tweet: Record<string, unknown>;
}

export interface TweetPage {
  event: string;
  total: number;
  page: number;
  page_size: number;
  tweets: TweetRow[];
}

export interface HistogramResponse {
  event: string;
  total: number;
  histogram: Record<string, number>;
}

export interface TagColor {
  hue: number;
  css: string;
}

export interface Annotation {
  event: string;
  tweet_id: string;
  tag: string;
  author: string;
  created_at: string;
  color: TagColor;
}

export interface QueryJob {
  job_id: string;
  event: string;
  pattern: string;
  created_at: string;
  row_count: number;
}

export interface QueryResultRow {
  tweet_id: string | null;
  created_at: string | null;
  screen_name: string | null;
  text: string | null;
  source_file: string;
}

export interface QueryResults extends QueryJob {
  page: number;
  page_size: number;
  rows: QueryResultRow[];
}

export interface ExportResponse {
  csv_key: string;
  rows: number;
}

export interface MentionRow {
  screen_name: string;
  count: number;
}

export interface MentionsPage {
  event: string;
  total: number;
  page: number;
  page_size: number;
  rows: MentionRow[];
}

export interface UserRecord {
  id: string;
  email: string;
  authorized: boolean;
  first_seen: string;
}

export interface UserList {
  users: UserRecord[];
}

export interface LoginResponse {
  token: string;
  user: UserRecord;
}

export type Tab = "browse" | "search" | "mentions" | "admin";

/** Hour-granular time window, both bounds inclusive YYYYMMDDHH. */
export interface TimeSlice {
  since: string;
  until: string;
}

/**
 * Everything a fetch may depend on. Data requests are derived from this
 * record (plus ids minted by earlier responses) and nothing else.
 */
export interface ViewState {
  token: string | null;
  user: string | null;
  event: string | null;
  tab: Tab;
  page: number;
  pageSize: number;
  slice: TimeSlice | null;
}

/** Last response per endpoint; null means not loaded for the current view. */
export interface AppData {
  events: EventDoc[] | null;
  tweets: TweetPage | null;
  histogram: HistogramResponse | null;
  annotations: Annotation[] | null;
  detail: { file: string; tweetId: string; text: string } | null;
  job: QueryJob | null;
  results: QueryResults | null;
  mentionsPending: boolean;
  mentions: MentionsPage | null;
  lastExport: ExportResponse | null;
  users: UserRecord[] | null;
}

/** Transient presentation flags; never drives a fetch. */
export interface UiState {
  toast: string | null;
  formError: string | null;
  expanded: { file: string; tweetId: string } | null;
  confirmRevoke: string | null;
}

export interface AppState {
  view: ViewState;
  data: AppData;
  ui: UiState;
}
