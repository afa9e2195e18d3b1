// Typed client for the review service under /api/v1. Response shapes
// mirror the service's JSON verbatim; no reshaping happens here.

export type AnswerKind = "text" | "digit" | "choice" | "unknown";

export interface AnswerEntry {
  type: AnswerKind;
  value: string | null;
  raw_model_text: string;
}

export interface VerdictEntry {
  key: string;
  verdict: "Match" | "Mismatch" | "NotAttempted" | "NoGroundTruth";
  rule_applied: string;
  answerable: boolean;
  has_ground_truth: boolean;
  gold: string | null;
  pred_text: string;
  article_id: string;
}

export interface IncidentSummary {
  article_id: string;
  matched_record_id: string | null;
  linkage_decision: string | null;
  has_form: boolean;
  n_answers: number;
  n_unknown: number;
}

export interface IncidentDetail {
  article_id: string;
  matched_record_id: string | null;
  linkage_decision: string | null;
  day_offset: number | null;
  form: Record<string, AnswerEntry> | null;
  verdicts: VerdictEntry[];
  grouping_used: Record<string, string[]> | null;
  answerable: string[] | null;
}

export interface RerunResponse {
  article_id: string;
  group: string;
  answers: Record<string, AnswerEntry>;
}

export interface AnswerPlaceSpec {
  answer_type: "text" | "digit" | "choice";
  choices?: Record<string, string>;
}

/** One schema entry; either layout may arrive depending on the stored file. */
export interface SchemaField {
  name: string;
  answer_places?: Record<string, AnswerPlaceSpec>;
  answer_type?: "text" | "digit" | "choice";
  choices?: Record<string, string>;
}

export interface SchemaResponse {
  fields: SchemaField[];
  grouping: Record<string, string[]> | null;
}

export interface ReportResponse {
  aggregate: Record<string, unknown> | null;
  per_article: Record<string, Record<string, unknown>>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** The slice of the service the app consumes; tests substitute fakes. */
export interface ReviewApi {
  listIncidents(): Promise<IncidentSummary[]>;
  getIncident(articleId: string): Promise<IncidentDetail>;
  getSchema(): Promise<SchemaResponse>;
  rerunGroup(articleId: string, group: string): Promise<RerunResponse>;
  putAnnotations(
    articleId: string,
    answerable: string[],
  ): Promise<{ article_id: string; answerable: string[] }>;
}

export class Client implements ReviewApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  listIncidents(): Promise<IncidentSummary[]> {
    return this.request("GET", "/api/v1/incidents");
  }

  getIncident(articleId: string): Promise<IncidentDetail> {
    return this.request("GET", `/api/v1/incidents/${encodeURIComponent(articleId)}`);
  }

  getSchema(): Promise<SchemaResponse> {
    return this.request("GET", "/api/v1/schema");
  }

  getReport(): Promise<ReportResponse> {
    return this.request("GET", "/api/v1/report");
  }

  rerunGroup(articleId: string, group: string): Promise<RerunResponse> {
    const path =
      `/api/v1/incidents/${encodeURIComponent(articleId)}` +
      `/groups/${encodeURIComponent(group)}/rerun`;
    return this.request("POST", path);
  }

  putAnnotations(articleId: string, answerable: string[]): Promise<{ article_id: string; answerable: string[] }> {
    const path = `/api/v1/incidents/${encodeURIComponent(articleId)}/annotations`;
    return this.request("PUT", path, { answerable });
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      throw await toApiError(response);
    }
    return (await response.json()) as T;
  }
}

async function toApiError(response: Response): Promise<ApiError> {
  let code = "http_error";
  let message = `HTTP ${response.status}`;
  try {
    const payload = await response.json();
    if (payload && typeof payload.code === "string") code = payload.code;
    if (payload && typeof payload.message === "string") message = payload.message;
    // FastAPI validation errors arrive as {detail: ...} instead
    else if (payload && payload.detail !== undefined) message = JSON.stringify(payload.detail);
  } catch {
    // non-JSON body; keep the status-line message
  }
  return new ApiError(response.status, code, message);
}
