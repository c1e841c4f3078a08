// ============================================================
// REST client
//
// Thin typed wrapper over the workbench HTTP API.  Every payload
// shape here mirrors the JSON the service emits; the frontend never
// computes protocol semantics on its own, it only displays what the
// service returns.
// ============================================================

export interface ApiErrorBody {
  code: string;
  message: string;
  location?: string | null;
}

export class ApiRequestError extends Error {
  readonly status: number;
  readonly body: ApiErrorBody;

  constructor(status: number, body: ApiErrorBody) {
    super(`${body.code}: ${body.message}`);
    this.name = "ApiRequestError";
    this.status = status;
    this.body = body;
  }
}

export interface ConstraintJson {
  coeffs: Record<string, number>;
  op: string;
  const: number;
}

export interface CertificateJson {
  weights: Record<string, number>;
}

export interface TransitionJson {
  name: string;
  pre: string[];
  post: string[];
}

export interface ProtocolInfo {
  id: string;
  name: string;
  description?: string | null;
  states: string[];
  initial: string[];
  output: Record<string, number>;
  transitions: TransitionJson[];
  predicate: ConstraintJson;
}

export interface StageJson {
  id: string;
  constraints: ConstraintJson[];
  certificate: CertificateJson | null;
  dead: string[];
  eventually_dead: string[];
  speed: string | null;
  witness: Record<string, number> | null;
  incomplete: boolean;
}

export interface StageGraphJson {
  format_version: number;
  output_value: number;
  stages: StageJson[];
  edges: string[][];
}

export interface ObligationJson {
  kind: string;
  subject: string;
  status: string;
  bound: number | null;
  witness: Record<string, number> | null;
  detail: string | null;
}

export interface CheckReportJson {
  output_value: number;
  n_cert: number;
  verdict: string;
  obligations: ObligationJson[];
}

export interface RunStepJson {
  config: Record<string, number>;
  transition: string | null;
}

export interface VerifyResponse {
  protocol_id: string;
  outcome: string;
  graphs: StageGraphJson[];
  reports: CheckReportJson[];
  run: RunStepJson[] | null;
  reason: string | null;
}

export interface StageGraphsResponse {
  protocol_id: string;
  outcome: string;
  graphs: StageGraphJson[];
}

export interface StageDetail {
  protocol_id: string;
  graph_output_value: number;
  id: string;
  constraints: ConstraintJson[];
  certificate: CertificateJson | null;
  certificate_value: number | null;
  config: Record<string, number> | null;
  config_in_stage: boolean | null;
  dead: string[];
  eventually_dead: string[];
  speed: string | null;
  witness: Record<string, number> | null;
  terminal: boolean;
  incomplete: boolean;
}

export interface SessionNodeJson {
  id: string;
  counts: Record<string, number>;
  placements: (string | null)[];
}

export interface SessionEdgeJson {
  from: string;
  transition: string;
  to: string;
}

export interface SessionSnapshot {
  id: string;
  protocol_id: string;
  seed: number;
  nodes: SessionNodeJson[];
  edges: SessionEdgeJson[];
  run: string[];
  cursor: number;
  run_length: number;
  current: SessionNodeJson;
  warnings: string[];
}

export interface ProgressResponse {
  steps: number;
  reached_stage: string | null;
  reached_child: boolean;
  session: SessionSnapshot;
}

export type StepMode = "manual" | "random" | "progress";

export interface StepRequest {
  mode: StepMode;
  pair?: [string, string];
  repeat?: number;
  expected_run_length: number;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl = "", fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => globalThis.fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(this.baseUrl + path, init);
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      payload = null;
    }
    if (!response.ok) {
      const fallback: ApiErrorBody = {
        code: "http_error",
        message: `request failed with status ${response.status}`,
      };
      const isErrorBody =
        payload !== null &&
        typeof payload === "object" &&
        "code" in payload &&
        "message" in payload;
      throw new ApiRequestError(response.status, isErrorBody ? (payload as ApiErrorBody) : fallback);
    }
    return payload as T;
  }

  listProtocols(): Promise<{ protocols: ProtocolInfo[] }> {
    return this.request("GET", "/api/protocols");
  }

  getProtocol(protocolId: string): Promise<ProtocolInfo> {
    return this.request("GET", `/api/protocols/${encodeURIComponent(protocolId)}`);
  }

  uploadProtocol(document: unknown): Promise<ProtocolInfo> {
    return this.request("POST", "/api/protocols", document);
  }

  verify(protocolId: string, nCert?: number): Promise<VerifyResponse> {
    const body = nCert === undefined ? {} : { n_cert: nCert };
    return this.request("POST", `/api/protocols/${encodeURIComponent(protocolId)}/verify`, body);
  }

  stageGraphs(protocolId: string): Promise<StageGraphsResponse> {
    return this.request("GET", `/api/protocols/${encodeURIComponent(protocolId)}/stage-graphs`);
  }

  stageDetail(
    protocolId: string,
    stageId: string,
    config?: Record<string, number>,
  ): Promise<StageDetail> {
    const query =
      config === undefined ? "" : `?config=${encodeURIComponent(JSON.stringify(config))}`;
    return this.request(
      "GET",
      `/api/protocols/${encodeURIComponent(protocolId)}/stages/${encodeURIComponent(stageId)}${query}`,
    );
  }

  createSession(body: {
    protocol_id: string;
    config: Record<string, number>;
    seed?: number;
  }): Promise<SessionSnapshot> {
    return this.request("POST", "/api/sessions", body);
  }

  getSession(sessionId: string): Promise<SessionSnapshot> {
    return this.request("GET", `/api/sessions/${encodeURIComponent(sessionId)}`);
  }

  step(sessionId: string, body: StepRequest): Promise<SessionSnapshot> {
    return this.request("POST", `/api/sessions/${encodeURIComponent(sessionId)}/step`, body);
  }

  seek(sessionId: string, index: number, expectedRunLength: number): Promise<SessionSnapshot> {
    return this.request("POST", `/api/sessions/${encodeURIComponent(sessionId)}/seek`, {
      index,
      expected_run_length: expectedRunLength,
    });
  }

  progress(
    sessionId: string,
    expectedRunLength: number,
    maxSteps?: number,
  ): Promise<ProgressResponse> {
    const body: Record<string, number> = { expected_run_length: expectedRunLength };
    if (maxSteps !== undefined) {
      body["max_steps"] = maxSteps;
    }
    return this.request("POST", `/api/sessions/${encodeURIComponent(sessionId)}/progress`, body);
  }
}
