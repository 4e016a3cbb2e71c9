/**
 * Typed client for the evaluation service's /v1 JSON API.
 *
 * The studio performs no metric arithmetic: every number it renders comes
 * straight out of these response payloads.
 */

export interface DatasetMeta {
  dataset_id: string;
  name: string;
  n_interactions: number;
  n_rejected: number;
  n_users: number;
  n_items: number;
  t_min: number | null;
  t_max: number | null;
}

export interface UploadResult extends DatasetMeta {
  rejections: { line_number: number; reason: string }[];
}

export interface ConfigMeta {
  config_id: string;
  t_background_end: number;
  n_windows: number;
  n_max_requests_per_user: number;
  include_unknown_users: boolean;
  include_unknown_items: boolean;
  k_values: number[];
}

export type JobStatus = "QUEUED" | "RUNNING" | "COMPLETED" | "FAILED";

export interface JobRecord {
  job_id: string;
  run_id: string | null;
  dataset_id: string;
  config_id: string;
  model: string;
  params: Record<string, unknown>;
  status: JobStatus;
  progress: { completed: number; total: number | null };
  error: string | null;
  created_at: number;
  started_at: number | null;
  finished_at: number | null;
}

/** values maps metric name -> k (as string, JSON object keys) -> score. */
export type MetricValues = Record<string, Record<string, number>>;

export interface WindowRow {
  window_index: number;
  t_start: number;
  t_end: number;
  n_users: number;
  values: MetricValues | null;
}

export interface Report {
  schema: string;
  model: { name: string; params: Record<string, unknown> };
  config: Record<string, unknown>;
  k_values: number[];
  metrics: string[];
  partial: boolean;
  windows: WindowRow[];
  macro: MetricValues;
  micro: MetricValues;
  n_user_windows: number;
}

/** The service answered with an error body ({"error": code, "detail": ...}). */
export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    public detail: unknown,
  ) {
    super(`${code}: ${typeof detail === "string" ? detail : JSON.stringify(detail)}`);
  }
}

/** The service could not be reached at all (fetch itself failed). */
export class ConnectionError extends Error {}

export class StudioApi {
  constructor(
    private base: string = "",
    private token: string | null = null,
  ) {}

  setToken(token: string | null): void {
    this.token = token;
  }

  private async request<T>(method: string, path: string, body?: BodyInit, json = false): Promise<T> {
    const headers: Record<string, string> = {};
    if (json) headers["content-type"] = "application/json";
    if (this.token) headers["authorization"] = `Bearer ${this.token}`;

    let response: Response;
    try {
      response = await fetch(this.base + path, { method, headers, body });
    } catch (err) {
      throw new ConnectionError(String(err));
    }
    if (response.status === 204) return undefined as T;
    const doc = await response.json().catch(() => null);
    if (!response.ok) {
      const code = doc && typeof doc.error === "string" ? doc.error : `HTTP ${response.status}`;
      throw new ApiError(response.status, code, doc ? doc.detail : null);
    }
    return doc as T;
  }

  health(): Promise<{ status: string; time: number }> {
    return this.request("GET", "/v1/health");
  }

  async models(): Promise<string[]> {
    const doc = await this.request<{ models: string[] }>("GET", "/v1/models");
    return doc.models;
  }

  async listDatasets(): Promise<DatasetMeta[]> {
    const doc = await this.request<{ datasets: DatasetMeta[] }>("GET", "/v1/datasets");
    return doc.datasets;
  }

  uploadDataset(
    file: File,
    options: { name: string; mapping: Record<string, number | string>; delimiter: string; header: boolean },
  ): Promise<UploadResult> {
    const form = new FormData();
    form.append("file", file);
    form.append("name", options.name);
    form.append("mapping", JSON.stringify(options.mapping));
    form.append("delimiter", options.delimiter);
    form.append("header", options.header ? "true" : "false");
    return this.request("POST", "/v1/datasets", form);
  }

  async listConfigs(): Promise<ConfigMeta[]> {
    const doc = await this.request<{ configs: ConfigMeta[] }>("GET", "/v1/configs");
    return doc.configs;
  }

  createConfig(flat: Record<string, unknown>): Promise<ConfigMeta> {
    return this.request("POST", "/v1/configs", JSON.stringify(flat), true);
  }

  createJob(body: {
    dataset_id: string;
    config_id: string;
    model: string;
    params: Record<string, unknown>;
  }): Promise<JobRecord> {
    return this.request("POST", "/v1/jobs", JSON.stringify(body), true);
  }

  async listJobs(): Promise<JobRecord[]> {
    const doc = await this.request<{ jobs: JobRecord[] }>("GET", "/v1/jobs");
    return doc.jobs;
  }

  getJob(jobId: string): Promise<JobRecord> {
    return this.request("GET", `/v1/jobs/${jobId}`);
  }

  getReport(runId: string, partial = false): Promise<Report> {
    const suffix = partial ? "?partial=true" : "";
    return this.request("GET", `/v1/runs/${runId}/report${suffix}`);
  }
}
