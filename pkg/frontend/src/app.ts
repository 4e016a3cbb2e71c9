/**
 * Page wiring: holds the live state (datasets, jobs, selection), talks to
 * the service through StudioApi, and re-renders the pure HTML/SVG builders
 * into their containers. Jobs are polled every two seconds.
 */

import { ApiError, ConnectionError, StudioApi } from "./api.js";
import type { DatasetMeta, JobRecord, Report } from "./api.js";
import { findMatchingConfig, parseMapping, validateForm } from "./forms.js";
import type { FormState } from "./forms.js";
import { metricSeries, renderLineChart } from "./chart.js";
import type { ChartSeries } from "./chart.js";
import { renderSummaryTables, renderWindowTable } from "./tables.js";
import { comparable, renderJobRows } from "./jobs.js";

const POLL_INTERVAL_MS = 2000;
const TOKEN_KEY = "nextbatch-token";

const api = new StudioApi("", sessionStorage.getItem(TOKEN_KEY));

let datasets: DatasetMeta[] = [];
let jobs: JobRecord[] = [];
const selected = new Set<string>();
const reportCache = new Map<string, { completed: number; report: Report }>();

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function input(id: string): HTMLInputElement {
  return $(id) as HTMLInputElement;
}

// ---------------------------------------------------------------- banner

function showBanner(message: string): void {
  $("banner-text").textContent = message;
  $("banner").classList.remove("hidden");
}

function hideBanner(): void {
  $("banner").classList.add("hidden");
}

/** Route a failure: connection problems raise the banner, API errors go to `box`. */
function surface(err: unknown, box?: HTMLElement): void {
  if (err instanceof ConnectionError) {
    showBanner("service unreachable - inputs kept, retry when it is back");
    return;
  }
  const text = err instanceof ApiError ? err.message : String(err);
  if (box) {
    box.textContent = text;
    box.classList.remove("hidden");
  } else {
    showBanner(text);
  }
}

// ---------------------------------------------------------------- datasets

function datasetById(id: string): DatasetMeta | null {
  return datasets.find((d) => d.dataset_id === id) ?? null;
}

function renderDatasetSelect(): void {
  const select = $("dataset") as HTMLSelectElement;
  const current = select.value;
  select.innerHTML =
    `<option value="">choose...</option>` +
    datasets
      .map((d) => `<option value="${d.dataset_id}">${d.name} (${d.n_interactions} events)</option>`)
      .join("");
  if (datasets.some((d) => d.dataset_id === current)) select.value = current;
  renderDatasetInfo();
}

function renderDatasetInfo(): void {
  const meta = datasetById((($("dataset")) as HTMLSelectElement).value);
  $("dataset-info").textContent = meta
    ? `${meta.n_users} users, ${meta.n_items} items, timestamps ${meta.t_min}..${meta.t_max}`
    : "";
}

async function refreshDatasets(): Promise<void> {
  datasets = await api.listDatasets();
  renderDatasetSelect();
}

async function onUpload(event: Event): Promise<void> {
  event.preventDefault();
  const box = $("upload-error");
  box.classList.add("hidden");
  const file = input("upload-file").files?.[0];
  if (!file) {
    surface(new Error("choose a file first"), box);
    return;
  }
  const { mapping, error } = parseMapping(input("upload-mapping").value, input("upload-header").checked);
  if (error || !mapping) {
    surface(new Error(error ?? "bad mapping"), box);
    return;
  }
  const delimiter = input("upload-delimiter").value === "tab" ? "\t" : input("upload-delimiter").value;
  try {
    const result = await api.uploadDataset(file, {
      name: input("upload-name").value || file.name,
      mapping,
      delimiter: delimiter || ",",
      header: input("upload-header").checked,
    });
    $("upload-result").textContent =
      `accepted ${result.n_interactions}, rejected ${result.n_rejected}` +
      (result.rejections.length ? ` (first: line ${result.rejections[0].line_number}, ${result.rejections[0].reason})` : "");
    await refreshDatasets();
    ($("dataset") as HTMLSelectElement).value = result.dataset_id;
    renderDatasetInfo();
    hideBanner();
  } catch (err) {
    surface(err, box);
  }
}

// ---------------------------------------------------------------- launch form

function readForm(): FormState {
  return {
    datasetId: (($("dataset")) as HTMLSelectElement).value,
    splitT: input("split-t").value,
    windows: input("windows").value,
    nMax: input("n-max").value,
    kValues: input("k-values").value,
    unknownUsers: input("unknown-users").checked,
    unknownItems: input("unknown-items").checked,
    model: (($("model")) as HTMLSelectElement).value,
    params: (($("params")) as HTMLTextAreaElement).value,
  };
}

function showFieldErrors(errors: Record<string, string>): void {
  for (const field of ["dataset", "splitT", "windows", "nMax", "kValues", "model", "params"]) {
    const slot = document.querySelector(`[data-err="${field}"]`);
    if (slot) slot.textContent = errors[field] ?? "";
  }
}

async function onLaunch(event: Event): Promise<void> {
  event.preventDefault();
  const box = $("launch-error");
  box.classList.add("hidden");
  const state = readForm();
  const { errors, plan } = validateForm(state, datasetById(state.datasetId));
  showFieldErrors(errors);
  if (!plan) return;

  try {
    const configs = await api.listConfigs();
    const configId = findMatchingConfig(configs, plan) ?? (await api.createConfig(plan.config)).config_id;
    await api.createJob({
      dataset_id: plan.datasetId,
      config_id: configId,
      model: plan.model,
      params: plan.params,
    });
    hideBanner();
    await refreshJobs();
  } catch (err) {
    surface(err, box);
  }
}

// ---------------------------------------------------------------- jobs

async function refreshJobs(): Promise<void> {
  try {
    jobs = await api.listJobs();
    hideBanner();
  } catch (err) {
    if (err instanceof ConnectionError) showBanner("service unreachable - retrying");
    return;
  }
  for (const id of [...selected]) {
    if (!jobs.some((j) => j.job_id === id)) selected.delete(id);
  }
  ($("job-rows")) .innerHTML = jobs.length
    ? renderJobRows(jobs, selected)
    : `<tr><td colspan="5" class="muted">no jobs yet</td></tr>`;
  await renderResults();
}

function selectedJobs(): JobRecord[] {
  return jobs.filter((j) => selected.has(j.job_id));
}

// ---------------------------------------------------------------- results

async function reportFor(job: JobRecord): Promise<Report> {
  const cached = reportCache.get(job.job_id);
  if (cached && cached.completed === job.progress.completed && job.status === "COMPLETED") {
    return cached.report;
  }
  const report = await api.getReport(job.run_id as string, job.status !== "COMPLETED");
  reportCache.set(job.job_id, { completed: job.progress.completed, report });
  return report;
}

function fillMetricPickers(report: Report): void {
  const metricSelect = $("metric") as HTMLSelectElement;
  const kSelect = $("cutoff") as HTMLSelectElement;
  const metric = metricSelect.value || "hit_rate";
  const k = kSelect.value;
  metricSelect.innerHTML = report.metrics.map((m) => `<option value="${m}">${m}</option>`).join("");
  kSelect.innerHTML = report.k_values.map((v) => `<option value="${v}">@${v}</option>`).join("");
  metricSelect.value = report.metrics.includes(metric) ? metric : report.metrics[0];
  kSelect.value = report.k_values.map(String).includes(k) ? k : String(report.k_values[0]);
}

async function renderResults(): Promise<void> {
  const picked = selectedJobs();
  const panel = $("results");
  if (picked.length === 0) {
    panel.innerHTML = `<p class="muted">select completed jobs to see their report</p>`;
    return;
  }
  const incomparable = picked.filter((j) => !comparable(j, picked[0]));
  if (incomparable.length > 0) {
    panel.innerHTML = `<p class="warn">jobs must share dataset and config to be charted together</p>`;
    return;
  }

  let reports: Report[];
  try {
    reports = await Promise.all(picked.map(reportFor));
  } catch (err) {
    surface(err);
    return;
  }

  fillMetricPickers(reports[0]);
  const metric = ($("metric") as HTMLSelectElement).value;
  const k = parseInt(($("cutoff") as HTMLSelectElement).value, 10);

  const series: ChartSeries[] = reports.map((report, i) => ({
    label: picked[i].model,
    points: metricSeries(report, metric, k),
  }));
  const chart = renderLineChart(series, {
    yLabel: `${metric}@${k}`,
    partial: reports.some((r) => r.partial),
  });

  const tables =
    picked.length === 1
      ? renderSummaryTables(reports[0]) + renderWindowTable(reports[0])
      : `<p class="muted">single-select a job for its full tables</p>`;
  panel.innerHTML = `<div class="chart-box">${chart}</div>${tables}`;
}

// ---------------------------------------------------------------- boot

async function loadModels(): Promise<void> {
  const names = await api.models();
  ($("model")).innerHTML = names.map((n) => `<option value="${n}">${n}</option>`).join("");
}

async function loadAll(): Promise<void> {
  try {
    await api.health();
    hideBanner();
  } catch (err) {
    surface(err);
    return;
  }
  await Promise.all([loadModels(), refreshDatasets(), refreshJobs()]);
}

function boot(): void {
  const token = input("token");
  token.value = sessionStorage.getItem(TOKEN_KEY) ?? "";
  token.addEventListener("change", () => {
    sessionStorage.setItem(TOKEN_KEY, token.value);
    api.setToken(token.value || null);
  });

  $("upload-form").addEventListener("submit", (e) => void onUpload(e));
  $("launch-form").addEventListener("submit", (e) => void onLaunch(e));
  $("dataset").addEventListener("change", renderDatasetInfo);
  $("banner-retry").addEventListener("click", () => void loadAll());
  $("metric").addEventListener("change", () => void renderResults());
  $("cutoff").addEventListener("change", () => void renderResults());
  $("job-rows").addEventListener("change", (event) => {
    const target = event.target as HTMLInputElement;
    if (!target.classList.contains("job-select")) return;
    if (target.checked) selected.add(target.value);
    else selected.delete(target.value);
    void renderResults();
  });

  void loadAll();
  setInterval(() => void refreshJobs(), POLL_INTERVAL_MS);
}

document.addEventListener("DOMContentLoaded", boot);
