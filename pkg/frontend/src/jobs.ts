/** Job list rendering and comparison gating. */

import type { JobRecord } from "./api.js";

/** Overlaying is only meaningful when both jobs scored the same split of the same data. */
export function comparable(a: JobRecord, b: JobRecord): boolean {
  return a.dataset_id === b.dataset_id && a.config_id === b.config_id;
}

export function progressText(job: JobRecord): string {
  if (job.status === "QUEUED") return "queued";
  if (job.progress.total === null) return job.status.toLowerCase();
  return `${job.progress.completed}/${job.progress.total} windows`;
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function paramsText(params: Record<string, unknown>): string {
  const parts = Object.entries(params).map(([name, value]) => `${name}=${value}`);
  return parts.length ? parts.join(", ") : "defaults";
}

/**
 * Table rows for the job list. Jobs with a report (completed, or running
 * with at least one finished window) get a selection checkbox; `selected`
 * marks the boxes that survive a re-render.
 */
export function renderJobRows(jobs: JobRecord[], selected: ReadonlySet<string>): string {
  return jobs
    .map((job) => {
      const viewable =
        job.run_id !== null && (job.status === "COMPLETED" || (job.status === "RUNNING" && job.progress.completed > 0));
      const checkbox = viewable
        ? `<input type="checkbox" class="job-select" value="${job.job_id}"${selected.has(job.job_id) ? " checked" : ""}>`
        : "";
      const error = job.error ? `<div class="job-error">${escapeHtml(job.error)}</div>` : "";
      return (
        `<tr data-job="${job.job_id}" data-status="${job.status}">` +
        `<td>${checkbox}</td>` +
        `<td><code>${job.job_id}</code></td>` +
        `<td>${escapeHtml(job.model)}<div class="muted">${escapeHtml(paramsText(job.params))}</div></td>` +
        `<td><span class="status status-${job.status.toLowerCase()}">${job.status}</span>${error}</td>` +
        `<td>${progressText(job)}</td>` +
        `</tr>`
      );
    })
    .join("");
}
