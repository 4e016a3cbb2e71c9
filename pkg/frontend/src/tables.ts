/**
 * Report tables. Cell text is the service's value verbatim (String() of the
 * JSON number, which the service already serializes rounded); the studio
 * never recomputes or reformats scores.
 */

import type { MetricValues, Report } from "./api.js";

export function formatScore(value: number): string {
  return String(value);
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function summaryTable(title: string, report: Report, values: MetricValues): string {
  const rows: string[] = [];
  rows.push(`<table class="metrics" data-level="${title.toLowerCase()}">`);
  rows.push(`<caption>${escapeHtml(title)}</caption>`);
  rows.push(
    `<thead><tr><th>metric</th>${report.k_values.map((k) => `<th>@${k}</th>`).join("")}</tr></thead>`,
  );
  rows.push("<tbody>");
  for (const metric of report.metrics) {
    const cells = report.k_values
      .map((k) => `<td data-metric="${metric}" data-k="${k}">${formatScore(values[metric][String(k)])}</td>`)
      .join("");
    rows.push(`<tr><th>${escapeHtml(metric)}</th>${cells}</tr>`);
  }
  rows.push("</tbody></table>");
  return rows.join("");
}

export function renderSummaryTables(report: Report): string {
  const partialNote = report.partial ? `<p class="partial-flag">partial report</p>` : "";
  return (
    `<div class="summary">${partialNote}` +
    summaryTable("Macro", report, report.macro) +
    summaryTable("Micro", report, report.micro) +
    `<p class="muted">${report.n_user_windows} user-window scores across ${report.windows.length} windows</p>` +
    `</div>`
  );
}

export function renderWindowTable(report: Report): string {
  const header =
    `<thead><tr><th>window</th><th>users</th>` +
    report.metrics
      .flatMap((metric) => report.k_values.map((k) => `<th>${escapeHtml(metric)}@${k}</th>`))
      .join("") +
    `</tr></thead>`;
  const body = report.windows
    .map((row) => {
      const cells = report.metrics
        .flatMap((metric) =>
          report.k_values.map((k) => {
            if (row.values === null) return "<td>-</td>";
            return `<td>${formatScore(row.values[metric][String(k)])}</td>`;
          }),
        )
        .join("");
      return `<tr><td>${row.window_index}</td><td>${row.n_users}</td>${cells}</tr>`;
    })
    .join("");
  return `<table class="metrics windows">${header}<tbody>${body}</tbody></table>`;
}
