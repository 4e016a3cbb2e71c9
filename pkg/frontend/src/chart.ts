/**
 * Hand-rolled SVG line chart: one point per evaluation window, one series
 * per job. No chart library so the studio stays a static bundle the service
 * can serve from disk.
 */

import type { Report } from "./api.js";

export interface ChartPoint {
  x: number;
  y: number;
}

export interface ChartSeries {
  label: string;
  points: ChartPoint[];
}

export interface ChartOptions {
  width?: number;
  height?: number;
  yLabel?: string;
  partial?: boolean;
}

export const SERIES_COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

const MARGIN = { top: 16, right: 16, bottom: 34, left: 52 };

/** Pull one metric@k across windows; rows without values (no users) are skipped. */
export function metricSeries(report: Report, metric: string, k: number): ChartPoint[] {
  const points: ChartPoint[] = [];
  for (const row of report.windows) {
    if (row.values === null) continue;
    const byK = row.values[metric];
    if (!byK || !(String(k) in byK)) continue;
    points.push({ x: row.window_index, y: byK[String(k)] });
  }
  return points;
}

function escapeText(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function ticks(lo: number, hi: number, count: number): number[] {
  if (hi === lo) return [lo];
  const step = (hi - lo) / (count - 1);
  const out: number[] = [];
  for (let i = 0; i < count; i++) out.push(lo + step * i);
  return out;
}

export function renderLineChart(series: ChartSeries[], options: ChartOptions = {}): string {
  const width = options.width ?? 640;
  const height = options.height ?? 320;
  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;

  const everyPoint = series.flatMap((s) => s.points);
  if (everyPoint.length === 0) {
    return (
      `<svg class="chart" viewBox="0 0 ${width} ${height}" role="img">` +
      `<text x="${width / 2}" y="${height / 2}" text-anchor="middle" class="chart-empty">no data</text>` +
      `</svg>`
    );
  }

  const xValues = everyPoint.map((p) => p.x);
  const xLo = Math.min(...xValues);
  const xHi = Math.max(...xValues);
  const yHi = Math.max(...everyPoint.map((p) => p.y), 0);
  // Always anchor the y axis at zero; metric scores live in [0, 1].
  const yTop = yHi === 0 ? 1 : yHi * 1.08;

  const sx = (x: number) => MARGIN.left + (xHi === xLo ? plotW / 2 : ((x - xLo) / (xHi - xLo)) * plotW);
  const sy = (y: number) => MARGIN.top + plotH - (y / yTop) * plotH;

  const parts: string[] = [];
  parts.push(`<svg class="chart" viewBox="0 0 ${width} ${height}" role="img">`);

  // Axes and gridlines.
  for (const t of ticks(0, yTop, 5)) {
    const y = sy(t);
    parts.push(`<line x1="${MARGIN.left}" y1="${y}" x2="${width - MARGIN.right}" y2="${y}" class="grid"/>`);
    parts.push(
      `<text x="${MARGIN.left - 6}" y="${y + 4}" text-anchor="end" class="tick">${t.toFixed(3)}</text>`,
    );
  }
  const xTickValues = xHi - xLo <= 12 ? ticks(xLo, xHi, xHi - xLo + 1) : ticks(xLo, xHi, 8);
  for (const t of xTickValues) {
    const x = sx(t);
    parts.push(
      `<text x="${x}" y="${height - MARGIN.bottom + 16}" text-anchor="middle" class="tick">${Math.round(t)}</text>`,
    );
  }
  parts.push(
    `<line x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" y2="${height - MARGIN.bottom}" class="axis"/>`,
  );
  parts.push(
    `<line x1="${MARGIN.left}" y1="${height - MARGIN.bottom}" x2="${width - MARGIN.right}" y2="${height - MARGIN.bottom}" class="axis"/>`,
  );
  parts.push(
    `<text x="${width / 2}" y="${height - 4}" text-anchor="middle" class="axis-label">window</text>`,
  );
  if (options.yLabel) {
    parts.push(
      `<text x="12" y="${height / 2}" text-anchor="middle" class="axis-label" transform="rotate(-90 12 ${height / 2})">${escapeText(options.yLabel)}</text>`,
    );
  }

  series.forEach((s, index) => {
    const color = SERIES_COLORS[index % SERIES_COLORS.length];
    const coords = s.points.map((p) => `${sx(p.x).toFixed(1)},${sy(p.y).toFixed(1)}`);
    parts.push(
      `<polyline data-series="${escapeText(s.label)}" points="${coords.join(" ")}" fill="none" stroke="${color}" stroke-width="2"/>`,
    );
    for (const p of s.points) {
      parts.push(
        `<circle data-series="${escapeText(s.label)}" cx="${sx(p.x).toFixed(1)}" cy="${sy(p.y).toFixed(1)}" r="3.5" fill="${color}"><title>${escapeText(s.label)} w${p.x}: ${p.y}</title></circle>`,
      );
    }
    // Legend swatches stack in the top-right corner.
    const ly = MARGIN.top + 14 + index * 18;
    parts.push(
      `<rect x="${width - MARGIN.right - 150}" y="${ly - 9}" width="10" height="10" fill="${color}"/>`,
    );
    parts.push(
      `<text x="${width - MARGIN.right - 136}" y="${ly}" class="legend">${escapeText(s.label)}</text>`,
    );
  });

  if (options.partial) {
    parts.push(
      `<text x="${MARGIN.left + 4}" y="${MARGIN.top + 4}" class="partial-flag">partial: run still in progress</text>`,
    );
  }

  parts.push("</svg>");
  return parts.join("");
}
