/**
 * Launch-form state and validation.
 *
 * Validation mirrors the service's split-config invariants so a bad form
 * never produces a request: the split timestamp must fall inside the
 * dataset's span with room for every window, window and request counts are
 * positive, cutoffs are strictly increasing.
 */

import type { ConfigMeta, DatasetMeta } from "./api.js";

export interface FormState {
  datasetId: string;
  splitT: string;
  windows: string;
  nMax: string;
  kValues: string;
  unknownUsers: boolean;
  unknownItems: boolean;
  model: string;
  params: string;
}

export interface LaunchPlan {
  datasetId: string;
  config: {
    t_background_end: number;
    n_windows: number;
    n_max_requests_per_user: number;
    include_unknown_users: boolean;
    include_unknown_items: boolean;
    k_values: number[];
  };
  model: string;
  params: Record<string, number | string>;
}

export interface ValidationResult {
  errors: Record<string, string>;
  plan?: LaunchPlan;
}

function parseIntField(raw: string): number | null {
  const trimmed = raw.trim();
  if (!/^-?\d+$/.test(trimmed)) return null;
  return parseInt(trimmed, 10);
}

/**
 * "user=0,item=1,timestamp=3" -> column mapping for dataset upload.
 * Column names instead of indices are only valid for files with a header.
 */
export function parseMapping(
  raw: string,
  header: boolean,
): { mapping?: Record<string, number | string>; error?: string } {
  const mapping: Record<string, number | string> = {};
  for (const part of raw.split(",")) {
    const text = part.trim();
    if (!text) continue;
    const eq = text.indexOf("=");
    if (eq <= 0) return { error: `expected field=column, got "${text}"` };
    const field = text.slice(0, eq).trim();
    const column = text.slice(eq + 1).trim();
    if (!["user", "item", "timestamp"].includes(field)) {
      return { error: `unknown field "${field}"` };
    }
    if (/^\d+$/.test(column)) {
      mapping[field] = parseInt(column, 10);
    } else if (header) {
      mapping[field] = column;
    } else {
      return { error: `column name "${column}" needs a header row` };
    }
  }
  for (const field of ["user", "item", "timestamp"]) {
    if (!(field in mapping)) return { error: `missing field "${field}"` };
  }
  return { mapping };
}

/** "lambda=0.001" lines -> params object; numbers coerced, rest kept as text. */
export function parseParams(raw: string): { params: Record<string, number | string>; error?: string } {
  const params: Record<string, number | string> = {};
  for (const line of raw.split("\n")) {
    const text = line.trim();
    if (!text) continue;
    const eq = text.indexOf("=");
    if (eq <= 0) {
      return { params, error: `expected name=value, got "${text}"` };
    }
    const name = text.slice(0, eq).trim();
    const value = text.slice(eq + 1).trim();
    const asNumber = Number(value);
    params[name] = value !== "" && Number.isFinite(asNumber) ? asNumber : value;
  }
  return { params };
}

export function validateForm(state: FormState, dataset: DatasetMeta | null): ValidationResult {
  const errors: Record<string, string> = {};

  if (!state.datasetId) errors.dataset = "choose a dataset";
  if (!state.model) errors.model = "choose a model";

  const windows = parseIntField(state.windows);
  if (windows === null || windows < 1) errors.windows = "must be a positive integer";

  const nMax = parseIntField(state.nMax);
  if (nMax === null || nMax < 1) errors.nMax = "must be a positive integer";

  const splitT = parseIntField(state.splitT);
  if (splitT === null) {
    errors.splitT = "must be an integer timestamp";
  } else if (dataset && dataset.t_min !== null && dataset.t_max !== null) {
    if (splitT < dataset.t_min || splitT >= dataset.t_max) {
      errors.splitT = `must lie in [${dataset.t_min}, ${dataset.t_max})`;
    } else if (windows !== null && dataset.t_max - splitT < windows) {
      errors.splitT = `leaves less than ${windows} seconds for ${windows} windows`;
    }
  }

  const kValues: number[] = [];
  const kParts = state.kValues.split(",").map((part) => part.trim()).filter((part) => part !== "");
  if (kParts.length === 0) {
    errors.kValues = "at least one cutoff";
  } else {
    for (const part of kParts) {
      const k = parseIntField(part);
      if (k === null || k < 1) {
        errors.kValues = `"${part}" is not a positive integer`;
        break;
      }
      kValues.push(k);
    }
    if (!errors.kValues && kValues.some((k, i) => i > 0 && k <= kValues[i - 1])) {
      errors.kValues = "cutoffs must be strictly increasing";
    }
  }

  const { params, error: paramError } = parseParams(state.params);
  if (paramError) errors.params = paramError;

  if (Object.keys(errors).length > 0) return { errors };
  return {
    errors,
    plan: {
      datasetId: state.datasetId,
      config: {
        t_background_end: splitT as number,
        n_windows: windows as number,
        n_max_requests_per_user: nMax as number,
        include_unknown_users: state.unknownUsers,
        include_unknown_items: state.unknownItems,
        k_values: kValues,
      },
      model: state.model,
      params,
    },
  };
}

/**
 * Reuse an already-stored config when one matches the plan exactly.
 * Launching the same settings across several models then shares one
 * config id, which is what makes their jobs comparable in the chart.
 */
export function findMatchingConfig(configs: ConfigMeta[], plan: LaunchPlan): string | null {
  for (const candidate of configs) {
    if (
      candidate.t_background_end === plan.config.t_background_end &&
      candidate.n_windows === plan.config.n_windows &&
      candidate.n_max_requests_per_user === plan.config.n_max_requests_per_user &&
      candidate.include_unknown_users === plan.config.include_unknown_users &&
      candidate.include_unknown_items === plan.config.include_unknown_items &&
      candidate.k_values.length === plan.config.k_values.length &&
      candidate.k_values.every((k, i) => k === plan.config.k_values[i])
    ) {
      return candidate.config_id;
    }
  }
  return null;
}
