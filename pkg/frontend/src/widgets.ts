import type { ConsoleSession } from "./session.js";
import type { DataSpec, EventView, TaskView } from "./types.js";

export type Widget =
  | { kind: "number"; label: string; integer: boolean; min: number | null; max: number | null }
  | { kind: "enum"; label: string; options: string[] }
  | { kind: "toggle"; label: string }
  | { kind: "text"; label: string; pattern: string | null };

/** Pick the input widget matching a data spec's datatype. */
export function widgetFor(spec: DataSpec): Widget {
  switch (spec.datatype) {
    case "integer":
    case "number":
      return {
        kind: "number",
        label: spec.field_name,
        integer: spec.datatype === "integer",
        min: spec.min_value,
        max: spec.max_value,
      };
    case "enum":
      return { kind: "enum", label: spec.field_name, options: spec.enum_values };
    case "boolean":
      return { kind: "toggle", label: spec.field_name };
    default:
      return { kind: "text", label: spec.field_name, pattern: spec.pattern };
  }
}

export interface ValidationResult {
  /** The entry can be submitted (possibly after a confirm dialog). */
  ok: boolean;
  /** Within the spec's declared range/values. */
  withinSpec: boolean;
  /** Why the entry is blocked, when ok is false. */
  reason: string | null;
}

/**
 * Client-side mirror of the server's data validation. Type mismatches are
 * blocked outright; out-of-range values stay submittable because an
 * observed deviation is itself the datum — the UI just asks to confirm.
 */
export function validateEntry(spec: DataSpec, value: unknown): ValidationResult {
  const blocked = (reason: string): ValidationResult => ({
    ok: false,
    withinSpec: false,
    reason,
  });
  switch (spec.datatype) {
    case "integer":
      if (typeof value !== "number" || !Number.isInteger(value)) {
        return blocked("expected a whole number");
      }
      break;
    case "number":
      if (typeof value !== "number" || !Number.isFinite(value)) {
        return blocked("expected a number");
      }
      break;
    case "boolean":
      if (typeof value !== "boolean") return blocked("expected yes/no");
      break;
    case "enum":
      if (typeof value !== "string") return blocked("expected a selection");
      if (!spec.enum_values.includes(value)) {
        return blocked(`must be one of: ${spec.enum_values.join(", ")}`);
      }
      break;
    default:
      if (typeof value !== "string") return blocked("expected text");
      if (spec.pattern !== null && !new RegExp(spec.pattern).test(value)) {
        return { ok: true, withinSpec: false, reason: null };
      }
  }
  if (spec.datatype === "integer" || spec.datatype === "number") {
    const v = value as number;
    if (
      (spec.min_value !== null && v < spec.min_value) ||
      (spec.max_value !== null && v > spec.max_value)
    ) {
      return { ok: true, withinSpec: false, reason: null };
    }
  }
  return { ok: true, withinSpec: true, reason: null };
}

export class EntryBlockedError extends Error {}
export class ConfirmRequiredError extends Error {
  constructor(public readonly validation: ValidationResult) {
    super("value is outside the expected range; confirm to submit anyway");
    this.name = "ConfirmRequiredError";
  }
}

/**
 * Submit a data entry for an in-progress TD task. Out-of-spec values
 * require `confirmed` (the user tapped through the confirm dialog).
 */
export async function submitEntry(
  session: ConsoleSession,
  task: TaskView,
  value: unknown,
  confirmed = false,
): Promise<EventView[]> {
  if (task.step_type !== "TD" || task.data_spec === null) {
    throw new EntryBlockedError(`task ${task.task_id} does not collect data`);
  }
  const result = validateEntry(task.data_spec, value);
  if (!result.ok) {
    throw new EntryBlockedError(result.reason ?? "invalid entry");
  }
  if (!result.withinSpec && !confirmed) {
    throw new ConfirmRequiredError(result);
  }
  return session.command({ kind: "record_data", task_id: task.task_id, value });
}
