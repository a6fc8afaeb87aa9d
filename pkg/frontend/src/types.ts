/** Wire types mirrored from the mission service JSON payloads. */

export type Datatype = "number" | "integer" | "text" | "boolean" | "enum";

export interface DataSpec {
  field_name: string;
  datatype: Datatype;
  enum_values: string[];
  min_value: number | null;
  max_value: number | null;
  pattern: string | null;
  telemetry_key: string | null;
}

export type TaskStatus =
  | "pending"
  | "available"
  | "in_progress"
  | "completed"
  | "failed"
  | "skipped";

export interface TaskView {
  task_id: string;
  when: string;
  given: string[];
  then: string[];
  step_type: "TE" | "TD";
  responsible: string;
  priority: number;
  phase: string;
  duration_limit: number | null;
  status: TaskStatus;
  data_spec: DataSpec | null;
}

export interface EventView {
  seq: number;
  timestamp: number;
  kind: string;
  actor: string;
  task_id: string | null;
  payload: Record<string, unknown>;
}

export interface MissionInfo {
  mission_id: string;
  status: string;
  created_at: number;
  template: string;
  bindings: Record<string, string>;
}

export interface CommandBody {
  kind: string;
  actor: string;
  task_id?: string;
  condition?: string;
  value?: unknown;
  note?: string;
  priority?: number;
  override?: boolean;
  timestamp?: number;
}

export interface IssueBody {
  reporter: string;
  severity: string;
  text: string;
  task_id?: string;
  timestamp?: number;
}

export interface MissionReport {
  mission_id: string;
  totals: Record<string, number>;
  issues: Array<{
    issue_id: string;
    reporter: string;
    severity: string;
    text: string;
    task_id: string | null;
  }>;
  [key: string]: unknown;
}
