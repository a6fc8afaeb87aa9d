import type { ConsoleSession } from "./session.js";
import type { IssueBody, TaskCard } from "./index.js";

export type Severity = "info" | "minor" | "major" | "blocker";

export interface IssueForm {
  reporter: string;
  severity: Severity;
  text: string;
  /** Prefilled when the form was opened from a task card. */
  taskId: string | null;
}

/** Open a blank mission-level issue form. */
export function newIssueForm(session: ConsoleSession): IssueForm {
  return { reporter: session.role, severity: "info", text: "", taskId: null };
}

/** Open an issue form from a task card, prefilled with its task id. */
export function issueFormForCard(session: ConsoleSession, card: TaskCard): IssueForm {
  return { ...newIssueForm(session), taskId: card.taskId };
}

export function validateIssue(form: IssueForm): string | null {
  if (form.text.trim() === "") return "describe the issue before submitting";
  return null;
}

export async function submitIssue(
  session: ConsoleSession,
  form: IssueForm,
): Promise<string> {
  const problem = validateIssue(form);
  if (problem !== null) throw new Error(problem);
  const body: IssueBody = {
    reporter: form.reporter,
    severity: form.severity,
    text: form.text,
  };
  if (form.taskId !== null) body.task_id = form.taskId;
  const out = await session.api.postIssue(session.missionId, body);
  await session.poll();
  return out.issue_id;
}
