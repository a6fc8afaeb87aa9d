import type { ConsoleSession } from "./session.js";
import type { TaskView } from "./types.js";

export interface TaskCard {
  taskId: string;
  title: string;
  given: string[];
  then: string[];
  stepType: "TE" | "TD";
  phase: string;
  priority: number;
  status: string;
  /** Duration budget in seconds, if the step declares one. */
  durationLimit: number | null;
  /** Seconds in progress, measured on the mission clock. */
  elapsed: number | null;
  /** True when the server reported duration_exceeded for this task. */
  overdue: boolean;
  /** The single action a tap performs next. */
  primaryAction: "start" | "complete" | "record";
}

export interface BoardView {
  missionId: string;
  role: string;
  lastSeenSeq: number;
  offline: boolean;
  cards: TaskCard[];
  emptyMessage: string | null;
}

function cardFor(task: TaskView, session: ConsoleSession, now: number): TaskCard {
  const started = session.taskStartedAt(task.task_id);
  const inProgress = task.status === "in_progress";
  let primaryAction: TaskCard["primaryAction"] = "start";
  if (inProgress) {
    primaryAction = task.step_type === "TD" ? "record" : "complete";
  }
  return {
    taskId: task.task_id,
    title: task.when,
    given: task.given,
    then: task.then,
    stepType: task.step_type,
    phase: task.phase,
    priority: task.priority,
    status: task.status,
    durationLimit: task.duration_limit,
    elapsed: inProgress && started !== undefined ? Math.max(0, now - started) : null,
    overdue: session.alertedTasks.has(task.task_id),
    primaryAction,
  };
}

/**
 * Render the role's task board from the session's current server state.
 *
 * The card list is exactly the server's task response in the server's
 * order (already priority-then-phase sorted); the board adds only
 * presentation: elapsed time, duration alerts, and the next tap action.
 */
export function taskBoard(session: ConsoleSession, now: number): BoardView {
  const cards = session.tasks.map((t) => cardFor(t, session, now));
  return {
    missionId: session.missionId,
    role: session.role,
    lastSeenSeq: session.lastSeenSeq,
    offline: session.offline,
    cards,
    emptyMessage: cards.length === 0 ? "no tasks available" : null,
  };
}
