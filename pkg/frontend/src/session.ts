import { ApiClient, ConnectionError } from "./api.js";
import type { CommandBody, EventView, TaskView } from "./types.js";

/**
 * One operator's live view of one mission.
 *
 * The session is a strict thin client: the task list it exposes is always
 * the most recent server response, never a locally computed projection.
 * Incremental events (fetched with `since=lastSeenSeq`) only decide *when*
 * to refetch and which alerts to surface.
 */
export class ConsoleSession {
  readonly api: ApiClient;
  readonly missionId: string;
  readonly role: string;

  private seq = 0;
  private taskList: TaskView[] = [];
  private startedAt = new Map<string, number>();
  private alarms = new Set<string>();
  private offlineFlag = false;

  constructor(api: ApiClient, missionId: string, role: string) {
    this.api = api;
    this.missionId = missionId;
    this.role = role;
  }

  get lastSeenSeq(): number {
    return this.seq;
  }

  get offline(): boolean {
    return this.offlineFlag;
  }

  /** Current server-provided task list (frozen at lastSeenSeq while offline). */
  get tasks(): TaskView[] {
    return this.taskList;
  }

  /** Mission clock at which the task was started, if the session saw it start. */
  taskStartedAt(taskId: string): number | undefined {
    return this.startedAt.get(taskId);
  }

  /** Tasks with an unacknowledged duration alarm. */
  get alertedTasks(): ReadonlySet<string> {
    return this.alarms;
  }

  acknowledgeAlert(taskId: string): void {
    this.alarms.delete(taskId);
  }

  /** Full refetch of this role's tasks from the server. */
  async resync(): Promise<TaskView[]> {
    this.taskList = await this.api.getTasks(this.missionId, this.role);
    this.offlineFlag = false;
    return this.taskList;
  }

  /**
   * Fetch events past lastSeenSeq, fold the alert/elapsed bookkeeping, and
   * refetch the task list if anything happened. A transport failure flips
   * the offline flag and leaves the board frozen; the next successful poll
   * resynchronizes automatically.
   */
  async poll(waitSeconds = 0): Promise<EventView[]> {
    let events: EventView[];
    try {
      const out = await this.api.getEvents(this.missionId, this.seq, waitSeconds);
      events = out.events;
    } catch (err) {
      if (err instanceof ConnectionError) {
        this.offlineFlag = true;
        return [];
      }
      throw err;
    }
    const wasOffline = this.offlineFlag;
    for (const ev of events) {
      if (ev.seq <= this.seq) continue; // never move backwards
      this.seq = ev.seq;
      if (ev.kind === "task_started" && ev.task_id) {
        this.startedAt.set(ev.task_id, ev.timestamp);
      }
      if (ev.kind === "duration_exceeded" && ev.task_id) {
        this.alarms.add(ev.task_id);
      }
    }
    if (events.length > 0 || wasOffline) {
      await this.resync();
    }
    this.offlineFlag = false;
    return events;
  }

  /**
   * Send one command and advance past its events. One user action is
   * exactly one POST; the board only changes after the acknowledgment.
   */
  async command(body: Omit<CommandBody, "actor"> & { actor?: string }): Promise<EventView[]> {
    const out = await this.api.postCommand(this.missionId, {
      actor: this.role,
      ...body,
    });
    await this.poll();
    return out.events;
  }

  confirm(condition: string, override = false): Promise<EventView[]> {
    return this.command({ kind: "confirm_condition", condition, override });
  }

  start(taskId: string): Promise<EventView[]> {
    return this.command({ kind: "start_task", task_id: taskId });
  }

  complete(taskId: string, note?: string): Promise<EventView[]> {
    return this.command({ kind: "complete_task", task_id: taskId, note });
  }

  fail(taskId: string, note: string): Promise<EventView[]> {
    return this.command({ kind: "fail_task", task_id: taskId, note });
  }

  skip(taskId: string, note?: string): Promise<EventView[]> {
    return this.command({ kind: "skip_task", task_id: taskId, note });
  }

  reprioritize(taskId: string, priority: number): Promise<EventView[]> {
    return this.command({ kind: "reprioritize", task_id: taskId, priority });
  }
}
