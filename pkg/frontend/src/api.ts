import type {
  CommandBody,
  EventView,
  IssueBody,
  MissionInfo,
  MissionReport,
  TaskView,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Signals a transport failure (server unreachable), as opposed to a rejected request. */
export class ConnectionError extends Error {
  constructor(cause: unknown) {
    super(`server unreachable: ${String(cause)}`);
    this.name = "ConnectionError";
  }
}

/**
 * Thin HTTP client for the mission service. Every method is a single
 * request; the console never batches or reorders commands.
 */
export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method,
        headers: body === undefined ? {} : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ConnectionError(err);
    }
    const payload = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      const p = payload as { code?: string; message?: string; detail?: string };
      throw new ApiError(
        resp.status,
        p.code ?? "error",
        p.message ?? p.detail ?? `HTTP ${resp.status}`,
      );
    }
    return payload as T;
  }

  async listMissions(): Promise<MissionInfo[]> {
    const out = await this.request<{ missions: MissionInfo[] }>("GET", "/missions");
    return out.missions;
  }

  async createMission(body: {
    package: unknown;
    bindings?: Record<string, string>;
    mission_id?: string;
    clock?: number;
  }): Promise<string> {
    const out = await this.request<{ mission_id: string }>("POST", "/missions", body);
    return out.mission_id;
  }

  async getTasks(missionId: string, role: string): Promise<TaskView[]> {
    const out = await this.request<{ tasks: TaskView[] }>(
      "GET",
      `/missions/${encodeURIComponent(missionId)}/tasks?role=${encodeURIComponent(role)}`,
    );
    return out.tasks;
  }

  async postCommand(
    missionId: string,
    body: CommandBody,
  ): Promise<{ seq: number; events: EventView[] }> {
    return this.request("POST", `/missions/${encodeURIComponent(missionId)}/commands`, body);
  }

  async postIssue(missionId: string, body: IssueBody): Promise<{ issue_id: string }> {
    return this.request("POST", `/missions/${encodeURIComponent(missionId)}/issues`, body);
  }

  async getEvents(
    missionId: string,
    since: number,
    waitSeconds = 0,
  ): Promise<{ events: EventView[]; last_seq: number }> {
    return this.request(
      "GET",
      `/missions/${encodeURIComponent(missionId)}/events?since=${since}&wait=${waitSeconds}`,
    );
  }

  async getReport(missionId: string): Promise<MissionReport> {
    return this.request("GET", `/missions/${encodeURIComponent(missionId)}/report`);
  }
}
