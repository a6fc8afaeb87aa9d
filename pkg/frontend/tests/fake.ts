import { ApiClient } from "../src/api.js";
import type { DataSpec, EventView, TaskView } from "../src/types.js";

/** Minimal in-memory stand-in for the mission service, for unit tests. */
export class FakeServer {
  tasksByRole = new Map<string, TaskView[]>();
  events: EventView[] = [];
  down = false;
  requests: string[] = [];

  pushEvent(partial: Partial<EventView>): void {
    this.events.push({
      seq: this.events.length + 1,
      timestamp: 0,
      kind: "condition_confirmed",
      actor: "",
      task_id: null,
      payload: {},
      ...partial,
    });
  }

  client(): ApiClient {
    const fetchImpl = (async (input: string | URL | Request) => {
      const url = new URL(String(input));
      this.requests.push(url.pathname + url.search);
      if (this.down) throw new TypeError("fetch failed");
      if (url.pathname.endsWith("/tasks")) {
        const role = url.searchParams.get("role") ?? "";
        return jsonResponse({ role, tasks: this.tasksByRole.get(role) ?? [] });
      }
      if (url.pathname.endsWith("/events")) {
        const since = Number(url.searchParams.get("since") ?? "0");
        const events = this.events.filter((e) => e.seq > since);
        return jsonResponse({
          events,
          last_seq: events.length > 0 ? events[events.length - 1].seq : since,
        });
      }
      return jsonResponse({ code: "not-found", message: "no route" }, 404);
    }) as typeof fetch;
    return new ApiClient("http://fake", fetchImpl);
  }
}

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export function task(overrides: Partial<TaskView> & { task_id: string }): TaskView {
  return {
    when: `operator shall handle ${overrides.task_id}.`,
    given: [],
    then: [],
    step_type: "TE",
    responsible: "pilot_1",
    priority: 3,
    phase: "preparation",
    duration_limit: null,
    status: "available",
    data_spec: null,
    ...overrides,
  };
}

export function spec(overrides: Partial<DataSpec> = {}): DataSpec {
  return {
    field_name: "gps_satellites",
    datatype: "integer",
    enum_values: [],
    min_value: 6,
    max_value: 30,
    pattern: null,
    telemetry_key: "gps_satellites",
    ...overrides,
  };
}
