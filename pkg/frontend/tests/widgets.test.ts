import { describe, expect, it } from "vitest";

import { validateEntry, widgetFor } from "../src/index.js";
import { spec } from "./fake.js";

describe("widgetFor", () => {
  it("maps integer specs to a numeric keypad with the declared range", () => {
    const w = widgetFor(spec());
    expect(w).toEqual({
      kind: "number",
      label: "gps_satellites",
      integer: true,
      min: 6,
      max: 30,
    });
  });

  it("shows exactly the spec's values in an enum picker", () => {
    const w = widgetFor(
      spec({ datatype: "enum", enum_values: ["GUIDED", "LOITER", "RTL"] }),
    );
    expect(w).toEqual({
      kind: "enum",
      label: "gps_satellites",
      options: ["GUIDED", "LOITER", "RTL"],
    });
  });

  it("maps boolean specs to a toggle and text specs to a text field", () => {
    expect(widgetFor(spec({ datatype: "boolean" })).kind).toBe("toggle");
    expect(widgetFor(spec({ datatype: "text", pattern: "^[A-Z]+$" }))).toEqual({
      kind: "text",
      label: "gps_satellites",
      pattern: "^[A-Z]+$",
    });
  });
});

describe("validateEntry", () => {
  it("accepts an in-range integer", () => {
    expect(validateEntry(spec(), 12)).toEqual({
      ok: true,
      withinSpec: true,
      reason: null,
    });
  });

  it("allows out-of-range values but marks them for a confirm dialog", () => {
    const result = validateEntry(spec(), 0);
    expect(result.ok).toBe(true);
    expect(result.withinSpec).toBe(false);
  });

  it("blocks type mismatches outright", () => {
    expect(validateEntry(spec(), "twelve").ok).toBe(false);
    expect(validateEntry(spec(), 11.5).ok).toBe(false);
    expect(validateEntry(spec({ datatype: "boolean" }), "yes").ok).toBe(false);
  });

  it("blocks enum values outside the declared set", () => {
    const s = spec({ datatype: "enum", enum_values: ["GUIDED", "RTL"] });
    expect(validateEntry(s, "GUIDED").ok).toBe(true);
    const bad = validateEntry(s, "MANUAL");
    expect(bad.ok).toBe(false);
    expect(bad.reason).toContain("GUIDED");
  });
});
