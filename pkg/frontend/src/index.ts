export * from "./types.js";
export * from "./api.js";
export * from "./session.js";
export * from "./board.js";
export * from "./widgets.js";
export * from "./issue.js";
