// All UI state lives here; every transition goes through reduce().
// Incoming frames and user-originated actions are the only action sources.

import { MapSnapshot, ServerFrame, parseMessageRecord } from "./types";

export type ConnectionStatus = "connecting" | "open" | "reconnecting" | "closed";

export interface TraceEntry {
  step: number | null; // null for local echoes not yet confirmed
  text: string;
  confirmed: boolean;
  kind: "message" | "echo";
}

export interface PendingQuery {
  question: string;
  options: string[];
}

export interface UiSessionState {
  sessionId: string | null;
  map: MapSnapshot | null;
  pendingQuery: PendingQuery | null;
  trace: TraceEntry[];
  lastStep: number;
  connection: ConnectionStatus;
  needsResync: boolean;
  notice: string | null; // transient error/conflict banner
  lastOutput: string | null;
  lastSaidText: string | null;
}

export const TRACE_WINDOW = 200;

export function initialState(): UiSessionState {
  return {
    sessionId: null,
    map: null,
    pendingQuery: null,
    trace: [],
    lastStep: 0,
    connection: "connecting",
    needsResync: false,
    notice: null,
    lastOutput: null,
    lastSaidText: null,
  };
}

export type Action =
  | { kind: "session"; sessionId: string }
  | { kind: "frame"; frame: ServerFrame }
  | { kind: "invalid-frame" }
  | { kind: "connection"; status: ConnectionStatus }
  | { kind: "echo"; text: string; saidText?: string }
  | { kind: "answered" }
  | { kind: "dismiss-notice" };

function pushTrace(state: UiSessionState, entry: TraceEntry): TraceEntry[] {
  const next = [...state.trace, entry];
  return next.length > TRACE_WINDOW ? next.slice(next.length - TRACE_WINDOW) : next;
}

function confirmOldestEcho(trace: TraceEntry[]): TraceEntry[] {
  const index = trace.findIndex((t) => t.kind === "echo" && !t.confirmed);
  if (index < 0) return trace;
  const next = [...trace];
  next[index] = { ...next[index], confirmed: true };
  return next;
}

export function reduce(state: UiSessionState, action: Action): UiSessionState {
  switch (action.kind) {
    case "session":
      return { ...state, sessionId: action.sessionId };
    case "connection": {
      const cleared = action.status === "open" ? { needsResync: false, lastStep: 0 } : {};
      return { ...state, connection: action.status, ...cleared };
    }
    case "echo":
      return {
        ...state,
        lastSaidText: action.saidText ?? state.lastSaidText,
        trace: pushTrace(state, { step: null, text: action.text, confirmed: false, kind: "echo" }),
      };
    case "answered":
      return { ...state, pendingQuery: null };
    case "invalid-frame":
      return { ...state, needsResync: true, notice: "malformed frame received; resync requested" };
    case "dismiss-notice":
      return { ...state, notice: null };
    case "frame":
      return applyFrame(state, action.frame);
  }
}

function applyFrame(state: UiSessionState, frame: ServerFrame): UiSessionState {
  switch (frame.type) {
    case "trace-event": {
      if (frame.step <= state.lastStep) {
        // out of order: never render silently-wrong history
        return { ...state, needsResync: true, notice: "out-of-order frame; resync requested" };
      }
      const record = parseMessageRecord(frame.payload)!;
      const line = `${frame.step}  ${record.performative}  ${record.sender} -> ${record.recipients.join(",")}`;
      return {
        ...state,
        lastStep: frame.step,
        trace: pushTrace(state, { step: frame.step, text: line, confirmed: true, kind: "message" }),
      };
    }
    case "user-query": {
      const record = parseMessageRecord(frame.payload)!;
      const question = String(record.content.question ?? "");
      const options = Array.isArray(record.content.options)
        ? (record.content.options as string[])
        : [];
      return { ...state, pendingQuery: { question, options } };
    }
    case "output": {
      const record = parseMessageRecord(frame.payload)!;
      return { ...state, lastOutput: String(record.content.payload ?? "") };
    }
    case "map-state":
      return { ...state, map: frame.payload };
    case "ack":
      return { ...state, trace: confirmOldestEcho(state.trace) };
    case "error": {
      const conflict = frame.payload.code === "conflict";
      return {
        ...state,
        notice: conflict ? `conflict: ${frame.payload.detail}` : `error: ${frame.payload.detail}`,
      };
    }
  }
}
