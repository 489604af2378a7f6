// Frame and event grammar for the gateway socket, with runtime validators.
// The server wraps everything in an envelope {type, payload}; trace-style
// payloads are encoded message records (JSON text) in the core wire format.

export interface MessageRecord {
  performative: string;
  sender: string;
  recipients: string[];
  user: string;
  request: string;
  seq: number;
  content: Record<string, unknown>;
}

export type ServerFrame =
  | { type: "trace-event"; step: number; payload: string }
  | { type: "output"; payload: string }
  | { type: "user-query"; payload: string }
  | { type: "map-state"; payload: MapSnapshot }
  | { type: "ack"; payload: { type: string } }
  | { type: "error"; payload: { code: string; detail: string } };

export interface MapSnapshot {
  center: [number, number];
  zoom: number;
  places: { name: string; kind: string; position: [number, number] }[];
}

export type ClientEvent =
  | { type: "say"; payload: { text: string } }
  | { type: "click"; payload: { x: number; y: number } }
  | { type: "answer"; payload: { option: string } }
  | { type: "feedback-remark"; payload: { text: string } }
  | { type: "pause"; payload: { seconds: number } };

const FRAME_TYPES = new Set(["trace-event", "output", "user-query", "map-state", "ack", "error"]);

function isRecordObject(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

export function parseMessageRecord(payload: string): MessageRecord | null {
  let raw: unknown;
  try {
    raw = JSON.parse(payload);
  } catch {
    return null;
  }
  if (!isRecordObject(raw)) return null;
  if (typeof raw.performative !== "string" || typeof raw.sender !== "string") return null;
  if (!Array.isArray(raw.recipients) || !raw.recipients.every((r) => typeof r === "string")) return null;
  if (typeof raw.user !== "string" || typeof raw.request !== "string") return null;
  if (typeof raw.seq !== "number" || !isRecordObject(raw.content)) return null;
  return raw as unknown as MessageRecord;
}

function isMapSnapshot(value: unknown): value is MapSnapshot {
  if (!isRecordObject(value)) return false;
  const { center, zoom, places } = value as Partial<MapSnapshot>;
  if (!Array.isArray(center) || center.length !== 2) return false;
  if (typeof zoom !== "number" || zoom < 1) return false;
  if (!Array.isArray(places)) return false;
  return places.every(
    (p) =>
      isRecordObject(p) &&
      typeof p.name === "string" &&
      typeof p.kind === "string" &&
      Array.isArray(p.position) &&
      p.position.length === 2,
  );
}

/** Validate one incoming frame; null means it must be surfaced as a resync. */
export function validateServerFrame(raw: unknown): ServerFrame | null {
  if (!isRecordObject(raw) || typeof raw.type !== "string" || !FRAME_TYPES.has(raw.type)) return null;
  switch (raw.type) {
    case "trace-event":
      if (typeof raw.step !== "number" || typeof raw.payload !== "string") return null;
      if (parseMessageRecord(raw.payload) === null) return null;
      return raw as ServerFrame;
    case "output":
    case "user-query":
      if (typeof raw.payload !== "string" || parseMessageRecord(raw.payload) === null) return null;
      return raw as ServerFrame;
    case "map-state":
      return isMapSnapshot(raw.payload) ? (raw as ServerFrame) : null;
    case "ack":
      return isRecordObject(raw.payload) && typeof raw.payload.type === "string"
        ? (raw as ServerFrame)
        : null;
    case "error":
      return isRecordObject(raw.payload) && typeof raw.payload.code === "string"
        ? (raw as ServerFrame)
        : null;
  }
  return null;
}

/** Validate an outgoing event; the UI must never send a malformed one. */
export function validateClientEvent(event: ClientEvent): boolean {
  switch (event.type) {
    case "say":
      return typeof event.payload.text === "string" && event.payload.text.length > 0;
    case "click":
      return Number.isInteger(event.payload.x) && Number.isInteger(event.payload.y);
    case "answer":
      return typeof event.payload.option === "string" && event.payload.option.length > 0;
    case "feedback-remark":
      return typeof event.payload.text === "string" && event.payload.text.length > 0;
    case "pause":
      return typeof event.payload.seconds === "number" && event.payload.seconds >= 0;
    default:
      return false;
  }
}
