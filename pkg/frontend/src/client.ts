// Thin gateway client: create a session over HTTP, then speak frames over
// the WebSocket. Reconnects with visible status; never drops frames silently.

import { ClientEvent, validateClientEvent, validateServerFrame, ServerFrame } from "./types";
import { ConnectionStatus } from "./reducer";

export interface GatewaySocket {
  send(event: ClientEvent): void;
  close(): void;
}

export interface ClientCallbacks {
  onFrame(frame: ServerFrame): void;
  onInvalidFrame(): void;
  onStatus(status: ConnectionStatus): void;
}

export async function createSession(baseUrl: string, user: string): Promise<string> {
  const response = await fetch(`${baseUrl}/sessions`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ user }),
  });
  if (!response.ok) throw new Error(`create-session failed: ${response.status}`);
  const body = (await response.json()) as { session_id: string };
  return body.session_id;
}

export function wsUrl(baseUrl: string, sessionId: string): string {
  return `${baseUrl.replace(/^http/, "ws")}/sessions/${sessionId}/ws`;
}

interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((this: unknown, ev: unknown) => void) | null;
  onmessage: ((this: unknown, ev: { data: unknown }) => void) | null;
  onclose: ((this: unknown, ev: unknown) => void) | null;
  onerror: ((this: unknown, ev: unknown) => void) | null;
}

export type SocketFactory = (url: string) => WebSocketLike;

export function connect(
  url: string,
  callbacks: ClientCallbacks,
  factory: SocketFactory = (u) => new WebSocket(u) as unknown as WebSocketLike,
  maxRetries = 3,
): GatewaySocket {
  let socket: WebSocketLike;
  let closedByUs = false;
  let retries = 0;

  const open = () => {
    callbacks.onStatus(retries > 0 ? "reconnecting" : "connecting");
    socket = factory(url);
    socket.onopen = () => {
      retries = 0;
      callbacks.onStatus("open");
    };
    socket.onmessage = (event) => {
      let raw: unknown;
      try {
        raw = JSON.parse(String(event.data));
      } catch {
        callbacks.onInvalidFrame();
        return;
      }
      const frame = validateServerFrame(raw);
      if (frame === null) callbacks.onInvalidFrame();
      else callbacks.onFrame(frame);
    };
    socket.onclose = () => {
      if (closedByUs) return;
      if (retries < maxRetries) {
        retries += 1;
        callbacks.onStatus("reconnecting");
        setTimeout(open, 250 * retries);
      } else {
        callbacks.onStatus("closed");
      }
    };
    socket.onerror = () => {
      // onclose follows; status handled there
    };
  };
  open();

  return {
    send(event: ClientEvent) {
      if (!validateClientEvent(event)) throw new Error(`malformed client event: ${JSON.stringify(event)}`);
      socket.send(JSON.stringify(event));
    },
    close() {
      closedByUs = true;
      socket.close();
    },
  };
}
