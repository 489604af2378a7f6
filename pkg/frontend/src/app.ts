// Wires the reducer, the gateway socket, and the DOM together.
// Exported as a function of its dependencies so tests can drive it with a
// fake socket and a jsdom document.

import { connect, createSession, GatewaySocket, SocketFactory, wsUrl } from "./client";
import { initialState, reduce, UiSessionState, Action } from "./reducer";
import { mount, render, Handlers } from "./render";
import { ClientEvent } from "./types";

export interface App {
  state(): UiSessionState;
  dispatch(action: Action): void;
  close(): void;
}

export async function startApp(
  root: HTMLElement,
  baseUrl: string,
  user: string,
  socketFactory?: SocketFactory,
): Promise<App> {
  let state = initialState();
  let socket: GatewaySocket | null = null;

  const dispatch = (action: Action) => {
    state = reduce(state, action);
    render(root, state, handlers);
  };

  const submit = (event: ClientEvent, echo: string, saidText?: string) => {
    dispatch({ kind: "echo", text: echo, saidText });
    socket?.send(event);
  };

  const handlers: Handlers = {
    onSay: (text) => submit({ type: "say", payload: { text } }, `you: ${text}`, text),
    onClickCell: (x, y) => submit({ type: "click", payload: { x, y } }, `you: click (${x}, ${y})`),
    onAnswer: (option) => {
      dispatch({ kind: "answered" });
      submit({ type: "answer", payload: { option } }, `you: ${option}`);
    },
    onFeedback: (text) => submit({ type: "feedback-remark", payload: { text } }, `you (feedback): ${text}`),
    onRepeat: () => {
      if (state.lastSaidText) {
        submit({ type: "say", payload: { text: state.lastSaidText } }, `you (repeat): ${state.lastSaidText}`, state.lastSaidText);
      }
    },
  };

  mount(root, handlers);
  render(root, state, handlers);

  const sessionId = await createSession(baseUrl, user);
  dispatch({ kind: "session", sessionId });
  socket = connect(
    wsUrl(baseUrl, sessionId),
    {
      onFrame: (frame) => dispatch({ kind: "frame", frame }),
      onInvalidFrame: () => dispatch({ kind: "invalid-frame" }),
      onStatus: (status) => dispatch({ kind: "connection", status }),
    },
    socketFactory,
  );

  return {
    state: () => state,
    dispatch,
    close: () => socket?.close(),
  };
}
