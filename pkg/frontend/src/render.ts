// DOM rendering: a grid map with labeled markers, the command box, the
// disambiguation modal, a feedback bar, and the live trace panel.

import { UiSessionState } from "./reducer";

export const GRID = 32;
export const BASE_CELL_PX = 4;

export interface Handlers {
  onSay(text: string): void;
  onClickCell(x: number, y: number): void;
  onAnswer(option: string): void;
  onFeedback(text: string): void;
  onRepeat(): void;
}

export function mount(root: HTMLElement, handlers: Handlers): void {
  root.innerHTML = `
    <header>
      <span id="status" data-status="connecting">connecting</span>
      <span id="notice" hidden></span>
    </header>
    <main>
      <div id="map" aria-label="map"></div>
      <aside>
        <form id="command-form">
          <input id="command" type="text" placeholder="say something (e.g. move it closer)" autocomplete="off" />
          <button id="send" type="submit">Send</button>
        </form>
        <div id="feedback-bar">
          <button id="fb-praise" type="button">thanks</button>
          <button id="fb-complain" type="button">that's wrong</button>
          <button id="fb-repeat" type="button">repeat</button>
          <input id="fb-text" type="text" placeholder="free-text remark" />
          <button id="fb-send" type="button">remark</button>
        </div>
        <div id="last-output" aria-live="polite"></div>
        <ol id="trace"></ol>
      </aside>
    </main>
    <dialog id="query-modal">
      <p id="query-question"></p>
      <div id="query-options"></div>
    </dialog>
  `;

  const command = root.querySelector<HTMLInputElement>("#command")!;
  root.querySelector<HTMLFormElement>("#command-form")!.addEventListener("submit", (event) => {
    event.preventDefault();
    const text = command.value.trim();
    if (!text) return;
    handlers.onSay(text);
    command.value = "";
  });
  root.querySelector<HTMLButtonElement>("#fb-praise")!.addEventListener("click", () => handlers.onFeedback("thanks"));
  root.querySelector<HTMLButtonElement>("#fb-complain")!.addEventListener("click", () => handlers.onFeedback("that's wrong"));
  root.querySelector<HTMLButtonElement>("#fb-repeat")!.addEventListener("click", () => handlers.onRepeat());
  const fbText = root.querySelector<HTMLInputElement>("#fb-text")!;
  root.querySelector<HTMLButtonElement>("#fb-send")!.addEventListener("click", () => {
    const text = fbText.value.trim();
    if (!text) return;
    handlers.onFeedback(text);
    fbText.value = "";
  });
}

export function render(root: HTMLElement, state: UiSessionState, handlers: Handlers): void {
  const status = root.querySelector<HTMLElement>("#status")!;
  status.dataset.status = state.connection;
  status.textContent = state.needsResync ? `${state.connection} (resync needed)` : state.connection;

  const notice = root.querySelector<HTMLElement>("#notice")!;
  notice.hidden = state.notice === null;
  notice.textContent = state.notice ?? "";

  renderMap(root.querySelector<HTMLElement>("#map")!, state, handlers);
  renderModal(root.querySelector<HTMLDialogElement>("#query-modal")!, state, handlers);
  renderTrace(root.querySelector<HTMLElement>("#trace")!, state);

  const output = root.querySelector<HTMLElement>("#last-output")!;
  output.textContent = state.lastOutput ?? "";
}

function renderMap(map: HTMLElement, state: UiSessionState, handlers: Handlers): void {
  const zoom = state.map?.zoom ?? 1;
  const cell = BASE_CELL_PX * zoom; // zooming in makes cells visibly larger
  map.dataset.zoom = String(zoom);
  map.style.width = `${GRID * BASE_CELL_PX}px`;
  map.innerHTML = "";
  const grid = document.createElement("div");
  grid.id = "grid";
  grid.style.display = "grid";
  grid.style.gridTemplateColumns = `repeat(${GRID}, ${cell}px)`;
  grid.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    if (target.dataset.x !== undefined) {
      handlers.onClickCell(Number(target.dataset.x), Number(target.dataset.y));
    }
  });
  for (let y = 0; y < GRID; y += 1) {
    for (let x = 0; x < GRID; x += 1) {
      const div = document.createElement("div");
      div.className = "cell";
      div.dataset.x = String(x);
      div.dataset.y = String(y);
      div.style.width = `${cell}px`;
      div.style.height = `${cell}px`;
      grid.appendChild(div);
    }
  }
  for (const place of state.map?.places ?? []) {
    const [x, y] = place.position;
    const marker = grid.querySelector<HTMLElement>(`[data-x="${x}"][data-y="${y}"]`);
    if (marker) {
      marker.classList.add("place", place.kind);
      marker.title = place.name;
      marker.textContent = place.name[0];
    }
  }
  map.appendChild(grid);
}

function renderModal(modal: HTMLDialogElement, state: UiSessionState, handlers: Handlers): void {
  if (state.pendingQuery === null) {
    modal.removeAttribute("open");
    return;
  }
  modal.setAttribute("open", "");
  modal.querySelector<HTMLElement>("#query-question")!.textContent = state.pendingQuery.question;
  const options = modal.querySelector<HTMLElement>("#query-options")!;
  options.innerHTML = "";
  for (const option of state.pendingQuery.options) {
    const button = document.createElement("button");
    button.type = "button";
    button.className = "option";
    button.dataset.option = option;
    button.textContent = option;
    button.addEventListener("click", () => handlers.onAnswer(option));
    options.appendChild(button);
  }
}

function renderTrace(list: HTMLElement, state: UiSessionState): void {
  list.innerHTML = "";
  for (const entry of state.trace.slice(-40)) {
    const item = document.createElement("li");
    item.textContent = entry.text;
    item.className = entry.kind + (entry.confirmed ? "" : " unconfirmed");
    list.appendChild(item);
  }
}
