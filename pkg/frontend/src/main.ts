/**
 * DOM wiring for the alignment grid editor.
 *
 * One task is open at a time. Local toggles render immediately; saves
 * are debounced full-set PUTs. A rejected save (409/422) rolls the
 * grid back to the last acknowledged state. A failed save (server
 * unreachable) leaves the dirty flag up and retries on a timer. The
 * session timer only counts focused time and is folded into each PUT.
 */

import { ApiError, getTask, listTasks, putAlignment, submitTask } from "./api.js";
import { Debouncer } from "./debounce.js";
import {
  GridState,
  canEdit,
  cellKey,
  initState,
  ackLinks,
  linksOut,
  markSubmitted,
  moveCursor,
  rollback,
  setFocus,
  tick,
  toggleAtCursor,
  toggleCell,
} from "./state.js";

const SAVE_DELAY_MS = 500;
const RETRY_MS = 3000;
const TICK_MS = 1000;

let state: GridState | null = null;
let lastTick = Date.now();

const taskList = document.getElementById("task-list") as HTMLElement;
const gridHost = document.getElementById("grid") as HTMLElement;
const banner = document.getElementById("banner") as HTMLElement;
const timerEl = document.getElementById("timer") as HTMLElement;
const statusEl = document.getElementById("status") as HTMLElement;
const submitBtn = document.getElementById("submit") as HTMLButtonElement;

const saver = new Debouncer(saveNow, SAVE_DELAY_MS);

async function saveNow(): Promise<void> {
  if (!state || !state.dirty || !canEdit(state)) return;
  const current = state;
  try {
    const acked = await putAlignment(current.taskId, linksOut(current),
                                     current.elapsedMs);
    if (state && state.taskId === current.taskId) {
      state = ackLinks(state, acked.links);
      render();
    }
  } catch (err) {
    if (!state || state.taskId !== current.taskId) return;
    if (err instanceof ApiError && (err.status === 422 || err.status === 409)) {
      state = rollback(state, err.message);
      if (err.status === 409) state = markSubmitted(state);
      render();
    } else {
      // unreachable server: keep dirty, surface it, retry later
      state = { ...state, error: "save failed, retrying" };
      render();
      setTimeout(() => saver.schedule(), RETRY_MS);
    }
  }
}

function showBanner(message: string | null): void {
  banner.textContent = message ?? "";
  banner.classList.toggle("visible", message !== null);
}

function fmtClock(ms: number): string {
  const s = Math.floor(ms / 1000);
  const mm = String(Math.floor(s / 60)).padStart(2, "0");
  const ss = String(s % 60).padStart(2, "0");
  return `${mm}:${ss}`;
}

function render(): void {
  if (!state) return;
  showBanner(state.error);
  timerEl.textContent = fmtClock(state.elapsedMs);
  statusEl.textContent = state.phase === "submitted"
    ? "submitted (read-only)"
    : state.dirty ? "unsaved edits" : "saved";
  statusEl.className = state.dirty ? "dirty" : "clean";
  submitBtn.disabled = !canEdit(state);

  const table = document.createElement("table");
  table.className = "grid-table";
  const head = table.createTHead().insertRow();
  head.appendChild(document.createElement("th"));
  state.source.forEach((token, i) => {
    const th = document.createElement("th");
    th.textContent = token;
    th.title = `source ${i}`;
    head.appendChild(th);
  });
  const body = table.createTBody();
  state.target.forEach((token, j) => {
    const row = body.insertRow();
    const th = document.createElement("th");
    th.textContent = token;
    th.title = `target ${j}`;
    row.appendChild(th);
    state!.source.forEach((_, i) => {
      const cell = row.insertCell();
      cell.className = "cell";
      if (state!.cells.has(cellKey(i, j))) cell.classList.add("on");
      if (state!.cursor.row === j && state!.cursor.col === i)
        cell.classList.add("cursor");
      if (canEdit(state!)) {
        cell.addEventListener("click", () => {
          state = toggleCell(state!, i, j);
          state = { ...state, cursor: { row: j, col: i } };
          render();
          saver.schedule();
        });
      }
    });
  });
  gridHost.replaceChildren(table);
}

async function openTask(id: string): Promise<void> {
  try {
    await saver.flush();
    const payload = await getTask(id);
    state = setFocus(initState(payload), document.hasFocus());
    lastTick = Date.now();
    render();
  } catch (err) {
    state = null;
    gridHost.replaceChildren();
    showBanner(err instanceof Error ? err.message : String(err));
  }
}

async function refreshTaskList(): Promise<void> {
  try {
    const tasks = await listTasks();
    taskList.replaceChildren(
      ...tasks.map((task) => {
        const item = document.createElement("li");
        const link = document.createElement("a");
        link.href = "#";
        link.textContent = `${task.id} (${task.n_source}×${task.n_target})`;
        link.addEventListener("click", (ev) => {
          ev.preventDefault();
          void openTask(task.id);
        });
        item.appendChild(link);
        item.className = task.status;
        taskListCurrent(item, task.id);
        return item;
      }),
    );
  } catch (err) {
    showBanner(err instanceof Error ? err.message : String(err));
  }
}

function taskListCurrent(item: HTMLElement, id: string): void {
  if (state && state.taskId === id) item.classList.add("current");
}

document.addEventListener("keydown", (ev) => {
  if (!state) return;
  const moves: Record<string, [number, number]> = {
    ArrowUp: [-1, 0], ArrowDown: [1, 0],
    ArrowLeft: [0, -1], ArrowRight: [0, 1],
  };
  if (ev.key in moves) {
    const [dr, dc] = moves[ev.key];
    state = moveCursor(state, dr, dc);
    render();
    ev.preventDefault();
  } else if (ev.key === " ") {
    state = toggleAtCursor(state);
    render();
    saver.schedule();
    ev.preventDefault();
  }
});

submitBtn.addEventListener("click", async () => {
  if (!state || !canEdit(state)) return;
  try {
    await saver.flush();
    if (state.dirty) return; // the flush failed; keep editing
    await submitTask(state.taskId);
    state = markSubmitted(state);
    render();
    void refreshTaskList();
  } catch (err) {
    if (state) {
      state = { ...state, error: err instanceof Error ? err.message : String(err) };
      render();
    }
  }
});

function onFocusChange(): void {
  if (!state) return;
  state = setFocus(state, document.hasFocus() &&
    document.visibilityState === "visible");
}

window.addEventListener("focus", onFocusChange);
window.addEventListener("blur", onFocusChange);
document.addEventListener("visibilitychange", onFocusChange);

setInterval(() => {
  const now = Date.now();
  if (state) {
    state = tick(state, now - lastTick);
    timerEl.textContent = fmtClock(state.elapsedMs);
  }
  lastTick = now;
}, TICK_MS);

void refreshTaskList();
