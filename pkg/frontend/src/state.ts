/**
 * Pure grid state for the alignment editor.
 *
 * Columns are source tokens, rows are target tokens; a toggled cell
 * (i, j) is a link between source i and target j. All transitions
 * return fresh state objects so the DOM layer can diff cheaply and
 * tests stay value-based. Server truth lives in `acked`; `dirty` is
 * true exactly when the local set differs from it.
 */

export interface TaskPayload {
  id: string;
  source: string[];
  target: string[];
  links: number[][];
  status: "pending" | "submitted";
  elapsed_ms: number;
  annotator?: string;
}

export type Phase = "editing" | "submitted";

export interface GridState {
  taskId: string;
  source: string[];
  target: string[];
  cells: Set<string>;
  acked: Set<string>;
  phase: Phase;
  dirty: boolean;
  elapsedMs: number;
  timerRunning: boolean;
  cursor: { row: number; col: number };
  error: string | null;
}

export function cellKey(i: number, j: number): string {
  return `${i},${j}`;
}

export function parseKey(key: string): [number, number] {
  const [i, j] = key.split(",").map(Number);
  return [i, j];
}

function badPayload(reason: string): Error {
  return new Error(`malformed task payload: ${reason}`);
}

/** Validate a server payload; throw (so the caller shows a banner,
 *  not a partial grid) on anything structurally wrong. */
export function validatePayload(raw: unknown): TaskPayload {
  const task = raw as TaskPayload;
  if (!task || typeof task.id !== "string") throw badPayload("missing id");
  if (!Array.isArray(task.source) || task.source.length === 0)
    throw badPayload("empty source");
  if (!Array.isArray(task.target) || task.target.length === 0)
    throw badPayload("empty target");
  if (!Array.isArray(task.links)) throw badPayload("links not a list");
  for (const link of task.links) {
    if (!Array.isArray(link) || link.length !== 2)
      throw badPayload(`bad link ${JSON.stringify(link)}`);
    const [i, j] = link;
    if (!Number.isInteger(i) || !Number.isInteger(j))
      throw badPayload(`non-integer link ${JSON.stringify(link)}`);
    if (i < 0 || i >= task.source.length || j < 0 || j >= task.target.length)
      throw badPayload(`link ${i}-${j} out of bounds`);
  }
  if (task.status !== "pending" && task.status !== "submitted")
    throw badPayload(`unknown status ${String(task.status)}`);
  return task;
}

export function initState(raw: unknown): GridState {
  const task = validatePayload(raw);
  const cells = new Set(task.links.map(([i, j]) => cellKey(i, j)));
  return {
    taskId: task.id,
    source: task.source,
    target: task.target,
    cells,
    acked: new Set(cells),
    phase: task.status === "submitted" ? "submitted" : "editing",
    dirty: false,
    elapsedMs: task.elapsed_ms ?? 0,
    timerRunning: false,
    cursor: { row: 0, col: 0 },
    error: null,
  };
}

function setsEqual(a: Set<string>, b: Set<string>): boolean {
  if (a.size !== b.size) return false;
  for (const k of a) if (!b.has(k)) return false;
  return true;
}

export function canEdit(state: GridState): boolean {
  return state.phase === "editing";
}

/** Flip one cell; out-of-bounds coordinates and submitted tasks are no-ops. */
export function toggleCell(state: GridState, i: number, j: number): GridState {
  if (!canEdit(state)) return state;
  if (i < 0 || i >= state.source.length) return state;
  if (j < 0 || j >= state.target.length) return state;
  const cells = new Set(state.cells);
  const key = cellKey(i, j);
  if (cells.has(key)) cells.delete(key);
  else cells.add(key);
  return {
    ...state,
    cells,
    dirty: !setsEqual(cells, state.acked),
    error: null,
  };
}

/** Sorted [i, j] rows, the exact shape the PUT body wants. */
export function linksOut(state: GridState): number[][] {
  return [...state.cells]
    .map(parseKey)
    .sort((a, b) => a[0] - b[0] || a[1] - b[1])
    .map(([i, j]) => [i, j]);
}

/** Server acknowledged `links`: adopt as truth, clear dirty if we
 *  haven't typed ahead in the meantime. */
export function ackLinks(state: GridState, links: number[][]): GridState {
  const acked = new Set(links.map(([i, j]) => cellKey(i, j)));
  return { ...state, acked, dirty: !setsEqual(state.cells, acked) };
}

/** Server rejected the edit: back to the last acknowledged set. */
export function rollback(state: GridState, message: string): GridState {
  return {
    ...state,
    cells: new Set(state.acked),
    dirty: false,
    error: message,
  };
}

export function markSubmitted(state: GridState): GridState {
  return { ...state, phase: "submitted", timerRunning: false };
}

/** Timer advances only while running (i.e. the tab is focused). */
export function tick(state: GridState, deltaMs: number): GridState {
  if (!state.timerRunning || state.phase === "submitted") return state;
  if (deltaMs < 0) return state;
  return { ...state, elapsedMs: state.elapsedMs + deltaMs };
}

export function setFocus(state: GridState, focused: boolean): GridState {
  if (state.phase === "submitted")
    return { ...state, timerRunning: false };
  return { ...state, timerRunning: focused };
}

export function moveCursor(state: GridState, dRow: number,
                           dCol: number): GridState {
  const row = Math.min(Math.max(state.cursor.row + dRow, 0),
                       state.target.length - 1);
  const col = Math.min(Math.max(state.cursor.col + dCol, 0),
                       state.source.length - 1);
  return { ...state, cursor: { row, col } };
}

export function toggleAtCursor(state: GridState): GridState {
  return toggleCell(state, state.cursor.col, state.cursor.row);
}
