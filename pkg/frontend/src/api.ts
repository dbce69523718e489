/** Thin typed wrapper over the annotation service JSON API. */

import type { TaskPayload } from "./state.js";

export interface TaskSummary {
  id: string;
  status: "pending" | "submitted";
  n_source: number;
  n_target: number;
}

export class ApiError extends Error {
  status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(path, init);
  } catch (err) {
    throw new ApiError(0, `network error: ${String(err)}`);
  }
  let body: unknown = null;
  try {
    body = await response.json();
  } catch {
    // non-JSON bodies fall through as null
  }
  if (!response.ok) {
    const detail =
      body && typeof (body as { detail?: unknown }).detail === "string"
        ? (body as { detail: string }).detail
        : `HTTP ${response.status}`;
    throw new ApiError(response.status, detail);
  }
  return body as T;
}

export function listTasks(): Promise<TaskSummary[]> {
  return request<TaskSummary[]>("/api/tasks");
}

export function getTask(id: string): Promise<TaskPayload> {
  return request<TaskPayload>(`/api/tasks/${encodeURIComponent(id)}`);
}

export function putAlignment(
  id: string,
  links: number[][],
  elapsedMs: number,
): Promise<TaskPayload> {
  return request<TaskPayload>(
    `/api/tasks/${encodeURIComponent(id)}/alignment`,
    {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ links, elapsed_ms: Math.round(elapsedMs) }),
    },
  );
}

export function submitTask(id: string): Promise<TaskPayload> {
  return request<TaskPayload>(`/api/tasks/${encodeURIComponent(id)}/submit`, {
    method: "POST",
  });
}
