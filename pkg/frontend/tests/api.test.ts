import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, getTask, listTasks, putAlignment, submitTask } from "../src/api";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("api client", () => {
  it("lists tasks", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse(200, [
        { id: "1", status: "pending", n_source: 3, n_target: 2 },
      ]),
    );
    vi.stubGlobal("fetch", fetchMock);
    const tasks = await listTasks();
    expect(fetchMock).toHaveBeenCalledWith("/api/tasks", undefined);
    expect(tasks[0].id).toBe("1");
  });

  it("escapes task ids in urls", async () => {
    const fetchMock = vi.fn(async () => jsonResponse(200, {}));
    vi.stubGlobal("fetch", fetchMock);
    await getTask("a/b c");
    expect(fetchMock.mock.calls[0][0]).toBe("/api/tasks/a%2Fb%20c");
  });

  it("sends the alignment body the server expects", async () => {
    const fetchMock = vi.fn(async () => jsonResponse(200, {}));
    vi.stubGlobal("fetch", fetchMock);
    await putAlignment("7", [[0, 1], [2, 0]], 1234.6);
    const [url, init] = fetchMock.mock.calls[0] as unknown as [
      string,
      RequestInit,
    ];
    expect(url).toBe("/api/tasks/7/alignment");
    expect(init.method).toBe("PUT");
    expect(JSON.parse(init.body as string)).toEqual({
      links: [[0, 1], [2, 0]],
      elapsed_ms: 1235,
    });
  });

  it("submits with POST", async () => {
    const fetchMock = vi.fn(async () => jsonResponse(200, {}));
    vi.stubGlobal("fetch", fetchMock);
    await submitTask("7");
    const [url, init] = fetchMock.mock.calls[0] as unknown as [
      string,
      RequestInit,
    ];
    expect(url).toBe("/api/tasks/7/submit");
    expect(init.method).toBe("POST");
  });

  it("surfaces the server's detail message on errors", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => jsonResponse(409, { detail: "task already submitted" })),
    );
    const err = await submitTask("7").catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(409);
    expect((err as ApiError).message).toBe("task already submitted");
  });

  it("falls back to the status code when the body is not json", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => new Response("<html>oops</html>", { status: 500 })),
    );
    const err = await listTasks().catch((e: unknown) => e);
    expect((err as ApiError).status).toBe(500);
    expect((err as ApiError).message).toBe("HTTP 500");
  });

  it("maps network failure to status 0", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => {
        throw new TypeError("fetch failed");
      }),
    );
    const err = await listTasks().catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(0);
    expect((err as ApiError).message).toMatch(/network error/);
  });
});
