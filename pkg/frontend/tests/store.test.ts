import { describe, expect, it } from "vitest";

import { AnnotateApi, type TaskDto } from "../src/api.js";
import { classForKey, STRUCTURAL_CLASSES } from "../src/classes.js";
import { AnnotationStore } from "../src/store.js";

interface RecordedPost {
  image_id: string;
  class: string;
}

/** In-memory stand-in for the annotation backend. */
function fakeBackend(taskIds: string[]) {
  const posts: RecordedPost[] = [];
  const labels = new Map<string, string>();
  let failNextPost: number | null = null;

  const fetchImpl = async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const json = (status: number, body: unknown) =>
      new Response(JSON.stringify(body), { status });

    if (url.endsWith("/api/task/next")) {
      const pending = taskIds.filter((id) => !labels.has(id));
      if (pending.length === 0) return json(404, { detail: "no pending tasks" });
      const task: TaskDto = {
        image_id: pending[0],
        dataset_id: "d",
        mz: 100,
        ppm: 3,
        png_base64: "",
        remaining: pending.length,
      };
      return json(200, task);
    }
    if (url.endsWith("/api/labels")) {
      const body = JSON.parse(String(init?.body)) as RecordedPost;
      posts.push(body);
      if (failNextPost !== null) {
        const status = failNextPost;
        failNextPost = null;
        return json(status, { detail: "rejected" });
      }
      labels.set(body.image_id, body.class);
      return json(200, { ...body, status: "labeled" });
    }
    if (url.endsWith("/api/progress")) {
      const perClass: Record<string, number> = {};
      for (const cls of labels.values()) perClass[cls] = (perClass[cls] ?? 0) + 1;
      return json(200, {
        per_class: perClass,
        labeled: labels.size,
        total: taskIds.length,
        pending: taskIds.length - labels.size,
      });
    }
    if (url.endsWith("/api/classes")) {
      return json(200, { classes: [...STRUCTURAL_CLASSES] });
    }
    return json(404, { detail: `no route ${url}` });
  };

  return {
    posts,
    labels,
    failNext: (status: number) => {
      failNextPost = status;
    },
    api: new AnnotateApi("", fetchImpl as typeof fetch),
  };
}

describe("keyboard class mapping", () => {
  it("maps digits 1..6 onto the canonical class order", () => {
    expect(STRUCTURAL_CLASSES).toEqual([
      "Structured",
      "WeaklyStructured",
      "Localized",
      "Fragmented",
      "Unstructured",
      "Negative",
    ]);
    for (let i = 1; i <= 6; i++) {
      expect(classForKey(String(i))).toBe(STRUCTURAL_CLASSES[i - 1]);
    }
    expect(classForKey("0")).toBeNull();
    expect(classForKey("7")).toBeNull();
    expect(classForKey("a")).toBeNull();
  });

  it("agrees with the class list served by the API", async () => {
    const backend = fakeBackend([]);
    expect(await backend.api.classes()).toEqual([...STRUCTURAL_CLASSES]);
  });
});

describe("label flow", () => {
  it("issues exactly one POST per decision and advances", async () => {
    const backend = fakeBackend(["a", "b"]);
    const store = new AnnotationStore(backend.api);
    await store.start();
    expect(store.state().task?.image_id).toBe("a");

    await store.label("Structured");
    expect(backend.posts).toEqual([{ image_id: "a", class: "Structured" }]);
    expect(store.state().task?.image_id).toBe("b");

    await store.label("Negative");
    expect(backend.posts).toHaveLength(2);
    expect(store.state().done).toBe(true);
    expect(store.state().progress?.labeled).toBe(2);
  });

  it("ignores decisions while a POST is pending or no task is loaded", async () => {
    const backend = fakeBackend(["a"]);
    const store = new AnnotationStore(backend.api);
    await store.start();
    // two synchronous decisions race: only the first may POST
    await Promise.all([store.label("Structured"), store.label("Negative")]);
    expect(backend.posts).toHaveLength(1);
    // everything labeled: further decisions are no-ops
    await store.label("Localized");
    expect(backend.posts).toHaveLength(1);
  });

  it("shows a banner on 422 and keeps the task unchanged", async () => {
    const backend = fakeBackend(["a"]);
    const store = new AnnotationStore(backend.api);
    await store.start();
    backend.failNext(422);
    await store.label("Structured");
    const state = store.state();
    expect(state.banner).toContain("rejected");
    expect(state.task?.image_id).toBe("a");
    // the retry succeeds and clears the banner
    await store.label("Structured");
    expect(store.state().banner).toBeNull();
    expect(backend.labels.get("a")).toBe("Structured");
  });

  it("undo issues a revision POST restoring the prior class", async () => {
    const backend = fakeBackend(["a", "b"]);
    const store = new AnnotationStore(backend.api);
    await store.start();
    await store.label("Structured");
    // relabel the same image through a fresh store cycle is not possible
    // here, so revise task b then undo it back is the representative path
    await store.label("Negative"); // labels "b"
    expect(store.state().undoDepth).toBe(2);

    await store.undo(); // "b" had no prior class: local pop, no POST
    expect(backend.posts).toHaveLength(2);
    expect(store.state().undoDepth).toBe(1);
  });

  it("undo after a relabel restores the previous class on the server", async () => {
    const backend = fakeBackend(["a"]);
    const store = new AnnotationStore(backend.api);
    await store.start();
    await store.label("Structured");
    backend.labels.delete("a"); // reopen the task so it can be relabeled
    await store.retry();
    await store.label("Negative");
    expect(backend.labels.get("a")).toBe("Negative");

    await store.undo();
    expect(backend.posts).toHaveLength(3);
    expect(backend.posts[2]).toEqual({ image_id: "a", class: "Structured" });
    expect(backend.labels.get("a")).toBe("Structured");
  });
});
