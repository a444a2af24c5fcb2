import type { StructuralClass } from "./classes.js";

export interface TaskDto {
  image_id: string;
  dataset_id: string;
  mz: number;
  ppm: number;
  png_base64: string;
  remaining: number;
}

export interface ProgressDto {
  per_class: Record<string, number>;
  labeled: number;
  total: number;
  pending: number;
}

export interface LabelResponseDto {
  image_id: string;
  class: StructuralClass;
  status: "labeled" | "revised" | "unchanged";
}

export type FetchLike = typeof fetch;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (typeof body?.detail === "string") detail = body.detail;
    } catch {
      /* keep statusText */
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

/** Typed client for the annotation service HTTP API. */
export class AnnotateApi {
  constructor(
    private readonly baseUrl = "",
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  /** Next unlabeled task, or null when everything is labeled. */
  async nextTask(): Promise<TaskDto | null> {
    const response = await this.fetchImpl(`${this.baseUrl}/api/task/next`);
    if (response.status === 404) return null;
    return asJson<TaskDto>(response);
  }

  async classes(): Promise<string[]> {
    const response = await this.fetchImpl(`${this.baseUrl}/api/classes`);
    const body = await asJson<{ classes: string[] }>(response);
    return body.classes;
  }

  async postLabel(imageId: string, cls: StructuralClass): Promise<LabelResponseDto> {
    const response = await this.fetchImpl(`${this.baseUrl}/api/labels`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ image_id: imageId, class: cls }),
    });
    return asJson<LabelResponseDto>(response);
  }

  async progress(): Promise<ProgressDto> {
    const response = await this.fetchImpl(`${this.baseUrl}/api/progress`);
    return asJson<ProgressDto>(response);
  }
}
