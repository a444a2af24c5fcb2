import type { AnnotateApi, ProgressDto, TaskDto } from "./api.js";
import type { StructuralClass } from "./classes.js";

export interface UndoRecord {
  imageId: string;
  /** Class the image had before this decision; null if it was unlabeled. */
  previous: StructuralClass | null;
  applied: StructuralClass;
}

export interface UiState {
  task: TaskDto | null;
  progress: ProgressDto | null;
  /** Error banner text, or null when everything is fine. */
  banner: string | null;
  /** True while a label POST is in flight; blocks further decisions. */
  busy: boolean;
  done: boolean;
  undoDepth: number;
}

/** Annotation flow driver, free of any DOM dependency.
 *
 * One decision (keypress or button) issues exactly one label POST; the UI
 * does not advance until that POST is acknowledged. Failures raise the
 * banner and leave the current task unchanged so nothing is lost.
 */
export class AnnotationStore {
  private task: TaskDto | null = null;
  private progress: ProgressDto | null = null;
  private banner: string | null = null;
  private busy = false;
  private done = false;
  private readonly undoStack: UndoRecord[] = [];
  private readonly labeled = new Map<string, StructuralClass>();
  private readonly listeners: Array<(state: UiState) => void> = [];

  constructor(private readonly api: AnnotateApi) {}

  state(): UiState {
    return {
      task: this.task,
      progress: this.progress,
      banner: this.banner,
      busy: this.busy,
      done: this.done,
      undoDepth: this.undoStack.length,
    };
  }

  subscribe(listener: (state: UiState) => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    const snapshot = this.state();
    for (const listener of this.listeners) listener(snapshot);
  }

  async start(): Promise<void> {
    await this.refresh();
  }

  private async refresh(): Promise<void> {
    try {
      this.task = await this.api.nextTask();
      this.done = this.task === null;
      this.progress = await this.api.progress();
      this.banner = null;
    } catch (error) {
      this.banner = `Backend unreachable: ${String(error)}. Retry.`;
    }
    this.notify();
  }

  /** Label the current task. No-op without a task or while a POST is pending. */
  async label(cls: StructuralClass): Promise<void> {
    if (this.task === null || this.busy) return;
    const imageId = this.task.image_id;
    this.busy = true;
    this.notify();
    try {
      await this.api.postLabel(imageId, cls);
      this.undoStack.push({
        imageId,
        previous: this.labeled.get(imageId) ?? null,
        applied: cls,
      });
      this.labeled.set(imageId, cls);
      this.busy = false;
      await this.refresh();
    } catch (error) {
      this.busy = false;
      this.banner = `Label failed: ${String(error)}. Retry.`;
      this.notify();
    }
  }

  /** Revert the most recent decision with a revision POST. */
  async undo(): Promise<void> {
    const record = this.undoStack[this.undoStack.length - 1];
    if (record === undefined || this.busy) return;
    if (record.previous === null) {
      // the server keeps every revision; without a prior class the closest
      // restoration is to let the annotator relabel the image directly
      this.undoStack.pop();
      this.banner = `No earlier label for ${record.imageId}; relabel it via /api.`;
      this.notify();
      return;
    }
    this.busy = true;
    this.notify();
    try {
      await this.api.postLabel(record.imageId, record.previous);
      this.undoStack.pop();
      this.labeled.set(record.imageId, record.previous);
      this.busy = false;
      await this.refresh();
    } catch (error) {
      this.busy = false;
      this.banner = `Undo failed: ${String(error)}. Retry.`;
      this.notify();
    }
  }

  async retry(): Promise<void> {
    await this.refresh();
  }
}
