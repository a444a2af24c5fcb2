import { AnnotateApi } from "./api.js";
import { classForKey, STRUCTURAL_CLASSES } from "./classes.js";
import { AnnotationStore } from "./store.js";

const api = new AnnotateApi();
const store = new AnnotationStore(api);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const image = el<HTMLImageElement>("ion-image");
const meta = el<HTMLElement>("task-meta");
const banner = el<HTMLElement>("banner");
const progressBar = el<HTMLElement>("progress-bar");
const progressText = el<HTMLElement>("progress-text");
const buttons = el<HTMLElement>("class-buttons");
const undoButton = el<HTMLButtonElement>("undo");
const retryButton = el<HTMLButtonElement>("retry");
const colormapToggle = el<HTMLInputElement>("colormap");

STRUCTURAL_CLASSES.forEach((cls, i) => {
  const button = document.createElement("button");
  button.textContent = `${i + 1} ${cls}`;
  button.addEventListener("click", () => void store.label(cls));
  buttons.appendChild(button);
});

undoButton.addEventListener("click", () => void store.undo());
retryButton.addEventListener("click", () => void store.retry());
// display-only colormap; the label payload never carries it
colormapToggle.addEventListener("change", () => {
  image.classList.toggle("colormapped", colormapToggle.checked);
});

document.addEventListener("keydown", (event) => {
  if (event.repeat) return;
  const cls = classForKey(event.key);
  if (cls !== null) {
    void store.label(cls);
  } else if (event.key === "u") {
    void store.undo();
  }
});

store.subscribe((state) => {
  banner.hidden = state.banner === null;
  banner.textContent = state.banner ?? "";
  retryButton.hidden = state.banner === null;
  undoButton.disabled = state.undoDepth === 0 || state.busy;
  for (const button of buttons.querySelectorAll("button")) {
    button.disabled = state.busy || state.task === null;
  }
  if (state.task !== null) {
    image.src = `data:image/png;base64,${state.task.png_base64}`;
    meta.textContent =
      `${state.task.dataset_id}  m/z ${state.task.mz.toFixed(4)} ` +
      `(±${state.task.ppm} ppm)  — ${state.task.remaining} remaining`;
  } else if (state.done) {
    meta.textContent = "All images labeled.";
    image.removeAttribute("src");
  }
  if (state.progress !== null) {
    const { labeled, total, per_class } = state.progress;
    const pct = total > 0 ? Math.round((100 * labeled) / total) : 0;
    progressBar.style.width = `${pct}%`;
    progressText.textContent =
      `${labeled}/${total} · ` +
      STRUCTURAL_CLASSES.map((c) => `${c}: ${per_class[c] ?? 0}`).join("  ");
  }
});

void store.start();
