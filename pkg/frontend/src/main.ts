/** DOM wiring for the curation view: class selector, eps/min_pts sliders,
 * re-cluster and commit buttons, scatter canvas, summary table. */

import { ApiClient } from "./api.js";
import { commitFlow, describeError, reclusterFlow, refreshView } from "./flows.js";
import { buildScene, hitTest, Scene } from "./scene.js";
import { paintScene } from "./scatter.js";
import {
  MIN_PTS_RANGE,
  ViewState,
  clampEps,
  clampMinPts,
  initialState,
  selectClass,
} from "./state.js";
import { renderTable } from "./table.js";

const api = new ApiClient();
let state: ViewState = initialState();
let scene: Scene = { marks: [], decimated: false, sourceCount: 0 };

const el = {
  classSelect: document.getElementById("class-select") as HTMLSelectElement,
  epsSlider: document.getElementById("eps-slider") as HTMLInputElement,
  epsValue: document.getElementById("eps-value") as HTMLInputElement,
  minPtsSlider: document.getElementById("minpts-slider") as HTMLInputElement,
  minPtsValue: document.getElementById("minpts-value") as HTMLInputElement,
  recluster: document.getElementById("recluster") as HTMLButtonElement,
  commit: document.getElementById("commit") as HTMLButtonElement,
  canvas: document.getElementById("scatter") as HTMLCanvasElement,
  status: document.getElementById("status") as HTMLElement,
  notice: document.getElementById("notice") as HTMLElement,
  hover: document.getElementById("hover") as HTMLElement,
  summary: document.getElementById("summary") as HTMLElement,
};

function setStatus(text: string): void {
  el.status.textContent = text;
}

function setControlsEnabled(enabled: boolean): void {
  for (const control of [el.classSelect, el.epsSlider, el.epsValue,
                         el.minPtsSlider, el.minPtsValue, el.recluster, el.commit]) {
    control.disabled = !enabled;
  }
}

function syncSliderInputs(): void {
  el.epsSlider.min = String(state.epsMax / 1000); // strictly positive range
  el.epsSlider.max = String(state.epsMax);
  el.epsSlider.step = String(state.epsMax / 1000);
  el.epsSlider.value = String(state.eps);
  el.epsValue.value = state.eps.toPrecision(4);
  el.minPtsSlider.min = String(MIN_PTS_RANGE.min);
  el.minPtsSlider.max = String(MIN_PTS_RANGE.max);
  el.minPtsSlider.value = String(state.minPts);
  el.minPtsValue.value = String(state.minPts);
}

function repaint(): void {
  const ctx = el.canvas.getContext("2d");
  if (!ctx) {
    return;
  }
  if (state.points.length === 0) {
    ctx.fillStyle = "#ffffff";
    ctx.fillRect(0, 0, el.canvas.width, el.canvas.height);
    el.notice.textContent = "no points in this class";
    scene = { marks: [], decimated: false, sourceCount: 0 };
    return;
  }
  scene = buildScene(state.points, el.canvas.width, el.canvas.height);
  paintScene(ctx, scene, el.canvas.width, el.canvas.height);
  el.notice.textContent = scene.decimated
    ? `showing ${scene.marks.length} of ${scene.sourceCount} points (uniform subsample)`
    : "";
}

async function loadClass(cls: number): Promise<void> {
  const classes = await api.getClasses();
  const config = classes.configs[String(cls)];
  state = selectClass(state, cls, config);
  const view = await refreshView(api, cls);
  state = { ...state, points: view.embedding.points, summary: view.summary };
  syncSliderInputs();
  repaint();
  renderTable(el.summary, view.summary);
}

async function init(): Promise<void> {
  try {
    const classes = await api.getClasses();
    el.classSelect.innerHTML = classes.classes
      .map((c) => `<option value="${c}">class ${c}</option>`)
      .join("");
    if (classes.classes.length > 0) {
      await loadClass(classes.classes[0]);
    }
    setStatus("ready");
  } catch (err) {
    setStatus(describeError(err));
  }
}

el.classSelect.addEventListener("change", () => {
  void loadClass(Number(el.classSelect.value)).catch((err) => setStatus(describeError(err)));
});

el.epsSlider.addEventListener("input", () => {
  state = { ...state, eps: clampEps(Number(el.epsSlider.value), state.epsMax) };
  el.epsValue.value = state.eps.toPrecision(4);
});
el.epsValue.addEventListener("change", () => {
  state = { ...state, eps: clampEps(Number(el.epsValue.value), state.epsMax) };
  syncSliderInputs();
});
el.minPtsSlider.addEventListener("input", () => {
  state = { ...state, minPts: clampMinPts(Number(el.minPtsSlider.value)) };
  el.minPtsValue.value = String(state.minPts);
});
el.minPtsValue.addEventListener("change", () => {
  state = { ...state, minPts: clampMinPts(Number(el.minPtsValue.value)) };
  syncSliderInputs();
});

el.recluster.addEventListener("click", () => {
  setControlsEnabled(false);
  setStatus("re-clustering...");
  reclusterFlow(api, state)
    .then((result) => {
      state = result.state;
      repaint();
      renderTable(el.summary, result.view.summary);
      setStatus(state.status);
    })
    .catch((err) => {
      state = (err.state as ViewState) ?? state;
      setStatus(state.status || describeError(err));
    })
    .finally(() => setControlsEnabled(true));
});

el.commit.addEventListener("click", () => {
  setControlsEnabled(false);
  setStatus("committing...");
  commitFlow(api, state)
    .then((result) => {
      state = result.state;
      renderTable(el.summary, result.summary);
      setStatus(state.status);
    })
    .catch((err) => {
      state = (err.state as ViewState) ?? state;
      setStatus(state.status || describeError(err));
    })
    .finally(() => setControlsEnabled(true));
});

el.canvas.addEventListener("mousemove", (event) => {
  const rect = el.canvas.getBoundingClientRect();
  const mark = hitTest(scene, event.clientX - rect.left, event.clientY - rect.top);
  el.hover.textContent = mark
    ? `idx ${mark.idx} - ${mark.role}${mark.cluster >= 0 ? ` (cluster ${mark.cluster})` : ""}`
    : "";
});

void init();
