// Editor entry point: wires the session, viewer and DOM controls.

import { EngineApi, FetchTransport } from "./api.js";
import { EditorSession } from "./session.js";
import { Viewer } from "./viewer.js";
import { add } from "./camera.js";
import { Vec3 } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function start() {
  const canvas = el<HTMLCanvasElement>("viewport");
  const statusLine = el<HTMLElement>("status");
  const errorPanel = el<HTMLElement>("error-panel");
  const hintLine = el<HTMLElement>("hint");
  const inspector = el<HTMLElement>("inspector");
  const methodSelect = el<HTMLSelectElement>("method");
  const cageInput = el<HTMLInputElement>("cage-radius");
  const fixedInput = el<HTMLInputElement>("fixed-radius");
  const runButton = el<HTMLButtonElement>("run");
  const cancelButton = el<HTMLButtonElement>("cancel");
  const toggleButton = el<HTMLButtonElement>("toggle-layer");
  const clearButton = el<HTMLButtonElement>("clear-handles");

  const api = new EngineApi(new FetchTransport(""));
  const session = new EditorSession(api);
  const viewer = new Viewer(canvas, session);

  function resize() {
    canvas.width = canvas.clientWidth;
    canvas.height = canvas.clientHeight;
    viewer.draw();
  }
  window.addEventListener("resize", resize);

  await session.loadScene();
  viewer.fit();
  resize();

  function refreshUi() {
    statusLine.textContent =
      `${session.state}` +
      (session.queueDepth ? ` (queue ${session.queueDepth})` : "") +
      (session.lastResponseId !== null
        ? ` | showing response #${session.lastResponseId}`
        : " | showing source");
    errorPanel.textContent = session.lastError ?? "";
    errorPanel.style.display = session.lastError ? "block" : "none";
    hintLine.textContent = session.hint ?? "";
    inspector.textContent = session.handles
      .map(
        (h, k) =>
          `#${k} splat ${h.splatIndex} d=(${h.displacement
            .map((v) => v.toFixed(3))
            .join(", ")})`,
      )
      .join("\n");
    cageInput.disabled = session.method !== "bbw";
    viewer.draw();
  }

  // camera + handle interaction ------------------------------------------
  let draggingCamera = false;
  let draggingHandle: number | null = null;
  let lastX = 0;
  let lastY = 0;
  let dragBase: Vec3 = [0, 0, 0];

  canvas.addEventListener("mousedown", (ev) => {
    lastX = ev.offsetX;
    lastY = ev.offsetY;
    if (ev.shiftKey) {
      // shift-click: place a new handle on the nearest preview point
      const pick = viewer.pickPreviewPoint(ev.offsetX, ev.offsetY);
      void session.placeHandle(pick ? pick.position : null).then(refreshUi);
      return;
    }
    // grab the nearest handle anchor if close enough, else orbit
    const vp = viewer.viewport();
    let grabbed: number | null = null;
    session.handles.forEach((h, k) => {
      const p = viewer.camera.project(h.anchor, vp);
      if (p && Math.hypot(p[0] - ev.offsetX, p[1] - ev.offsetY) < 10) {
        grabbed = k;
      }
    });
    if (grabbed !== null) {
      draggingHandle = grabbed;
      dragBase = session.handles[grabbed].displacement;
    } else {
      draggingCamera = true;
    }
  });

  canvas.addEventListener("mousemove", (ev) => {
    if (draggingHandle !== null) {
      const delta = viewer.dragToWorld(
        draggingHandle,
        ev.offsetX - lastX,
        ev.offsetY - lastY,
      );
      session.dragHandle(draggingHandle, add(dragBase, delta));
      refreshUi();
      return;
    }
    if (draggingCamera) {
      viewer.camera.orbit(
        -(ev.offsetX - lastX) * 0.008,
        (ev.offsetY - lastY) * 0.008,
      );
      lastX = ev.offsetX;
      lastY = ev.offsetY;
      viewer.draw();
      return;
    }
    viewer.updateHover(ev.offsetX, ev.offsetY);
    viewer.draw();
  });

  canvas.addEventListener("mouseup", () => {
    // a drag only updates the arrow; the deform request waits for "run"
    draggingCamera = false;
    draggingHandle = null;
  });

  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    viewer.camera.zoom(ev.deltaY > 0 ? 1.1 : 0.9);
    viewer.draw();
  });

  // controls ---------------------------------------------------------------
  methodSelect.addEventListener("change", () => {
    session.method = methodSelect.value === "bbw" ? "bbw" : "arap";
    refreshUi();
  });
  cageInput.addEventListener("change", () => {
    session.cageRadius = parseFloat(cageInput.value);
  });
  fixedInput.addEventListener("change", () => {
    session.fixedRadius = parseFloat(fixedInput.value);
  });
  runButton.addEventListener("click", () => {
    void session.runDeform().then((outcome) => {
      if (outcome.kind === "error" && outcome.retryable) {
        session.hint = "network hiccup; hit run to retry";
      }
      refreshUi();
    });
    refreshUi();
  });
  cancelButton.addEventListener("click", () => {
    void session.cancel().then(refreshUi);
  });
  toggleButton.addEventListener("click", () => {
    session.showAfter = !session.showAfter;
    toggleButton.textContent = session.showAfter ? "show before" : "show after";
    refreshUi();
  });
  clearButton.addEventListener("click", () => {
    session.handles = [];
    refreshUi();
  });

  window.setInterval(() => {
    void session.refreshStatus().then(refreshUi, () => undefined);
  }, 500);

  refreshUi();
}

void start();
