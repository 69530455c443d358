/**
 * DOM wiring: everything with behavior worth testing lives in the other
 * modules; this file only binds them to elements declared in index.html.
 */

import { WorldsmithClient, type JobDoc, type SessionDoc, type TileDoc } from "./api.js";
import {
  BRUSH_MODES,
  enterDetail,
  exitToGlobal,
  hydrateFromInputs,
  initialState,
  setBrush,
  type BrushMode,
  type EditorState,
} from "./state.js";
import { JobPoller } from "./polling.js";
import { centerOn, layoutTree, worldToScreen, zoomAt, type Viewport } from "./tree.js";

const client = new WorldsmithClient(location.origin);
let editor: EditorState = initialState();
let session: SessionDoc | null = null;
let viewport: Viewport = { panX: 0, panY: 0, zoom: 1 };

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const tileGrid = el<HTMLDivElement>("tile-grid");
const detailPane = el<HTMLDivElement>("detail-pane");
const sceneInput = el<HTMLTextAreaElement>("scene-text");
const brushBar = el<HTMLDivElement>("brush-bar");
const generateButton = el<HTMLButtonElement>("generate");
const blendButton = el<HTMLButtonElement>("blend");
const backButton = el<HTMLButtonElement>("back-to-canvas");
const resultsStrip = el<HTMLDivElement>("results");
const treeCanvas = el<HTMLCanvasElement>("tree");
const statusLine = el<HTMLSpanElement>("status");

const poller = new JobPoller(
  (jobId) => client.pollJob(jobId),
  { onSettled: (job) => void onJobSettled(job) },
);

function activeTile(): TileDoc | null {
  if (!session || editor.view.kind !== "detail") return null;
  const tileId = editor.view.tileId;
  return session.tiles.find((t) => t.tile_id === tileId) ?? null;
}

function setStatus(text: string): void {
  statusLine.textContent = text;
}

function renderGlobal(): void {
  if (!session) return;
  tileGrid.style.gridTemplateColumns = `repeat(${session.grid_cols}, 1fr)`;
  tileGrid.replaceChildren();
  for (const tile of session.tiles) {
    const cell = document.createElement("button");
    cell.className = "tile";
    cell.title = tile.inputs.scene_prompt || tile.tile_id;
    if (tile.current_image) {
      const img = document.createElement("img");
      img.src = client.imageUrl(session.session_id, tile.current_image.image_id, true);
      img.alt = tile.inputs.scene_prompt;
      cell.append(img);
    } else {
      cell.textContent = tile.tile_id;
    }
    cell.addEventListener("click", () => {
      editor = hydrateFromInputs(enterDetail(editor, tile.tile_id), tile.inputs);
      render();
    });
    tileGrid.append(cell);
  }
}

function renderBrushes(): void {
  brushBar.replaceChildren();
  for (const mode of BRUSH_MODES) {
    const button = document.createElement("button");
    button.textContent = mode;
    button.className = mode === editor.brush ? "brush active" : "brush";
    button.addEventListener("click", () => {
      editor = setBrush(editor, mode as BrushMode);
      renderBrushes();
    });
    brushBar.append(button);
  }
}

function renderResults(): void {
  resultsStrip.replaceChildren();
  resultsStrip.classList.toggle("disabled", !poller.resultsEnabled);
  const tile = activeTile();
  if (!session || !tile) return;
  const node = tile.tree.nodes.find((n) => n.node_id === tile.tree.selected_id);
  for (const ref of node?.results ?? []) {
    const img = document.createElement("img");
    img.src = client.imageUrl(session.session_id, ref.image_id, true);
    img.className = tile.current_image?.image_id === ref.image_id ? "result picked" : "result";
    img.addEventListener("click", () => {
      if (!poller.resultsEnabled) return;
      void client
        .withFreshVersion(session!.session_id, (doc) =>
          client.pick(doc.session_id, tile.tile_id, doc.version, ref.image_id),
        )
        .then((doc) => {
          session = doc;
          render();
        });
    });
    resultsStrip.append(img);
  }
}

function renderTree(): void {
  const tile = activeTile();
  const ctx = treeCanvas.getContext("2d");
  if (!ctx || !tile) return;
  ctx.clearRect(0, 0, treeCanvas.width, treeCanvas.height);
  const positions = layoutTree(tile.tree);
  ctx.strokeStyle = "#888";
  for (const node of tile.tree.nodes) {
    const from = positions.get(node.node_id)!;
    for (const child of node.children) {
      const to = positions.get(child)!;
      const [x1, y1] = worldToScreen(viewport, [from.x, from.y]);
      const [x2, y2] = worldToScreen(viewport, [to.x, to.y]);
      ctx.beginPath();
      ctx.moveTo(x1, y1);
      ctx.lineTo(x2, y2);
      ctx.stroke();
    }
  }
  for (const node of tile.tree.nodes) {
    const pos = positions.get(node.node_id)!;
    const [x, y] = worldToScreen(viewport, [pos.x, pos.y]);
    ctx.fillStyle = node.node_id === tile.tree.selected_id ? "#2b6" : "#456";
    ctx.beginPath();
    ctx.arc(x, y, 10 * viewport.zoom, 0, Math.PI * 2);
    ctx.fill();
  }
}

function render(): void {
  const detail = editor.view.kind === "detail";
  tileGrid.hidden = detail;
  detailPane.hidden = !detail;
  blendButton.disabled = detail || !poller.resultsEnabled;
  if (detail) {
    sceneInput.value = editor.sceneText;
    generateButton.disabled = !poller.resultsEnabled;
    renderBrushes();
    renderResults();
    renderTree();
  } else {
    renderGlobal();
  }
}

async function refreshSession(): Promise<void> {
  if (!session) return;
  session = await client.getSession(session.session_id);
  const tile = activeTile();
  if (tile) editor = hydrateFromInputs(editor, tile.inputs);
  render();
}

async function onJobSettled(job: JobDoc): Promise<void> {
  setStatus(job.state === "done" ? "generation finished" : `failed: ${job.error ?? "unknown"}`);
  await refreshSession();
}

generateButton.addEventListener("click", () => {
  const tile = activeTile();
  if (!session || !tile) return;
  void client
    .withFreshVersion(session.session_id, async (doc) => {
      const patched = await client.patchInputs(doc.session_id, doc.version, {
        tile_id: tile.tile_id,
        set: { scene_prompt: sceneInput.value },
      });
      return client.generate(patched.session_id, tile.tile_id, patched.version);
    })
    .then((job) => {
      setStatus("generating...");
      poller.start(job.job_id);
      render();
    })
    .catch((err) => setStatus(String(err)));
});

blendButton.addEventListener("click", () => {
  if (!session) return;
  void client
    .withFreshVersion(session.session_id, (doc) => client.blend(doc.session_id, doc.version))
    .then((job) => {
      setStatus("blending...");
      poller.start(job.job_id);
      render();
    })
    .catch((err) => setStatus(String(err)));
});

backButton.addEventListener("click", () => {
  editor = exitToGlobal(editor);
  render();
});

treeCanvas.addEventListener("wheel", (event) => {
  event.preventDefault();
  const rect = treeCanvas.getBoundingClientRect();
  const anchor: [number, number] = [event.clientX - rect.left, event.clientY - rect.top];
  viewport = zoomAt(viewport, anchor, event.deltaY < 0 ? 1.2 : 1 / 1.2);
  renderTree();
});

treeCanvas.addEventListener("click", (event) => {
  const tile = activeTile();
  if (!session || !tile) return;
  const rect = treeCanvas.getBoundingClientRect();
  const click: [number, number] = [event.clientX - rect.left, event.clientY - rect.top];
  const positions = layoutTree(tile.tree);
  for (const [nodeId, pos] of positions) {
    const [x, y] = worldToScreen(viewport, [pos.x, pos.y]);
    if (Math.hypot(click[0] - x, click[1] - y) <= 12 * viewport.zoom) {
      void client
        .withFreshVersion(session.session_id, (doc) =>
          client.treeSelect(doc.session_id, tile.tile_id, doc.version, nodeId),
        )
        .then((doc) => {
          session = doc;
          const selected = activeTile();
          if (selected) editor = hydrateFromInputs(editor, selected.inputs);
          viewport = centerOn(viewport, [pos.x, pos.y], treeCanvas.width, treeCanvas.height);
          render();
        })
        .catch((err) => setStatus(String(err)));
      return;
    }
  }
});

async function boot(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const wanted = params.get("session");
  try {
    session = wanted
      ? await client.getSession(wanted)
      : await client.createSession({});
    setStatus(`session ${session.session_id}`);
  } catch (err) {
    setStatus(`could not reach the session service: ${String(err)}`);
    return;
  }
  render();
}

void boot();
