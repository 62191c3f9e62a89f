/** DOM wiring for the annotator: tile list, editing canvas, save flow. */

import {
  ApiError,
  ConflictError,
  fetchAnnotations,
  fetchTiles,
  putAnnotations,
  tileImageUrl,
} from "./api.js";
import { TileBrowser, TileSummary } from "./browser.js";
import { visibleMarkers } from "./markers.js";
import { AnnotationSession } from "./session.js";
import {
  centeredView,
  imageToScreen,
  pannedBy,
  screenToImage,
  Vec2,
  Viewport,
  zoomedAt,
} from "./transform.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
};

const banner = $<HTMLDivElement>("banner");
const tileList = $<HTMLUListElement>("tile-list");
const filterBox = $<HTMLInputElement>("filter-unlabeled");
const canvas = $<HTMLCanvasElement>("canvas");
const tileName = $<HTMLSpanElement>("tile-name");
const zoomLevel = $<HTMLSpanElement>("zoom-level");
const countOverlay = $<HTMLDivElement>("count-overlay");
const dirtyFlag = $<HTMLSpanElement>("dirty-flag");
const saveButton = $<HTMLButtonElement>("save");
const noCowButton = $<HTMLButtonElement>("no-cow");
const retryButton = $<HTMLButtonElement>("retry");

const ctx = canvas.getContext("2d");
if (ctx === null) throw new Error("canvas 2d context unavailable");

const browser = new TileBrowser();
let session: AnnotationSession | null = null;
let view: Viewport = { zoom: 1, panX: 0, panY: 0 };
let image: HTMLImageElement | null = null;

function showError(message: string): void {
  banner.textContent = message;
  banner.hidden = false;
  retryButton.hidden = false;
}

function clearError(): void {
  banner.hidden = true;
  retryButton.hidden = true;
}

// ---------------------------------------------------------------- tile list

function renderList(): void {
  tileList.replaceChildren(
    ...browser.visible.map((tile) => {
      const item = document.createElement("li");
      item.dataset.id = tile.id;
      if (browser.selected?.id === tile.id) item.classList.add("selected");
      const status = document.createElement("span");
      status.className = tile.labeled ? "status labeled" : "status unlabeled";
      status.textContent = tile.labeled ? `${tile.count}` : "–";
      const name = document.createElement("span");
      name.className = "name";
      name.textContent = tile.id;
      item.append(name, status);
      item.addEventListener("click", () => void openTile(tile));
      return item;
    }),
  );
}

async function loadTiles(): Promise<void> {
  try {
    browser.setTiles(await fetchTiles());
    clearError();
    renderList();
  } catch (err) {
    showError(err instanceof ApiError ? err.message : String(err));
  }
}

// ------------------------------------------------------------------ canvas

function fitCanvas(): void {
  const box = canvas.getBoundingClientRect();
  canvas.width = Math.max(1, Math.floor(box.width));
  canvas.height = Math.max(1, Math.floor(box.height));
}

function drawCrosshair(at: Vec2): void {
  const arm = 5;
  ctx!.beginPath();
  ctx!.moveTo(at.x - arm, at.y);
  ctx!.lineTo(at.x + arm, at.y);
  ctx!.moveTo(at.x, at.y - arm);
  ctx!.lineTo(at.x, at.y + arm);
  ctx!.stroke();
}

function draw(): void {
  ctx!.fillStyle = "#14171a";
  ctx!.fillRect(0, 0, canvas.width, canvas.height);
  if (image === null || session === null) {
    updateToolbar();
    return;
  }
  ctx!.imageSmoothingEnabled = false;
  ctx!.drawImage(
    image,
    view.panX,
    view.panY,
    session.width * view.zoom,
    session.height * view.zoom,
  );
  ctx!.strokeStyle = "#ff4d4d";
  ctx!.lineWidth = 1.5;
  for (const point of visibleMarkers(session.points)) {
    drawCrosshair(imageToScreen(view, point));
  }
  updateToolbar();
}

function updateToolbar(): void {
  if (session === null) {
    tileName.textContent = "no tile";
    countOverlay.textContent = "";
    dirtyFlag.hidden = true;
    zoomLevel.textContent = "";
    return;
  }
  tileName.textContent = session.tileId;
  zoomLevel.textContent = `${view.zoom.toFixed(1)}×`;
  const n = session.points.length;
  const drawn = visibleMarkers(session.points).length;
  countOverlay.textContent =
    drawn < n ? `${n} points (${drawn} drawn)` : `${n} point${n === 1 ? "" : "s"}`;
  dirtyFlag.hidden = !session.dirty;
}

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new ApiError(`could not load ${url}`));
    img.src = url;
  });
}

// ------------------------------------------------------------------ editing

function confirmDiscard(): boolean {
  if (session === null || !session.dirty) return true;
  return window.confirm("Discard unsaved annotations on this tile?");
}

async function openTile(tile: TileSummary): Promise<void> {
  if (!confirmDiscard()) return;
  try {
    const remote = await fetchAnnotations(tile.id);
    const img = await loadImage(tileImageUrl(tile.id));
    browser.select(tile.id);
    session = new AnnotationSession(tile.id, remote);
    image = img;
    fitCanvas();
    view = centeredView(remote.width, remote.height, canvas.width, canvas.height);
    clearError();
    renderList();
    draw();
  } catch (err) {
    showError(err instanceof ApiError ? err.message : String(err));
  }
}

function navigate(direction: 1 | -1): void {
  if (!confirmDiscard()) return;
  session = null; // already confirmed; stop openTile from asking again
  const tile = direction > 0 ? browser.next() : browser.prev();
  if (tile !== null) void openTile(tile);
}

async function save(): Promise<void> {
  if (session === null) return;
  const active = session;
  try {
    const revision = await putAnnotations(active.tileId, active.saveBody());
    active.applySaved(revision);
    browser.applySaved(active.tileId, active.points.length, revision);
    clearError();
    renderList();
    draw();
  } catch (err) {
    if (err instanceof ConflictError) {
      await resolveConflict(active);
      return;
    }
    showError(err instanceof ApiError ? err.message : String(err));
  }
}

async function resolveConflict(active: AnnotationSession): Promise<void> {
  let remote;
  try {
    remote = await fetchAnnotations(active.tileId);
  } catch (err) {
    showError(err instanceof ApiError ? err.message : String(err));
    return;
  }
  const keepMine = window.confirm(
    `Someone saved this tile first (it now has ${remote.points.length} point(s), ` +
      `revision ${remote.revision}).\n\nOK — keep MY points and save again over theirs.\n` +
      `Cancel — drop my edits and load theirs.`,
  );
  if (keepMine) {
    active.rebaseOnto(remote);
    await save();
  } else {
    active.resetTo(remote);
    renderList();
    draw();
  }
}

// ------------------------------------------------------------ canvas events

let dragging = false;
let moved = false;
let last: Vec2 = { x: 0, y: 0 };

function canvasPoint(event: MouseEvent): Vec2 {
  const box = canvas.getBoundingClientRect();
  return { x: event.clientX - box.left, y: event.clientY - box.top };
}

canvas.addEventListener("mousedown", (event) => {
  if (event.button !== 0) return;
  dragging = true;
  moved = false;
  last = canvasPoint(event);
});

canvas.addEventListener("mousemove", (event) => {
  if (!dragging) return;
  const at = canvasPoint(event);
  const dx = at.x - last.x;
  const dy = at.y - last.y;
  if (!moved && Math.hypot(dx, dy) < 3) return; // still a click, not a drag
  moved = true;
  view = pannedBy(view, dx, dy);
  last = at;
  draw();
});

window.addEventListener("mouseup", (event) => {
  if (!dragging) return;
  dragging = false;
  if (moved || session === null) return;
  const at = canvasPoint(event as MouseEvent);
  if (session.removeAtScreen(at, view)) {
    draw();
    return;
  }
  const img = screenToImage(view, at);
  if (img.x >= 0 && img.x < session.width && img.y >= 0 && img.y < session.height) {
    session.addPoint(img);
    draw();
  }
});

canvas.addEventListener("wheel", (event) => {
  event.preventDefault();
  const factor = event.deltaY < 0 ? 1.25 : 1 / 1.25;
  view = zoomedAt(view, canvasPoint(event), factor);
  draw();
});

// ---------------------------------------------------------------- controls

saveButton.addEventListener("click", () => void save());

noCowButton.addEventListener("click", () => {
  if (session === null) return;
  session.markNoCow();
  draw();
});

filterBox.addEventListener("change", () => {
  browser.filterUnlabeled = filterBox.checked;
  renderList();
});

retryButton.addEventListener("click", () => void loadTiles());

window.addEventListener("keydown", (event) => {
  if (event.target instanceof HTMLInputElement) return;
  if (event.key === "ArrowRight" || event.key === "n") navigate(1);
  else if (event.key === "ArrowLeft" || event.key === "p") navigate(-1);
});

window.addEventListener("beforeunload", (event) => {
  if (session?.dirty) event.preventDefault();
});

window.addEventListener("resize", () => {
  fitCanvas();
  draw();
});

fitCanvas();
draw();
void loadTiles();
