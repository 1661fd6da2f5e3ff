/**
 * Scrollable composite of a panorama session plus manifest download.
 *
 * Every panorama step returns a canvas-sized candidate whose leading
 * strip repeats the previous growth edge, so the composite is pure
 * placement: the initial image, then each selected candidate laid so
 * its far edge lands exactly one patch further out, later steps drawn
 * on top. The resulting extent matches the server's accounting
 * (initial + steps * patch) with no pixel arithmetic in the client.
 */

import { GridInfo } from "./api.js";
import { Direction } from "./state.js";

export interface Placement {
  /** -1 for the initial image, otherwise the 0-based step index. */
  step: number;
  x: number;
  y: number;
}

export interface StripLayout {
  width: number;
  height: number;
  placements: Placement[];
}

/**
 * Final-coordinate placements for the initial image and `steps`
 * selected candidates. `initialW`/`initialH` describe the uploaded
 * image; candidates are always canvas-sized (grid.n patches a side).
 */
export function layoutStrip(
  steps: number,
  initialW: number,
  initialH: number,
  grid: GridInfo,
  direction: Direction,
): StripLayout {
  const fullW = grid.n * grid.patch_w;
  const fullH = grid.n * grid.patch_h;
  const horizontal = direction === "left" || direction === "right";
  const width = horizontal ? initialW + steps * grid.patch_w : initialW;
  const height = horizontal ? initialH : initialH + steps * grid.patch_h;
  const placements: Placement[] = [];
  if (direction === "right") {
    placements.push({ step: -1, x: 0, y: 0 });
    for (let s = 0; s < steps; s++) {
      placements.push({ step: s, x: initialW + (s + 1) * grid.patch_w - fullW, y: 0 });
    }
  } else if (direction === "left") {
    placements.push({ step: -1, x: steps * grid.patch_w, y: 0 });
    for (let s = 0; s < steps; s++) {
      placements.push({ step: s, x: (steps - s - 1) * grid.patch_w, y: 0 });
    }
  } else if (direction === "down") {
    placements.push({ step: -1, x: 0, y: 0 });
    for (let s = 0; s < steps; s++) {
      placements.push({ step: s, x: 0, y: initialH + (s + 1) * grid.patch_h - fullH });
    }
  } else {
    placements.push({ step: -1, x: 0, y: steps * grid.patch_h });
    for (let s = 0; s < steps; s++) {
      placements.push({ step: s, x: 0, y: (steps - s - 1) * grid.patch_h });
    }
  }
  return { width, height, placements };
}

export interface StripImages {
  initialUrl: string;
  /** One URL per completed step, in step order. */
  stepUrls: string[];
}

/** Absolutely-positioned composite; later steps stack on top. */
export function mountPanoramaStrip(
  container: HTMLElement,
  images: StripImages,
  initialW: number,
  initialH: number,
  grid: GridInfo,
  direction: Direction,
): StripLayout {
  const layout = layoutStrip(images.stepUrls.length, initialW, initialH, grid, direction);
  container.textContent = "";
  const doc = container.ownerDocument;
  const frame = doc.createElement("div");
  frame.className = "strip-frame";
  frame.style.position = "relative";
  frame.style.width = `${layout.width}px`;
  frame.style.height = `${layout.height}px`;
  container.appendChild(frame);
  for (const [order, placement] of layout.placements.entries()) {
    const img = doc.createElement("img");
    img.className = placement.step < 0 ? "strip-initial" : "strip-step";
    img.src = placement.step < 0 ? images.initialUrl : images.stepUrls[placement.step]!;
    img.style.position = "absolute";
    img.style.left = `${placement.x}px`;
    img.style.top = `${placement.y}px`;
    img.style.zIndex = String(order);
    img.dataset.step = String(placement.step);
    frame.appendChild(img);
  }
  return layout;
}

/** Offer the canonical manifest text as a .json download. */
export function downloadManifest(doc: Document, manifestText: string, filename = "panorama_manifest.json"): void {
  const blob = new Blob([manifestText], { type: "application/json" });
  const url = URL.createObjectURL(blob);
  const anchor = doc.createElement("a");
  anchor.href = url;
  anchor.download = filename;
  doc.body.appendChild(anchor);
  anchor.click();
  anchor.remove();
  URL.revokeObjectURL(url);
}
