/**
 * Side-by-side view of the m candidates a finished job produced, with
 * the per-candidate masked reconstruction error and the shared final
 * objective as the loss summary. Selecting a tile is the event that
 * appends to session history and promotes that candidate to the next
 * step's reference. Failed jobs render as an error panel carrying the
 * server's detail string verbatim.
 */

import { JobSnapshot, OutpaintReport } from "./api.js";

export interface GalleryTile {
  index: number;
  imageUrl: string;
  /** Loss summary line, e.g. "mse 1.23e-3". */
  summary: string;
  mse: number | null;
}

export type GalleryView =
  | { kind: "pending"; status: string; progress: number }
  | { kind: "error"; detail: string }
  | { kind: "tiles"; objective: number | null; tiles: GalleryTile[] };

function isOutpaintReport(report: JobSnapshot["report"]): report is OutpaintReport {
  return (
    report !== null &&
    typeof report === "object" &&
    Array.isArray((report as OutpaintReport).candidate_mse)
  );
}

export function galleryView(job: JobSnapshot, resultUrl: (k: number) => string): GalleryView {
  if (job.status === "failed") {
    return { kind: "error", detail: job.error ?? "job failed" };
  }
  if (job.status !== "done") {
    return { kind: "pending", status: job.status, progress: job.progress };
  }
  const report = isOutpaintReport(job.report) ? job.report : null;
  const tiles = job.results.map((_, k) => {
    const mse = report?.candidate_mse[k] ?? null;
    return {
      index: k,
      imageUrl: resultUrl(k),
      summary: mse === null ? `candidate ${k}` : `mse ${mse.toExponential(2)}`,
      mse,
    };
  });
  return { kind: "tiles", objective: report?.objective ?? null, tiles };
}

export function mountGallery(
  container: HTMLElement,
  view: GalleryView,
  onSelect: (index: number) => void,
): void {
  container.textContent = "";
  const doc = container.ownerDocument;

  if (view.kind === "error") {
    const panel = doc.createElement("div");
    panel.className = "error-panel";
    panel.textContent = view.detail;
    container.appendChild(panel);
    return;
  }
  if (view.kind === "pending") {
    const panel = doc.createElement("div");
    panel.className = "pending-panel";
    panel.textContent = `${view.status} ${(view.progress * 100).toFixed(0)}%`;
    container.appendChild(panel);
    return;
  }

  if (view.objective !== null) {
    const header = doc.createElement("div");
    header.className = "gallery-objective";
    header.textContent = `objective ${view.objective.toExponential(3)}`;
    container.appendChild(header);
  }
  const row = doc.createElement("div");
  row.className = "gallery-row";
  row.style.display = "flex";
  container.appendChild(row);
  for (const tile of view.tiles) {
    const card = doc.createElement("button");
    card.className = "gallery-tile";
    card.dataset.index = String(tile.index);
    const img = doc.createElement("img");
    img.src = tile.imageUrl;
    img.alt = `candidate ${tile.index}`;
    const caption = doc.createElement("span");
    caption.textContent = tile.summary;
    card.appendChild(img);
    card.appendChild(caption);
    card.addEventListener("click", () => onSelect(tile.index));
    row.appendChild(card);
  }
}
