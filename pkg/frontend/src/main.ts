/**
 * DOM wiring for the outpainting studio. All logic lives in the other
 * modules; this file only connects inputs, the session store, the job
 * poller and the render targets. Served as a static bundle next to the
 * job service (same origin by default, override with ?api=<base url>).
 */

import { ApiError, bytesToBase64, JobSnapshot, ModelInfo, OutpaintReport, ServiceClient } from "./api.js";
import { CategoryPainter, mountCategoryPainter } from "./categoryPainter.js";
import { galleryView, mountGallery } from "./candidateGallery.js";
import { downloadManifest, mountPanoramaStrip } from "./panoramaStrip.js";
import { JobPoller } from "./poll.js";
import {
  DEFAULT_CONFIG,
  Direction,
  PanoramaManifest,
  SessionStore,
  configFromManifest,
  outpaintBody,
  replayManifest,
} from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function fileBytes(file: File): Promise<Uint8Array> {
  return new Uint8Array(await file.arrayBuffer());
}

function pngUrl(bytes: Uint8Array): string {
  return URL.createObjectURL(new Blob([bytes.slice().buffer], { type: "image/png" }));
}

async function boot(): Promise<void> {
  const apiBase = new URLSearchParams(window.location.search).get("api") ?? "";
  const client = new ServiceClient(apiBase);
  const poller = new JobPoller(client);

  const models = await client.getModels();
  const modelSelect = el<HTMLSelectElement>("model");
  for (const model of models.models) {
    const option = document.createElement("option");
    option.value = model.name;
    option.textContent = model.name;
    option.selected = model.name === models.default;
    modelSelect.appendChild(option);
  }

  let store: SessionStore | null = null;
  let painter: CategoryPainter | null = null;
  let uploadBytes: Uint8Array | null = null;
  /** PNG bytes per completed panorama step, for the strip preview. */
  const stepPngs: Uint8Array[] = [];
  let initialSize: { w: number; h: number } | null = null;

  const statusLine = el<HTMLDivElement>("status");
  const galleryBox = el<HTMLDivElement>("gallery");
  const stripBox = el<HTMLDivElement>("strip");
  const painterBox = el<HTMLDivElement>("painter");

  const currentModel = (): ModelInfo => {
    const found = models.models.find((m) => m.name === modelSelect.value);
    if (!found) throw new Error(`unknown model ${modelSelect.value}`);
    return found;
  };

  const readConfig = () => ({
    ...DEFAULT_CONFIG,
    model: modelSelect.value,
    direction: el<HTMLSelectElement>("direction").value as Direction,
    m: Number(el<HTMLInputElement>("m").value),
    seed: Number(el<HTMLInputElement>("seed").value),
    inversionSteps: Number(el<HTMLInputElement>("steps").value),
    restarts: Number(el<HTMLInputElement>("restarts").value),
    warmupSteps: Number(el<HTMLInputElement>("warmup").value),
  });

  const refreshPainter = async () => {
    const model = currentModel();
    painterBox.textContent = "";
    painter = null;
    if (!model.categorical) return;
    const categories = await client.getCategories(model.name);
    painter = new CategoryPainter(model.grid, categories.classes.map((c) => c.name));
    mountCategoryPainter(painterBox, painter, (payload) => {
      store?.setCategories(Object.keys(payload).length > 0 ? payload : null);
    });
  };
  modelSelect.addEventListener("change", () => void refreshPainter());
  await refreshPainter();

  const renderStrip = () => {
    if (!store || !store.initialPng || !initialSize) return;
    mountPanoramaStrip(
      stripBox,
      {
        initialUrl: pngUrl(store.initialPng),
        stepUrls: stepPngs.map((bytes) => pngUrl(bytes)),
      },
      initialSize.w,
      initialSize.h,
      store.grid,
      store.config.direction,
    );
  };

  const imageSize = (bytes: Uint8Array): Promise<{ w: number; h: number }> =>
    new Promise((resolve, reject) => {
      const img = new Image();
      img.onload = () => resolve({ w: img.naturalWidth, h: img.naturalHeight });
      img.onerror = () => reject(new Error("undecodable PNG"));
      img.src = pngUrl(bytes);
    });

  el<HTMLInputElement>("upload").addEventListener("change", async (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    uploadBytes = await fileBytes(file);
    statusLine.textContent = `loaded ${file.name} (${uploadBytes.length} bytes)`;
  });

  const watchJob = async (jobId: string): Promise<JobSnapshot> => {
    statusLine.textContent = `job ${jobId} queued`;
    return poller.poll(jobId, {
      onUpdate: (snapshot) => {
        statusLine.textContent =
          `job ${jobId} ${snapshot.status} ${(snapshot.progress * 100).toFixed(0)}%`;
      },
    });
  };

  const showGallery = (snapshot: JobSnapshot, onSelect: (k: number) => void) => {
    const view = galleryView(snapshot, (k) => client.resultUrl(snapshot.id, k));
    mountGallery(galleryBox, view, onSelect);
  };

  // phase 1: outpaint the upload to a full canvas, pick one candidate
  el<HTMLButtonElement>("launch").addEventListener("click", async () => {
    if (!uploadBytes) {
      statusLine.textContent = "upload a reference PNG first";
      return;
    }
    const config = readConfig();
    const grid = currentModel().grid;
    store = new SessionStore(grid, config);
    stepPngs.length = 0;
    try {
      const created = await client.createJob(
        outpaintBody(config, uploadBytes, painter ? painter.payload() : null),
      );
      const snapshot = await watchJob(created.id);
      showGallery(snapshot, async (k) => {
        const png = await client.getResultPng(snapshot.id, k);
        store!.setInitial(png);
        initialSize = await imageSize(png);
        renderStrip();
        statusLine.textContent = `candidate ${k} selected; extend to grow the panorama`;
      });
    } catch (error) {
      statusLine.textContent = error instanceof ApiError ? error.detail : String(error);
    }
  });

  // phase 2: one panorama step per click, selection feeds the next
  el<HTMLButtonElement>("extend").addEventListener("click", async () => {
    if (!store || !store.initialPng) {
      statusLine.textContent = "select a starting canvas first";
      return;
    }
    try {
      const body = store.nextStepBody();
      const created = await client.createJob(body);
      const snapshot = await watchJob(created.id);
      showGallery(snapshot, async (k) => {
        const png = await client.getResultPng(snapshot.id, k);
        store!.recordStep(created.id, snapshot.report as OutpaintReport, k, png);
        stepPngs.push(png);
        renderStrip();
        statusLine.textContent = `step ${store!.history.length} appended`;
      });
    } catch (error) {
      statusLine.textContent = error instanceof ApiError ? error.detail : String(error);
    }
  });

  el<HTMLButtonElement>("download-manifest").addEventListener("click", () => {
    if (!store || store.history.length === 0) {
      statusLine.textContent = "no completed panorama steps to export";
      return;
    }
    downloadManifest(document, store.manifestText());
  });

  // replay: re-issues the recorded request sequence against the service
  el<HTMLInputElement>("replay-manifest").addEventListener("change", async (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file || !uploadBytes) {
      statusLine.textContent = "upload the initial PNG, then pick a manifest";
      return;
    }
    try {
      const manifest = JSON.parse(await file.text()) as PanoramaManifest;
      const replayed = await replayManifest(manifest, modelSelect.value, uploadBytes, {
        run: async (body) => {
          const created = await client.createJob(body);
          const snapshot = await watchJob(created.id);
          if (snapshot.status !== "done") {
            throw new Error(snapshot.error ?? "replay job failed");
          }
          return { jobId: snapshot.id, report: snapshot.report as OutpaintReport };
        },
        fetchResult: (jobId, k) => client.getResultPng(jobId, k),
      });
      store = replayed;
      stepPngs.length = 0;
      for (const entry of replayed.history) stepPngs.push(entry.selectedPng);
      initialSize = await imageSize(uploadBytes);
      store.config = configFromManifest(manifest, modelSelect.value);
      renderStrip();
      statusLine.textContent = `replayed ${replayed.history.length} steps`;
    } catch (error) {
      statusLine.textContent = error instanceof ApiError ? error.detail : String(error);
    }
  });
}

void boot();
