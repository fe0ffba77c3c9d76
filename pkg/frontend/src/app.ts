import { ApiClient, ApiError } from "./api.js";
import { DebouncedScrubber } from "./scrub.js";
import { ViewState } from "./state.js";
import {
  domainColor,
  formatVoxelCount,
  provenanceBadge,
  sigmaLabel,
  volumeLabel,
  warningText,
} from "./render.js";
import type { Axis, Mode, Provenance } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export class ViewerApp {
  private readonly state = new ViewState();
  private frameUrl: string | null = null;

  private readonly volumeList = el<HTMLUListElement>("volume-list");
  private readonly sliceImg = el<HTMLImageElement>("slice-view");
  private readonly axisSelect = el<HTMLSelectElement>("axis");
  private readonly sliceSlider = el<HTMLInputElement>("slice-index");
  private readonly sliceReadout = el<HTMLSpanElement>("slice-readout");
  private readonly thresholdSlider = el<HTMLInputElement>("threshold");
  private readonly thresholdReadout = el<HTMLSpanElement>("threshold-readout");
  private readonly overlayReadout = el<HTMLSpanElement>("overlay-readout");
  private readonly sigmaSlider = el<HTMLInputElement>("sigma");
  private readonly sigmaReadout = el<HTMLSpanElement>("sigma-readout");
  private readonly morphProgress = el<HTMLSpanElement>("morph-progress");
  private readonly warningBanner = el<HTMLDivElement>("warning-banner");
  private readonly errorBanner = el<HTMLDivElement>("error-banner");
  private readonly errorMessage = el<HTMLSpanElement>("error-message");
  private readonly retryButton = el<HTMLButtonElement>("retry");
  private readonly youngSelect = el<HTMLSelectElement>("morph-young");
  private readonly oldSelect = el<HTMLSelectElement>("morph-old");
  private readonly prepareButton = el<HTMLButtonElement>("morph-prepare");

  private readonly sigmaScrub: DebouncedScrubber<{
    bytes: Uint8Array;
    provenance: Provenance;
  }>;
  private readonly thresholdScrub: DebouncedScrubber<void>;

  constructor(private readonly api: ApiClient) {
    this.sigmaScrub = new DebouncedScrubber(
      (sigma) => this.fetchMorphFrame(sigma),
      (sigma, frame) => this.showMorphFrame(sigma, frame.bytes),
      (err) => this.reportError(err, () => this.refreshMorphFrame()),
    );
    this.thresholdScrub = new DebouncedScrubber(
      (t) => this.refreshOverlay(t),
      () => this.sync(),
      (err) => this.reportError(err, () => this.refreshOverlay(this.state.threshold)),
    );
    this.bind();
  }

  async start(): Promise<void> {
    try {
      this.state.setVolumes(await this.api.listVolumes());
      const first = this.state.volumes[0];
      if (first) this.state.selectVolume(first.id);
    } catch (err) {
      this.reportError(err, () => this.start());
    }
    this.renderVolumeList();
    this.sync();
  }

  private bind(): void {
    this.axisSelect.addEventListener("change", () => {
      this.state.setAxis(this.axisSelect.value as Axis);
      this.sync();
    });
    this.sliceSlider.addEventListener("input", () => {
      this.state.setSliceIndex(Number(this.sliceSlider.value));
      this.sync();
    });
    this.thresholdSlider.addEventListener("input", () => {
      this.state.setThreshold(Number(this.thresholdSlider.value));
      this.thresholdScrub.set(this.state.threshold);
      this.sync();
    });
    this.sigmaSlider.addEventListener("input", () => {
      if (!this.state.scrubEnabled) return;
      this.sigmaScrub.set(this.state.clampSigma(Number(this.sigmaSlider.value)));
    });
    this.retryButton.addEventListener("click", () => {
      void this.state.retry().then(() => this.sync());
    });
    for (const mode of ["structural", "bounded", "morph"] as Mode[]) {
      el<HTMLButtonElement>(`mode-${mode}`).addEventListener("click", () => {
        this.state.setMode(mode);
        this.sync();
      });
    }
    this.prepareButton.addEventListener("click", () => {
      void this.prepareMorph();
    });
  }

  private renderVolumeList(): void {
    this.volumeList.textContent = "";
    this.youngSelect.textContent = "";
    this.oldSelect.textContent = "";
    for (const v of this.state.volumes) {
      const item = document.createElement("li");
      const badge = provenanceBadge(v.provenance);
      item.innerHTML =
        `<button data-id="${v.id}">${volumeLabel(v)}</button>` +
        ` <span class="badge ${badge.cls}">${badge.label}</span>`;
      item.querySelector("button")!.addEventListener("click", () => {
        this.state.selectVolume(v.id);
        this.thresholdScrub.set(this.state.threshold);
        this.sync();
      });
      this.volumeList.appendChild(item);
      for (const select of [this.youngSelect, this.oldSelect]) {
        const opt = document.createElement("option");
        opt.value = v.id;
        opt.textContent = v.id;
        select.appendChild(opt);
      }
    }
  }

  private async prepareMorph(): Promise<void> {
    const youngId = this.youngSelect.value;
    const oldId = this.oldSelect.value;
    if (!youngId || !oldId) return;
    this.state.beginMorph(youngId, oldId, "y2o");
    this.sync();
    try {
      const { job_id } = await this.api.prepareMorph(youngId, oldId, "y2o");
      await this.pollJob(job_id);
    } catch (err) {
      this.state.morphJobStatus = "error";
      this.reportError(err, () => this.prepareMorph());
    }
    this.sync();
    if (this.state.scrubEnabled) {
      this.sigmaScrub.setImmediate(this.state.displayedSigma);
    }
  }

  private async pollJob(jobId: string): Promise<void> {
    for (;;) {
      const job = await this.api.morphJob(jobId);
      if (job.status === "done") {
        this.state.morphJobStatus = "done";
        return;
      }
      if (job.status === "error") {
        this.state.morphJobStatus = "error";
        throw new ApiError("morph_failed", job.error ?? "morph failed", 500);
      }
      await new Promise((resolve) => setTimeout(resolve, 250));
    }
  }

  private fetchMorphFrame(sigma: number) {
    const { morphYoungId, morphOldId, morphDirection, axis, sliceIndex } =
      this.state;
    if (!morphYoungId || !morphOldId) {
      return Promise.reject(new Error("no morph pair selected"));
    }
    return this.api.morphFramePng(
      morphYoungId, morphOldId, sigma, morphDirection, axis, sliceIndex,
    );
  }

  private refreshMorphFrame(): Promise<void> {
    if (this.state.scrubEnabled) {
      this.sigmaScrub.setImmediate(this.state.displayedSigma);
    }
    return Promise.resolve();
  }

  private showMorphFrame(sigma: number, bytes: Uint8Array): void {
    this.state.displayedSigma = sigma;
    if (this.frameUrl) URL.revokeObjectURL(this.frameUrl);
    this.frameUrl = URL.createObjectURL(
      new Blob([bytes as BlobPart], { type: "image/png" }),
    );
    this.sliceImg.src = this.frameUrl;
    this.sync();
  }

  private async refreshOverlay(threshold: number): Promise<void> {
    if (!this.state.selected) return;
    this.state.applyComponents(
      await this.api.components(this.state.selected.id, threshold),
    );
  }

  private reportError(err: unknown, retry: () => Promise<void>): void {
    const code = err instanceof ApiError ? err.code : "network_error";
    const message = err instanceof Error ? err.message : String(err);
    this.state.setError(code, message, retry);
    this.sync();
  }

  /** Repaint every control from the state object. */
  private sync(): void {
    const s = this.state;
    const extent = s.sliceExtent;
    this.sliceSlider.max = String(Math.max(0, extent - 1));
    this.sliceSlider.value = String(s.sliceIndex);
    this.sliceReadout.textContent = `${s.axis} = ${s.sliceIndex} / ${extent}`;
    this.thresholdReadout.textContent = s.threshold.toFixed(2);
    this.sigmaReadout.textContent = sigmaLabel(s.displayedSigma);
    this.sigmaSlider.disabled = !s.scrubEnabled;
    this.morphProgress.hidden = s.morphJobStatus !== "pending";

    if (s.mode !== "morph" && s.selected) {
      const tf = s.mode === "bounded" ? "default" : "none";
      this.sliceImg.src = this.api.sliceUrl(
        s.selected.id, s.axis, s.sliceIndex, tf, s.tfEdits.gamma,
      );
    }

    if (s.overlay) {
      this.overlayReadout.textContent =
        `${s.overlay.componentCount} components, ` +
        formatVoxelCount(s.overlay.voxelCount);
      this.overlayReadout.style.color = domainColor(
        s.selected?.kind === "normalized" ? "young" : "old",
      );
    }

    const provenance = s.activeProvenance;
    this.warningBanner.hidden = !s.warningVisible;
    if (provenance && s.warningVisible) {
      this.warningBanner.textContent = warningText(provenance);
    }

    this.errorBanner.hidden = s.error === null;
    if (s.error) {
      this.errorMessage.textContent = `${s.error.code}: ${s.error.message}`;
    }
  }
}
