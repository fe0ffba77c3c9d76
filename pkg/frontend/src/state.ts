import type {
  Axis,
  ComponentsResponse,
  Mode,
  MorphDirection,
  Provenance,
  VolumeInfo,
} from "./types.js";

const AXIS_INDEX: Record<Axis, 0 | 1 | 2> = { x: 0, y: 1, z: 2 };

export interface OverlayState {
  threshold: number;
  componentCount: number;
  voxelCount: number;
}

export interface ErrorBanner {
  message: string;
  code: string;
  retry: () => Promise<void>;
}

export interface TfEdits {
  tf: "none" | "default";
  gamma: number;
}

/**
 * Pure view state. The warning flag is derived, not stored, so no code
 * path can show predicted or morphed data without it.
 */
export class ViewState {
  volumes: VolumeInfo[] = [];
  selected: VolumeInfo | null = null;
  mode: Mode = "structural";
  axis: Axis = "z";
  sliceIndex = 0;
  threshold = 0.1;
  tfEdits: TfEdits = { tf: "none", gamma: 1.0 };
  overlay: OverlayState | null = null;

  morphYoungId: string | null = null;
  morphOldId: string | null = null;
  morphDirection: MorphDirection = "y2o";
  morphJobStatus: "none" | "pending" | "done" | "error" = "none";
  /** Sigma of the most recently displayed frame. */
  displayedSigma = 0;

  error: ErrorBanner | null = null;

  /**
   * Provenance of whatever the main pane is showing right now. While a
   * morph job is still pending the pane keeps the selected volume's
   * slice, so the selected provenance stays in force until a frame
   * actually lands.
   */
  get activeProvenance(): Provenance | null {
    if (this.mode === "morph" && this.morphJobStatus === "done") {
      return "morphed";
    }
    return this.selected ? this.selected.provenance : null;
  }

  get warningVisible(): boolean {
    const p = this.activeProvenance;
    return p === "predicted" || p === "morphed";
  }

  /** Morph slider is usable only once the field is prepared. */
  get scrubEnabled(): boolean {
    return this.mode === "morph" && this.morphJobStatus === "done";
  }

  setVolumes(volumes: VolumeInfo[]): void {
    this.volumes = volumes;
    if (this.selected) {
      const kept = volumes.find((v) => v.id === this.selected!.id) ?? null;
      this.selected = kept;
      this.clampSlice();
    }
  }

  selectVolume(id: string): void {
    const v = this.volumes.find((entry) => entry.id === id);
    if (!v) throw new Error(`unknown volume ${id}`);
    this.selected = v;
    this.clampSlice();
  }

  setMode(mode: Mode): void {
    this.mode = mode;
    if (mode !== "morph") this.morphJobStatus = "none";
  }

  setAxis(axis: Axis): void {
    this.axis = axis;
    this.clampSlice();
  }

  get sliceExtent(): number {
    const dims = this.morphExtentDims() ?? this.selected?.dims;
    return dims ? dims[AXIS_INDEX[this.axis]] : 0;
  }

  private morphExtentDims(): [number, number, number] | null {
    if (this.mode !== "morph" || !this.morphYoungId) return null;
    const young = this.volumes.find((v) => v.id === this.morphYoungId);
    return young ? young.dims : null;
  }

  setSliceIndex(index: number): void {
    this.sliceIndex = index;
    this.clampSlice();
  }

  private clampSlice(): void {
    const extent = this.sliceExtent;
    if (extent === 0) {
      this.sliceIndex = 0;
      return;
    }
    this.sliceIndex = Math.min(Math.max(0, Math.round(this.sliceIndex)),
                               extent - 1);
  }

  setThreshold(t: number): void {
    this.threshold = Math.min(Math.max(0, t), 1);
  }

  clampSigma(sigma: number): number {
    return Math.min(Math.max(0, sigma), 1);
  }

  applyComponents(resp: ComponentsResponse): void {
    this.overlay = {
      threshold: resp.threshold,
      componentCount: resp.count,
      voxelCount: resp.components.reduce((s, c) => s + c.voxel_count, 0),
    };
  }

  beginMorph(youngId: string, oldId: string, dir: MorphDirection): void {
    this.mode = "morph";
    this.morphYoungId = youngId;
    this.morphOldId = oldId;
    this.morphDirection = dir;
    this.morphJobStatus = "pending";
    this.clampSlice();
  }

  setError(code: string, message: string, retry: () => Promise<void>): void {
    this.error = { code, message, retry };
  }

  clearError(): void {
    this.error = null;
  }

  async retry(): Promise<void> {
    const banner = this.error;
    if (!banner) return;
    this.error = null;
    await banner.retry();
  }
}
