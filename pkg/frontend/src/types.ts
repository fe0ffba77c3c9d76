export type Provenance = "real" | "predicted" | "morphed";
export type Kind = "raw" | "normalized";
export type Axis = "x" | "y" | "z";
export type MorphDirection = "y2o" | "o2y";
export type Mode = "structural" | "bounded" | "morph";

export interface VolumeInfo {
  id: string;
  dims: [number, number, number];
  spacing_um: [number, number, number];
  dtype: "u16" | "f32";
  kind: Kind;
  provenance: Provenance;
}

export interface HistogramSummary {
  percentiles: Record<string, number>;
  mean: number;
  stddev: number;
  max: number;
}

export type Bbox = [[number, number], [number, number], [number, number]];

export interface ComponentInfo {
  id: number;
  voxel_count: number;
  bbox: Bbox;
  domain: string | null;
  provenance: string;
}

export interface ComponentsResponse {
  threshold: number;
  count: number;
  components: ComponentInfo[];
  provenance: Provenance;
}

export interface DensityResponse {
  volume_id: string;
  threshold: number;
  density_percent: number;
  provenance: Provenance;
}

export interface MorphJob {
  id: string;
  status: "pending" | "done" | "error";
  young_id: string;
  old_id: string;
  dir: string;
  error: string | null;
}

export interface ServiceStats {
  session: string;
  volumes: number;
  morph_cache_entries: number;
  morph_cache_hits: number;
  morph_cache_misses: number;
  jobs: Record<string, string>;
}
