import type { Provenance, VolumeInfo } from "./types.js";

/** Overlay and badge color per tissue domain: green young, red old. */
export function domainColor(domain: "young" | "old"): string {
  return domain === "young" ? "#3a9d5d" : "#b03a3a";
}

export function provenanceBadge(p: Provenance): { label: string; cls: string } {
  switch (p) {
    case "real":
      return { label: "real", cls: "badge-real" };
    case "predicted":
      return { label: "predicted", cls: "badge-predicted" };
    case "morphed":
      return { label: "morphed", cls: "badge-morphed" };
  }
}

export function warningText(p: Provenance): string {
  if (p === "predicted") {
    return "Predicted data: this volume was generated by a model, " +
      "not acquired from tissue.";
  }
  if (p === "morphed") {
    return "Morphed data: this frame interpolates between acquired " +
      "volumes and does not correspond to a real specimen.";
  }
  return "";
}

export function volumeLabel(v: VolumeInfo): string {
  const [x, y, z] = v.dims;
  return `${v.id} (${x}×${y}×${z}, ${v.dtype})`;
}

export function formatVoxelCount(n: number): string {
  if (n >= 1_000_000) return `${(n / 1_000_000).toFixed(2)}M voxels`;
  if (n >= 1_000) return `${(n / 1_000).toFixed(1)}k voxels`;
  return `${n} voxels`;
}

export function sigmaLabel(sigma: number): string {
  return `σ = ${sigma.toFixed(2)}`;
}
