import type {
  Axis,
  ComponentsResponse,
  DensityResponse,
  HistogramSummary,
  MorphDirection,
  MorphJob,
  Provenance,
  ServiceStats,
  VolumeInfo,
} from "./types.js";

/** Error carrying the service's structured code alongside the message. */
export class ApiError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

async function toApiError(res: Response): Promise<ApiError> {
  let code = "error";
  let message = `${res.status} ${res.statusText}`;
  try {
    const body = (await res.json()) as { error?: { code?: string; message?: string } };
    if (body.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(code, message, res.status);
}

/** Read-only client for the volume service. Never mutates volume data. */
export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path);
    if (!res.ok) throw await toApiError(res);
    return (await res.json()) as T;
  }

  async listVolumes(): Promise<VolumeInfo[]> {
    const body = await this.getJson<{ volumes: VolumeInfo[] }>("/volumes");
    return body.volumes;
  }

  async volumeInfo(id: string): Promise<VolumeInfo> {
    const body = await this.getJson<{ volume: VolumeInfo }>(
      `/volumes/${encodeURIComponent(id)}`,
    );
    return body.volume;
  }

  async histogram(id: string): Promise<HistogramSummary> {
    const body = await this.getJson<{ histogram: HistogramSummary }>(
      `/volumes/${encodeURIComponent(id)}/histogram`,
    );
    return body.histogram;
  }

  sliceUrl(
    id: string,
    axis: Axis,
    index: number,
    tf: "none" | "default" = "none",
    gamma = 1.0,
  ): string {
    const q = new URLSearchParams({
      axis,
      index: String(index),
      tf,
      gamma: String(gamma),
    });
    return `${this.baseUrl}/volumes/${encodeURIComponent(id)}/slice?${q}`;
  }

  async components(
    id: string,
    threshold: number,
    domain?: "young" | "old",
  ): Promise<ComponentsResponse> {
    const q = new URLSearchParams({ threshold: String(threshold) });
    if (domain) q.set("domain", domain);
    return this.getJson(`/components/${encodeURIComponent(id)}?${q}`);
  }

  async density(id: string, threshold: number): Promise<DensityResponse> {
    const q = new URLSearchParams({ threshold: String(threshold) });
    return this.getJson(`/metrics/density/${encodeURIComponent(id)}?${q}`);
  }

  async mesh(id: string, iso: number, domain: "young" | "old"): Promise<string> {
    const q = new URLSearchParams({ iso: String(iso), domain });
    const res = await this.fetchFn(
      `${this.baseUrl}/mesh/${encodeURIComponent(id)}?${q}`,
    );
    if (!res.ok) throw await toApiError(res);
    return res.text();
  }

  async prepareMorph(
    youngId: string,
    oldId: string,
    dir: MorphDirection,
  ): Promise<{ job_id: string; status: string }> {
    const res = await this.fetchFn(`${this.baseUrl}/morph/prepare`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ young_id: youngId, old_id: oldId, dir }),
    });
    if (!res.ok) throw await toApiError(res);
    return (await res.json()) as { job_id: string; status: string };
  }

  async morphJob(jobId: string): Promise<MorphJob> {
    return this.getJson(`/morph/jobs/${encodeURIComponent(jobId)}`);
  }

  /** Fetch one morph frame slice as PNG bytes. */
  async morphFramePng(
    youngId: string,
    oldId: string,
    sigma: number,
    dir: MorphDirection,
    axis: Axis,
    index: number,
  ): Promise<{ bytes: Uint8Array; provenance: Provenance }> {
    const q = new URLSearchParams({
      sigma: String(sigma),
      dir,
      format: "png",
      axis,
      index: String(index),
    });
    const res = await this.fetchFn(
      `${this.baseUrl}/morph/${encodeURIComponent(youngId)}/` +
        `${encodeURIComponent(oldId)}?${q}`,
    );
    if (!res.ok) throw await toApiError(res);
    const bytes = new Uint8Array(await res.arrayBuffer());
    const provenance =
      (res.headers.get("X-Provenance") as Provenance | null) ?? "morphed";
    return { bytes, provenance };
  }

  async stats(): Promise<ServiceStats> {
    return this.getJson("/stats");
  }
}
