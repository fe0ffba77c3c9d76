import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { ViewState } from "../src/state.js";
import { makeMockService } from "./mock_service.js";

const BASE = "http://svc";

describe("ApiClient against the mock service", () => {
  it("lists volumes in id order with provenance attached", async () => {
    const { fetchFn } = makeMockService();
    const api = new ApiClient(BASE, fetchFn);
    const volumes = await api.listVolumes();
    expect(volumes.map((v) => v.id)).toEqual(["old", "pred", "young"]);
    expect(volumes.map((v) => v.provenance)).toEqual([
      "real", "predicted", "real",
    ]);
    expect(volumes[0]!.dims).toEqual([32, 24, 16]);
  });

  it("unwraps the single-volume envelope", async () => {
    const { fetchFn } = makeMockService();
    const api = new ApiClient(BASE, fetchFn);
    const info = await api.volumeInfo("pred");
    expect(info.id).toBe("pred");
    expect(info.kind).toBe("normalized");
  });

  it("surfaces structured error codes as ApiError", async () => {
    const { fetchFn } = makeMockService();
    const api = new ApiClient(BASE, fetchFn);
    const err = await api.components("nope", 0.1).catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).code).toBe("volume_not_found");
    expect((err as ApiError).status).toBe(404);
  });

  it("rejects out-of-range sigma with the service's code", async () => {
    const { fetchFn } = makeMockService();
    const api = new ApiClient(BASE, fetchFn);
    const err = await api
      .morphFramePng("young", "old", 1.5, "y2o", "z", 0)
      .catch((e: unknown) => e);
    expect((err as ApiError).code).toBe("invalid_sigma");
    expect((err as ApiError).status).toBe(422);
  });

  it("returns morph frame bytes tagged as morphed provenance", async () => {
    const { fetchFn } = makeMockService();
    const api = new ApiClient(BASE, fetchFn);
    const frame = await api.morphFramePng("young", "old", 0.4, "y2o", "z", 3);
    expect(frame.provenance).toBe("morphed");
    const text = new TextDecoder().decode(frame.bytes);
    expect(text).toBe("PNG:morph:young:old:0.4");
  });

  it("builds slice URLs with every display parameter", () => {
    const { fetchFn } = makeMockService();
    const api = new ApiClient(BASE, fetchFn);
    const url = new URL(api.sliceUrl("young", "y", 7, "default", 1.5));
    expect(url.pathname).toBe("/volumes/young/slice");
    expect(url.searchParams.get("axis")).toBe("y");
    expect(url.searchParams.get("index")).toBe("7");
    expect(url.searchParams.get("tf")).toBe("default");
    expect(url.searchParams.get("gamma")).toBe("1.5");
  });

  it("recovers through the error banner's retry hook", async () => {
    const { fetchFn } = makeMockService();
    let reachable = false;
    const flaky: typeof fetchFn = (url, init) => {
      if (!reachable) return Promise.reject(new TypeError("fetch failed"));
      return fetchFn(url, init);
    };
    const api = new ApiClient(BASE, flaky);
    const state = new ViewState();

    const load = async () => {
      state.setVolumes(await api.listVolumes());
    };
    await load().catch((err: Error) => {
      state.setError("network_error", err.message, load);
    });
    expect(state.error).not.toBeNull();
    expect(state.error!.code).toBe("network_error");
    expect(state.volumes).toHaveLength(0);

    reachable = true;
    await state.retry();
    expect(state.error).toBeNull();
    expect(state.volumes.map((v) => v.id)).toEqual(["old", "pred", "young"]);
  });
});
