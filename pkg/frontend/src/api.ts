/**
 * Thin client for the session-based refinement HTTP API. Every method is one
 * endpoint; no segmentation math happens on this side of the wire.
 */

import { toBase64 } from "./ivol.js";

export type Axis = "z" | "y" | "x";
export type Layer =
  | "intensity"
  | "probability"
  | "prediction"
  | "h_plus"
  | "h_minus"
  | "supervoxel_labels";
export type Polarity = "object" | "background";

export interface SessionInfo {
  id: string;
  dims: [number, number, number];
  spacing: [number, number, number];
  iteration: number;
  T: number;
  has_gt: boolean;
  object_hints?: number;
  background_hints?: number;
  dsc?: number;
}

export interface SliceResponse {
  axis: Axis;
  index: number;
  layer: Layer;
  shape: [number, number];
  values: number[];
}

export interface ClickResult {
  object_added: number;
  background_added: number;
  object_hints: number;
  background_hints: number;
}

export interface RefineResult {
  iteration: number;
  changed_voxels: number;
  done: boolean;
  dsc?: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    detail: string,
  ) {
    super(detail);
  }
}

async function raiseOnError(res: Response): Promise<void> {
  if (res.ok) return;
  let detail = `${res.status}`;
  try {
    const body = await res.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // keep the bare status code
  }
  throw new ApiError(res.status, detail);
}

export class Client {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`, init);
    await raiseOnError(res);
    return (await res.json()) as T;
  }

  async createSession(volume: Uint8Array, gt?: Uint8Array, seed = 0): Promise<SessionInfo> {
    const body: Record<string, unknown> = {
      volume_b64: toBase64(volume),
      options: { seed },
    };
    if (gt) body.gt_b64 = toBase64(gt);
    return this.json<SessionInfo>("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async sessionInfo(id: string): Promise<SessionInfo> {
    return this.json<SessionInfo>(`/sessions/${id}`);
  }

  async getSlice(id: string, axis: Axis, index: number, layer: Layer): Promise<SliceResponse> {
    const params = new URLSearchParams({ axis, index: String(index), layer });
    return this.json<SliceResponse>(`/sessions/${id}/slice?${params}`);
  }

  async postClicks(
    id: string,
    clicks: { pos: [number, number, number]; polarity: Polarity }[],
  ): Promise<ClickResult> {
    return this.json<ClickResult>(`/sessions/${id}/clicks`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ clicks }),
    });
  }

  async refine(id: string, allowExtra = false): Promise<RefineResult> {
    return this.json<RefineResult>(`/sessions/${id}/refine`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ allow_extra: allowExtra }),
    });
  }

  async exportMask(id: string): Promise<Uint8Array> {
    const res = await this.fetchFn(`${this.baseUrl}/sessions/${id}/mask`);
    await raiseOnError(res);
    return new Uint8Array(await res.arrayBuffer());
  }

  async deleteSession(id: string): Promise<void> {
    const res = await this.fetchFn(`${this.baseUrl}/sessions/${id}`, { method: "DELETE" });
    await raiseOnError(res);
  }
}
