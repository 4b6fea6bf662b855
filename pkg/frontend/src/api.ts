// HTTP client for the deformation service.
//
// All geometry math lives in the engine; this client only moves JSON (and
// the optional binary mean stream) across the wire.  The transport is
// injectable so the session logic is testable without a server.

import {
  CancelResponse,
  DeformRequest,
  DeformResponse,
  ScenePreview,
  ServiceError,
  SnapResult,
  StatusResponse,
  Vec3,
} from "./types.js";

export interface Transport {
  get(path: string): Promise<unknown>;
  post(path: string, body: unknown): Promise<unknown>;
}

export class FetchTransport implements Transport {
  constructor(private baseUrl: string = "") {}

  private async handle(response: Response): Promise<unknown> {
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const data = (await response.json()) as { detail?: unknown };
        if (data.detail !== undefined) detail = JSON.stringify(data.detail);
      } catch {
        /* non-JSON error body; keep statusText */
      }
      throw new ServiceError(response.status, detail);
    }
    return response.json();
  }

  async get(path: string): Promise<unknown> {
    return this.handle(await fetch(this.baseUrl + path));
  }

  async post(path: string, body: unknown): Promise<unknown> {
    return this.handle(
      await fetch(this.baseUrl + path, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
  }
}

export class EngineApi {
  constructor(private transport: Transport) {}

  async scene(limit?: number): Promise<ScenePreview> {
    const path = limit === undefined ? "/scene" : `/scene?limit=${limit}`;
    return (await this.transport.get(path)) as ScenePreview;
  }

  async status(): Promise<StatusResponse> {
    return (await this.transport.get("/status")) as StatusResponse;
  }

  async snapHandle(position: Vec3): Promise<SnapResult> {
    return (await this.transport.post("/handles", { position })) as SnapResult;
  }

  async deform(request: DeformRequest): Promise<DeformResponse> {
    return (await this.transport.post("/deform", request)) as DeformResponse;
  }

  async cancel(requestId?: number): Promise<CancelResponse> {
    return (await this.transport.post(
      "/cancel",
      requestId === undefined ? {} : { request_id: requestId },
    )) as CancelResponse;
  }
}

/** Decode the binary mean stream: uint32 LE count, then count little-endian
 *  float32 (x, y, z) triplets. */
export function decodeMeanStream(buffer: ArrayBuffer): Float32Array {
  const view = new DataView(buffer);
  const count = view.getUint32(0, true);
  const expected = 4 + count * 12;
  if (buffer.byteLength < expected) {
    throw new Error(
      `truncated mean stream: ${buffer.byteLength} bytes for ${count} points`,
    );
  }
  const out = new Float32Array(count * 3);
  for (let i = 0; i < count * 3; i++) {
    out[i] = view.getFloat32(4 + i * 4, true);
  }
  return out;
}
