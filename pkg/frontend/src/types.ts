// Wire types for the deformation service API.

export type Vec3 = [number, number, number];

export type Method = "arap" | "bbw";

export interface ScenePreview {
  count: number;
  scale: number;
  indices: number[];
  means: Vec3[];
  ellipses: {
    axis1: Vec3[];
    axis2: Vec3[];
    semi_a: number[];
    semi_b: number[];
    normals: Vec3[];
    valid: boolean[];
  };
}

export interface SnapResult {
  index: number;
  snap_distance: number;
  position: Vec3;
}

export interface StatusResponse {
  state: "idle" | "running";
  queue_depth: number;
  running_id: number | null;
  last_request_id: number | null;
}

export interface HandleRequest {
  index: number;
  displacement: Vec3;
}

export interface DeformRequest {
  handles: HandleRequest[];
  method: Method;
  fixed_radius: number;
  cage_radius: number;
  solver?: { max_iters?: number; tol?: number };
}

export interface DeformResponse {
  request_id: number;
  method: Method;
  means: Vec3[];
  rotations: number[][];
  scales: number[][];
  solver: Record<string, unknown>;
  adaptation: Record<string, unknown> | null;
}

export interface CancelResponse {
  cancelled: boolean;
  request_id?: number;
  reason?: string;
}

/** Engine error carrying the HTTP status so callers can tell cancellation
 *  (409) apart from solver/validation failures (422). */
export class ServiceError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ServiceError";
  }
}
