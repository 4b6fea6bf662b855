// Editor session state machine.
//
// Owns the scene preview, the handle list and the before/after layers.
// Handles are always snapped to a preview point through the service, and
// the after-layer is only ever set from exactly one acknowledged service
// response (stale or cancelled responses never overlay the view).

import { EngineApi } from "./api.js";
import { add, norm, sub } from "./camera.js";
import { Method, ScenePreview, ServiceError, Vec3 } from "./types.js";

export type SessionState = "idle" | "queued" | "running";

export interface EditorHandle {
  splatIndex: number;
  anchor: Vec3; // snapped position returned by the service
  displacement: Vec3;
}

export interface DeformOutcome {
  kind: "applied" | "cancelled" | "error" | "busy" | "no-handles";
  message?: string;
  retryable?: boolean;
  responseId?: number;
}

export class EditorSession {
  state: SessionState = "idle";
  method: Method = "arap";
  fixedRadius = 0.5;
  cageRadius = 0.3;
  handles: EditorHandle[] = [];
  preview: ScenePreview | null = null;
  showAfter = true;
  lastResponseId: number | null = null;
  lastError: string | null = null;
  hint: string | null = null;
  queueDepth = 0;

  private before: Float32Array | null = null;
  private after: Float32Array | null = null;
  private runSeq = 0;

  constructor(private api: EngineApi) {}

  async loadScene(limit?: number): Promise<ScenePreview> {
    const preview = await this.api.scene(limit);
    this.preview = preview;
    this.before = flatten(preview.means);
    this.after = null;
    this.lastResponseId = null;
    this.handles = [];
    return preview;
  }

  beforeLayer(): Float32Array {
    if (!this.before) throw new Error("scene not loaded");
    return this.before;
  }

  afterLayer(): Float32Array | null {
    return this.after;
  }

  /** Per-preview-point displacement magnitudes for the color map. */
  displacementMagnitudes(): Float32Array | null {
    if (!this.before || !this.after) return null;
    const n = this.before.length / 3;
    const out = new Float32Array(n);
    for (let i = 0; i < n; i++) {
      const dx = this.after[3 * i] - this.before[3 * i];
      const dy = this.after[3 * i + 1] - this.before[3 * i + 1];
      const dz = this.after[3 * i + 2] - this.before[3 * i + 2];
      out[i] = Math.hypot(dx, dy, dz);
    }
    return out;
  }

  /** Snap a picked preview position to a splat through the service. */
  async placeHandle(position: Vec3 | null): Promise<EditorHandle | null> {
    if (!this.preview) throw new Error("scene not loaded");
    if (position === null) {
      this.hint = "no point under the cursor; aim at the model";
      return null;
    }
    this.hint = null;
    const snap = await this.api.snapHandle(position);
    const handle: EditorHandle = {
      splatIndex: snap.index,
      anchor: snap.position,
      displacement: [0, 0, 0],
    };
    this.handles.push(handle);
    return handle;
  }

  /** Live drag update; no request goes out until the caller runs a deform. */
  dragHandle(index: number, displacement: Vec3): void {
    if (index < 0 || index >= this.handles.length) {
      throw new Error(`no handle ${index}`);
    }
    this.handles[index].displacement = displacement;
  }

  removeHandle(index: number): void {
    this.handles.splice(index, 1);
  }

  handleTip(index: number): Vec3 {
    const h = this.handles[index];
    return add(h.anchor, h.displacement);
  }

  async refreshStatus(): Promise<void> {
    const status = await this.api.status();
    this.queueDepth = status.queue_depth;
    if (this.state !== "idle") {
      this.state = status.state === "running" ? "running" : "queued";
    }
  }

  async runDeform(): Promise<DeformOutcome> {
    if (!this.preview || !this.before) throw new Error("scene not loaded");
    if (this.handles.length === 0) return { kind: "no-handles" };
    if (this.state !== "idle") {
      return { kind: "busy", message: "a deformation is already in flight" };
    }
    const seq = ++this.runSeq;
    this.state = "queued";
    this.lastError = null;
    try {
      const response = await this.api.deform({
        handles: this.handles.map((h) => ({
          index: h.splatIndex,
          displacement: h.displacement,
        })),
        method: this.method,
        fixed_radius: this.fixedRadius,
        cage_radius: this.cageRadius,
      });
      if (seq !== this.runSeq) {
        // a newer run superseded this one; never overlay stale results
        return { kind: "error", message: "stale response discarded" };
      }
      const indices = this.preview.indices;
      const after = new Float32Array(indices.length * 3);
      for (let k = 0; k < indices.length; k++) {
        const m = response.means[indices[k]];
        after[3 * k] = Math.fround(m[0]);
        after[3 * k + 1] = Math.fround(m[1]);
        after[3 * k + 2] = Math.fround(m[2]);
      }
      this.after = after;
      this.lastResponseId = response.request_id;
      this.state = "idle";
      return { kind: "applied", responseId: response.request_id };
    } catch (err) {
      this.state = "idle";
      if (err instanceof ServiceError && err.status === 409) {
        // cancelled: the before-layer stays authoritative
        this.after = null;
        this.lastResponseId = null;
        return { kind: "cancelled" };
      }
      if (err instanceof ServiceError) {
        this.lastError = err.message;
        return { kind: "error", message: err.message };
      }
      // network loss: keep the session intact and offer a retry
      const message = err instanceof Error ? err.message : String(err);
      this.lastError = message;
      return { kind: "error", message, retryable: true };
    }
  }

  async cancel(): Promise<boolean> {
    const result = await this.api.cancel();
    return result.cancelled;
  }

  /** Largest handle displacement, handy for validating UI affordances. */
  maxDisplacement(): number {
    let best = 0;
    for (const h of this.handles) best = Math.max(best, norm(h.displacement));
    return best;
  }

  /** Drift of a handle tip from its anchor, in scene units. */
  handleArrow(index: number): { from: Vec3; to: Vec3; length: number } {
    const h = this.handles[index];
    const to = this.handleTip(index);
    return { from: h.anchor, to, length: norm(sub(to, h.anchor)) };
  }
}

export function flatten(means: Vec3[]): Float32Array {
  const out = new Float32Array(means.length * 3);
  for (let i = 0; i < means.length; i++) {
    out[3 * i] = Math.fround(means[i][0]);
    out[3 * i + 1] = Math.fround(means[i][1]);
    out[3 * i + 2] = Math.fround(means[i][2]);
  }
  return out;
}
