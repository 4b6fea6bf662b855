// Minimal orbit camera: enough projection math for point sprites and
// screen-space picking.  Deformation geometry stays in the engine.

import { Vec3 } from "./types.js";

export interface Viewport {
  width: number;
  height: number;
}

export class OrbitCamera {
  target: Vec3 = [0, 0, 0];
  distance = 5;
  azimuth = 0.6;
  elevation = 0.4;
  fov = Math.PI / 4;

  position(): Vec3 {
    const ce = Math.cos(this.elevation);
    return [
      this.target[0] + this.distance * ce * Math.cos(this.azimuth),
      this.target[1] + this.distance * ce * Math.sin(this.azimuth),
      this.target[2] + this.distance * Math.sin(this.elevation),
    ];
  }

  /** Orthonormal camera frame: right, up, forward (toward the target). */
  frame(): { right: Vec3; up: Vec3; forward: Vec3 } {
    const eye = this.position();
    const f = normalize(sub(this.target, eye));
    const worldUp: Vec3 = [0, 0, 1];
    let r = cross(f, worldUp);
    if (norm(r) < 1e-9) r = cross(f, [0, 1, 0]);
    r = normalize(r);
    const u = cross(r, f);
    return { right: r, up: u, forward: f };
  }

  /** World point to [screenX, screenY, depth]; null when behind the eye. */
  project(p: Vec3, vp: Viewport): [number, number, number] | null {
    const eye = this.position();
    const { right, up, forward } = this.frame();
    const d = sub(p, eye);
    const depth = dot(d, forward);
    if (depth <= 1e-9) return null;
    const fscale = vp.height / (2 * Math.tan(this.fov / 2));
    const x = vp.width / 2 + (dot(d, right) / depth) * fscale;
    const y = vp.height / 2 - (dot(d, up) / depth) * fscale;
    return [x, y, depth];
  }

  orbit(dAzimuth: number, dElevation: number): void {
    this.azimuth += dAzimuth;
    this.elevation = Math.max(
      -Math.PI / 2 + 0.01,
      Math.min(Math.PI / 2 - 0.01, this.elevation + dElevation),
    );
  }

  zoom(factor: number): void {
    this.distance = Math.max(1e-3, this.distance * factor);
  }

  fitScene(means: Vec3[], scale: number): void {
    if (means.length === 0) return;
    const c: Vec3 = [0, 0, 0];
    for (const m of means) {
      c[0] += m[0];
      c[1] += m[1];
      c[2] += m[2];
    }
    this.target = [c[0] / means.length, c[1] / means.length, c[2] / means.length];
    this.distance = Math.max(scale * 1.8, 1e-3);
  }
}

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function scale3(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

export function norm(a: Vec3): number {
  return Math.sqrt(dot(a, a));
}

export function normalize(a: Vec3): Vec3 {
  const n = norm(a);
  return n > 0 ? [a[0] / n, a[1] / n, a[2] / n] : [0, 0, 0];
}
