// Canvas point-cloud viewer: before/after layers, handles with arrows,
// ellipse-axis glyphs on hover and a displacement color map.

import { OrbitCamera, add, scale3 } from "./camera.js";
import { pickPoint } from "./picking.js";
import { EditorSession } from "./session.js";
import { Vec3 } from "./types.js";

export class Viewer {
  camera = new OrbitCamera();
  hoverIndex: number | null = null;

  constructor(
    private canvas: HTMLCanvasElement,
    private session: EditorSession,
  ) {}

  viewport() {
    return { width: this.canvas.width, height: this.canvas.height };
  }

  fit(): void {
    const preview = this.session.preview;
    if (preview) this.camera.fitScene(preview.means, preview.scale);
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    const preview = this.session.preview;
    if (!ctx || !preview) return;
    const vp = this.viewport();
    ctx.fillStyle = "#10131a";
    ctx.fillRect(0, 0, vp.width, vp.height);

    const layer = this.activeLayer();
    const magnitudes = this.session.displacementMagnitudes();
    const maxMag = magnitudes
      ? magnitudes.reduce((a, b) => Math.max(a, b), 1e-12)
      : 1;
    const n = layer.length / 3;
    for (let i = 0; i < n; i++) {
      const p: Vec3 = [layer[3 * i], layer[3 * i + 1], layer[3 * i + 2]];
      const projected = this.camera.project(p, vp);
      if (!projected) continue;
      const [x, y] = projected;
      if (this.session.showAfter && this.session.afterLayer() && magnitudes) {
        const t = magnitudes[i] / maxMag;
        ctx.fillStyle = `rgb(${Math.round(60 + 195 * t)}, ${Math.round(
          140 - 60 * t,
        )}, ${Math.round(220 - 160 * t)})`;
      } else {
        ctx.fillStyle = "#7fa6dd";
      }
      ctx.fillRect(x - 1, y - 1, 2, 2);
    }

    if (this.hoverIndex !== null) this.drawEllipseGlyph(ctx, this.hoverIndex);
    this.drawHandles(ctx);
  }

  private activeLayer(): Float32Array {
    const after = this.session.afterLayer();
    return this.session.showAfter && after ? after : this.session.beforeLayer();
  }

  private drawEllipseGlyph(ctx: CanvasRenderingContext2D, i: number): void {
    const preview = this.session.preview;
    if (!preview || !preview.ellipses.valid[i]) return;
    const vp = this.viewport();
    const c = preview.means[i];
    const a1 = preview.ellipses.axis1[i];
    const a2 = preview.ellipses.axis2[i];
    const sa = preview.ellipses.semi_a[i];
    const sb = preview.ellipses.semi_b[i];
    ctx.strokeStyle = "#ffd166";
    ctx.beginPath();
    for (let k = 0; k <= 32; k++) {
      const t = (2 * Math.PI * k) / 32;
      const p = add(
        add(c, scale3(a1, sa * Math.cos(t))),
        scale3(a2, sb * Math.sin(t)),
      );
      const projected = this.camera.project(p, vp);
      if (!projected) continue;
      if (k === 0) ctx.moveTo(projected[0], projected[1]);
      else ctx.lineTo(projected[0], projected[1]);
    }
    ctx.stroke();
  }

  private drawHandles(ctx: CanvasRenderingContext2D): void {
    const vp = this.viewport();
    this.session.handles.forEach((h, k) => {
      const anchor = this.camera.project(h.anchor, vp);
      const tip = this.camera.project(this.session.handleTip(k), vp);
      if (!anchor) return;
      ctx.fillStyle = "#ef476f";
      ctx.beginPath();
      ctx.arc(anchor[0], anchor[1], 5, 0, 2 * Math.PI);
      ctx.fill();
      if (tip) {
        ctx.strokeStyle = "#ef476f";
        ctx.lineWidth = 2;
        ctx.beginPath();
        ctx.moveTo(anchor[0], anchor[1]);
        ctx.lineTo(tip[0], tip[1]);
        ctx.stroke();
        ctx.lineWidth = 1;
      }
    });
  }

  pickPreviewPoint(screenX: number, screenY: number, radiusPx = 12) {
    const preview = this.session.preview;
    if (!preview) return null;
    return pickPoint(
      preview.means,
      this.camera,
      this.viewport(),
      screenX,
      screenY,
      radiusPx,
    );
  }

  updateHover(screenX: number, screenY: number): void {
    const pick = this.pickPreviewPoint(screenX, screenY, 8);
    this.hoverIndex = pick ? pick.previewIndex : null;
  }

  /** Map a screen-space drag of a handle into a world displacement in the
   *  camera plane (right/up axes scaled by the anchor depth). */
  dragToWorld(handleIndex: number, dxPx: number, dyPx: number): Vec3 {
    const vp = this.viewport();
    const h = this.session.handles[handleIndex];
    const projected = this.camera.project(h.anchor, vp);
    const depth = projected ? projected[2] : this.camera.distance;
    const fscale = vp.height / (2 * Math.tan(this.camera.fov / 2));
    const perPx = depth / fscale;
    const { right, up } = this.camera.frame();
    return add(scale3(right, dxPx * perPx), scale3(up, -dyPx * perPx));
  }
}
