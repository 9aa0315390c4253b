/** Canvas painter for a scatter Scene. */

import { Scene } from "./scene.js";

export interface Painter {
  fillStyle: string | CanvasGradient | CanvasPattern;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
}

const MARK_RADIUS = 2.5;

export function paintScene(ctx: Painter, scene: Scene, width: number, height: number): void {
  ctx.fillStyle = "#ffffff";
  ctx.fillRect(0, 0, width, height);
  for (const mark of scene.marks) {
    ctx.fillStyle = mark.color;
    ctx.beginPath();
    ctx.arc(mark.px, mark.py, MARK_RADIUS, 0, 2 * Math.PI);
    ctx.fill();
  }
}
