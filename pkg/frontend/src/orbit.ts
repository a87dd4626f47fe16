/** Orbit camera state: azimuth/elevation around a target, clamped zoom. */

import type { Vec3 } from './types.js';

const DEG = Math.PI / 180;
export const MIN_ZOOM_FACTOR = 0.1;
export const MAX_ZOOM_FACTOR = 10.0;
const ELEVATION_LIMIT = 89.9; // degrees, keeps the up vector well-defined

export class OrbitState {
  azimuthDeg = 0;
  elevationDeg = 15;
  distance: number;
  readonly target: Vec3;
  readonly diagonal: number;

  constructor(target: Vec3, diagonal: number) {
    this.target = target;
    this.diagonal = diagonal;
    this.distance = 1.8 * diagonal;
  }

  /** Pointer drag in pixels; a full 360 degrees is ~720 px of drag. */
  drag(dxPx: number, dyPx: number): void {
    this.azimuthDeg = (this.azimuthDeg + dxPx * 0.5) % 360;
    this.elevationDeg = clamp(this.elevationDeg + dyPx * 0.5,
      -ELEVATION_LIMIT, ELEVATION_LIMIT);
  }

  /** Wheel / pinch: positive delta zooms out. Distance is clamped to
   * [0.1, 10] x the volume diagonal. */
  zoom(delta: number): void {
    this.distance = clamp(this.distance * Math.exp(delta * 0.001),
      MIN_ZOOM_FACTOR * this.diagonal, MAX_ZOOM_FACTOR * this.diagonal);
  }

  eye(): Vec3 {
    const az = this.azimuthDeg * DEG;
    const el = this.elevationDeg * DEG;
    const r = this.distance * Math.cos(el);
    return [
      this.target[0] + r * Math.sin(az),
      this.target[1] - r * Math.cos(az),
      this.target[2] + this.distance * Math.sin(el),
    ];
  }

  up(): Vec3 {
    return [0, 0, 1];
  }
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi);
}
