/** Viewer orchestration: dataset loading, live controls, orbiting, and the
 * contour-job round trip. Owns all state; rendering goes through an
 * injected backend so the whole flow is testable without a GPU.
 *
 * Contracts:
 *  - slider updates touch uniforms only (never the network, never textures);
 *  - at most one analysis job is pending at a time;
 *  - job polling runs at a fixed 250 ms interval and never blocks rendering.
 */

import { ServiceClient, type FetchLike } from './api.js';
import { AtlasVolume, loadAtlas } from './atlas.js';
import { OrbitState } from './orbit.js';
import { parseObj } from './objParse.js';
import type { MeshData, RenderBackend, VolumeUniforms } from './types.js';

export const POLL_INTERVAL_MS = 250;

export const SLIDER_RANGES = {
  intensity: { min: 0, max: 8 },
  balance: { min: 0, max: 1 },
  stepScale: { min: 0.25, max: 4 }, // multiplier on the half-voxel default
} as const;

export interface ViewerState {
  dataset: string | null;
  volume: AtlasVolume | null;
  uniforms: VolumeUniforms;
  orbit: OrbitState | null;
  contourMesh: MeshData | null;
  pendingJobId: string | null;
  showVolume: boolean;
  error: string | null;
  status: string | null;
  lastContourMs: number | null;
}

export class Viewer {
  readonly state: ViewerState;
  private client: ServiceClient | null = null;
  private readonly backend: RenderBackend;
  private readonly fetchFn: FetchLike | undefined;
  private readonly now: () => number;
  private pollTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(backend: RenderBackend, options: { fetchFn?: FetchLike;
    now?: () => number } = {}) {
    this.backend = backend;
    this.fetchFn = options.fetchFn;
    this.now = options.now ?? Date.now;
    this.state = {
      dataset: null, volume: null,
      uniforms: { intensity: 1.0, balance: 0.5, step: 0, isoPreview: 0 },
      orbit: null, contourMesh: null, pendingJobId: null,
      showVolume: true, error: null, status: null, lastContourMs: null,
    };
  }

  /** Fetch atlas + sidecar and configure the GPU volume; on failure the
   * previous state is left untouched and an error banner is set. */
  async loadDataset(serverUrl: string, dataset: string): Promise<void> {
    const client = new ServiceClient(serverUrl, this.fetchFn);
    try {
      const { meta, png } = await client.fetchAtlas(dataset);
      const volume = await loadAtlas(meta, png);
      this.client = client;
      this.state.dataset = dataset;
      this.state.volume = volume;
      this.state.error = null;
      this.state.status = `loaded ${dataset} `
        + `(${meta.dims.join('x')}, ${meta.channels.length} channel(s))`;
      const extent = volume.extent();
      const target: [number, number, number] = [extent[0] / 2, extent[1] / 2, extent[2] / 2];
      this.state.orbit = new OrbitState(target, volume.diagonal());
      this.state.uniforms.step = this.defaultStep() * this.stepScale;
      this.backend.uploadAtlas(volume.toRgba8(), volume.width, volume.height, meta);
      this.pushUniforms();
      this.pushCamera();
      this.backend.render();
    } catch (err) {
      this.state.error = err instanceof Error ? err.message : String(err);
    }
  }

  private stepScale = 1.0;

  private defaultStep(): number {
    const volume = this.state.volume;
    if (volume === null) return 0;
    return Math.min(...volume.meta.spacing) / 2;
  }

  /** Live sliders: clamp into range, update uniforms, redraw. No network
   * traffic and no texture re-upload happens here. */
  updateControls(changes: { intensity?: number; balance?: number;
    stepScale?: number }): void {
    const u = this.state.uniforms;
    if (changes.intensity !== undefined) {
      u.intensity = clamp(changes.intensity, SLIDER_RANGES.intensity.min,
        SLIDER_RANGES.intensity.max);
    }
    if (changes.balance !== undefined) {
      u.balance = clamp(changes.balance, SLIDER_RANGES.balance.min,
        SLIDER_RANGES.balance.max);
    }
    if (changes.stepScale !== undefined) {
      this.stepScale = clamp(changes.stepScale, SLIDER_RANGES.stepScale.min,
        SLIDER_RANGES.stepScale.max);
      u.step = this.defaultStep() * this.stepScale;
    }
    this.pushUniforms();
    this.backend.render();
  }

  /** Pointer drag orbits; wheel/pinch zooms within clamped distance. */
  drag(dxPx: number, dyPx: number): void {
    if (this.state.orbit === null) return;
    this.state.orbit.drag(dxPx, dyPx);
    this.pushCamera();
    this.backend.render();
  }

  zoom(delta: number): void {
    if (this.state.orbit === null) return;
    this.state.orbit.zoom(delta);
    this.pushCamera();
    this.backend.render();
  }

  toggleVolume(show?: boolean): void {
    this.state.showVolume = show ?? !this.state.showVolume;
    this.backend.setVolumeVisible(this.state.showVolume);
    this.backend.render();
  }

  /** Submit an iso-surface job for the first channel's field and poll it.
   * Returns false (and does nothing) while another job is pending. */
  requestContour(isoNormalized: number): boolean {
    const { volume, dataset } = this.state;
    if (this.client === null || volume === null || dataset === null) {
      this.state.error = 'no dataset loaded';
      return false;
    }
    if (this.state.pendingJobId !== null) {
      return false;
    }
    const channel = volume.meta.channels[0];
    const isoPhysical = denormalize(isoNormalized, channel);
    this.state.uniforms.isoPreview = isoNormalized;
    this.state.status = 'contour job submitted';
    this.state.error = null;
    const startedAt = this.now();
    this.state.pendingJobId = 'submitting';
    this.client.submitJob({
      kind: 'isosurface', dataset, field: channel.field,
      iso: isoPhysical, format: 'obj',
    }).then((id) => {
      this.state.pendingJobId = id;
      this.schedulePoll(id, startedAt);
    }).catch((err) => {
      this.failContour(err);
    });
    return true;
  }

  private schedulePoll(id: string, startedAt: number): void {
    this.pollTimer = setTimeout(() => {
      void this.pollOnce(id, startedAt);
    }, POLL_INTERVAL_MS);
  }

  private async pollOnce(id: string, startedAt: number): Promise<void> {
    if (this.client === null || this.state.pendingJobId !== id) return;
    try {
      const job = await this.client.getJob(id);
      if (job.status === 'failed') {
        this.failContour(new Error(job.error ?? 'analysis job failed'));
        return;
      }
      if (job.status !== 'done') {
        this.schedulePoll(id, startedAt);
        return;
      }
      const text = await this.client.fetchAsset(job.asset!);
      const mesh = parseObj(text);
      this.state.lastContourMs = this.now() - startedAt;
      this.state.pendingJobId = null;
      this.state.contourMesh = mesh;
      if (mesh.indices.length === 0) {
        this.state.status = 'no surface at this value';
        this.backend.setMesh(null);
      } else {
        this.state.status = `contour ready in ${Math.round(this.state.lastContourMs)} ms `
          + `(server ${job.timing_ms === null ? '?' : Math.round(job.timing_ms)} ms`
          + `${job.cached ? ', cached' : ''})`;
        this.backend.setMesh(mesh);
      }
      this.backend.render();
    } catch (err) {
      this.failContour(err);
    }
  }

  private failContour(err: unknown): void {
    this.state.pendingJobId = null;
    this.state.error = err instanceof Error ? err.message : String(err);
    this.state.status = null;
  }

  dispose(): void {
    if (this.pollTimer !== null) clearTimeout(this.pollTimer);
  }

  private pushUniforms(): void {
    this.backend.setUniforms(this.state.uniforms);
  }

  private pushCamera(): void {
    const orbit = this.state.orbit;
    if (orbit === null) return;
    this.backend.setCamera(orbit.eye(), orbit.target, orbit.up());
  }
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi);
}

function denormalize(u: number, channel: { mode: string; lo: number; hi: number }): number {
  if (channel.mode === 'log10') {
    const loL = Math.log10(channel.lo);
    return 10 ** (loL + u * (Math.log10(channel.hi) - loL));
  }
  return channel.lo + u * (channel.hi - channel.lo);
}
