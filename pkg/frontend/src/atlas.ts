/** Tiled-atlas volume access: the CPU twin of the shader's sampling.
 *
 * Slice k of the source grid occupies tile (k % cols, k / cols | 0); inside
 * a tile the two in-slice axes map to (tile-x, tile-y) in ascending axis
 * order. Samples are voxel centers, so continuous coordinates clamp to the
 * center hull exactly like the service-side sampler, and interpolation is
 * bilinear within a slice plus linear across adjacent slices.
 */

import type { AtlasMeta } from './types.js';
import { decodePng, type DecodedPng } from './png.js';

const AXES = { x: 0, y: 1, z: 2 } as const;

export class AtlasVolume {
  readonly meta: AtlasMeta;
  readonly width: number;
  readonly height: number;
  /** normalized [0, 1] samples, full stored precision, RGBA interleaved */
  readonly data: Float32Array;
  readonly nChannels: number;
  private readonly axis: number;
  private readonly inSlice: [number, number];

  constructor(meta: AtlasMeta, png: DecodedPng) {
    if (png.channels !== 4) throw new Error('atlas PNG must have 4 channels');
    if (png.width !== meta.cols * meta.tile_w || png.height !== meta.rows * meta.tile_h) {
      throw new Error(`atlas is ${png.width}x${png.height}, sidecar expects `
        + `${meta.cols * meta.tile_w}x${meta.rows * meta.tile_h}`);
    }
    if (png.depth !== meta.bit_depth) {
      throw new Error(`atlas depth ${png.depth} != sidecar depth ${meta.bit_depth}`);
    }
    this.meta = meta;
    this.width = png.width;
    this.height = png.height;
    this.nChannels = meta.channels.length;
    const maxQ = (1 << meta.bit_depth) - 1;
    this.data = new Float32Array(png.data.length);
    for (let i = 0; i < png.data.length; i++) {
      this.data[i] = png.data[i] / maxQ;
    }
    this.axis = AXES[meta.slice_axis];
    const others = [0, 1, 2].filter((a) => a !== this.axis);
    this.inSlice = [others[0], others[1]];
  }

  /** RGBA channel slot (0..3) holding the i-th assigned channel. */
  channelSlot(index: number): number {
    return 'RGBA'.indexOf(this.meta.channels[index].channel);
  }

  private texel(k: number, p1: number, p2: number, slot: number): number {
    const { cols, tile_w, tile_h } = this.meta;
    const px = (k % cols) * tile_w + p1;
    const py = ((k / cols) | 0) * tile_h + p2;
    return this.data[(py * this.width + px) * 4 + slot];
  }

  /** Exact voxel fetch at integer grid coordinates. */
  voxel(x: number, y: number, z: number, channel: number): number {
    const c = [x, y, z];
    return this.texel(c[this.axis], c[this.inSlice[0]], c[this.inSlice[1]],
      this.channelSlot(channel));
  }

  /** Trilinear sample at continuous voxel-center coordinates (cx, cy, cz),
   * where integer values hit voxel centers; out-of-hull coordinates clamp
   * to edge samples. */
  sample(cx: number, cy: number, cz: number, channel: number): number {
    const dims = this.meta.dims;
    const c = [cx, cy, cz];
    const i0: number[] = [];
    const f: number[] = [];
    for (let a = 0; a < 3; a++) {
      let base = Math.floor(c[a]);
      base = Math.min(Math.max(base, 0), dims[a] - 2);
      i0.push(base);
      f.push(Math.min(Math.max(c[a] - base, 0), 1));
    }
    const slot = this.channelSlot(channel);
    const [a1, a2] = this.inSlice;
    const ax = this.axis;
    const corner = (da1: number, da2: number, dax: number) => {
      const idx = [0, 0, 0];
      idx[a1] = i0[a1] + da1;
      idx[a2] = i0[a2] + da2;
      idx[ax] = i0[ax] + dax;
      return this.texel(idx[ax], idx[a1], idx[a2], slot);
    };
    const bilinear = (dax: number) => {
      const c00 = corner(0, 0, dax), c10 = corner(1, 0, dax);
      const c01 = corner(0, 1, dax), c11 = corner(1, 1, dax);
      const top = c00 + (c10 - c00) * f[a1];
      const bottom = c01 + (c11 - c01) * f[a1];
      return top + (bottom - top) * f[a2];
    };
    const near = bilinear(0);
    const far = bilinear(1);
    return near + (far - near) * f[ax];
  }

  /** 8-bit RGBA copy for GPU upload (high byte of 16-bit atlases); the
   * shader's precision is then 1/255, within the viewer's agreement bound. */
  toRgba8(): Uint8Array {
    const out = new Uint8Array(this.data.length);
    for (let i = 0; i < this.data.length; i++) {
      out[i] = Math.round(this.data[i] * 255);
    }
    return out;
  }

  /** Physical edge lengths of the volume, for camera framing. */
  extent(): [number, number, number] {
    const { dims, spacing } = this.meta;
    return [dims[0] * spacing[0], dims[1] * spacing[1], dims[2] * spacing[2]];
  }

  diagonal(): number {
    const [ex, ey, ez] = this.extent();
    return Math.sqrt(ex * ex + ey * ey + ez * ez);
  }
}

export async function loadAtlas(meta: AtlasMeta, pngBytes: Uint8Array): Promise<AtlasVolume> {
  return new AtlasVolume(meta, await decodePng(pngBytes));
}
