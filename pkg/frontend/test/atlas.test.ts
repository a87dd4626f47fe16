import { describe, expect, it } from 'vitest';

import { AtlasVolume, loadAtlas } from '../src/atlas.js';
import { decodePng } from '../src/png.js';
import { loadFixture } from './fixture.js';

const fixture = loadFixture();

describe('png decoding', () => {
  it('decodes the service atlas to the sidecar dimensions', async () => {
    const png = await decodePng(fixture.pngBytes);
    expect(png.width).toBe(fixture.meta.cols * fixture.meta.tile_w);
    expect(png.height).toBe(fixture.meta.rows * fixture.meta.tile_h);
    expect(png.depth).toBe(fixture.meta.bit_depth);
    expect(png.channels).toBe(4);
  });

  it('rejects garbage', async () => {
    await expect(decodePng(new Uint8Array([1, 2, 3]))).rejects.toThrow('not a PNG');
  });
});

describe('volume sampling vs the service-side oracle', () => {
  it('matches unpack + trilinear at every probe (float32 storage)', async () => {
    const volume = await loadAtlas(fixture.meta, fixture.pngBytes);
    // samples are held as float32, so agreement is at float32 epsilon;
    // any tile-lookup or interpolation bug would be off by >= 1/65535
    for (const probe of fixture.probes) {
      const got = volume.sample(probe.c[0], probe.c[1], probe.c[2], probe.channel);
      expect(Math.abs(got - probe.expected)).toBeLessThanOrEqual(2e-6);
    }
  });

  it('integer coordinates hit exact voxel fetches', async () => {
    const volume = await loadAtlas(fixture.meta, fixture.pngBytes);
    for (const probe of fixture.probes) {
      const [x, y, z] = probe.c;
      if (Number.isInteger(x) && Number.isInteger(y) && Number.isInteger(z)) {
        expect(volume.voxel(x, y, z, probe.channel)).toBe(
          volume.sample(x, y, z, probe.channel));
      }
    }
  });

  it('the 8-bit GPU copy agrees with the oracle within 1/255', async () => {
    const volume = await loadAtlas(fixture.meta, fixture.pngBytes);
    // model the texture exactly: the uploaded bytes re-wrapped as an 8-bit atlas
    const gpuVolume = new AtlasVolume(
      { ...fixture.meta, bit_depth: 8 },
      { width: volume.width, height: volume.height, channels: 4, depth: 8,
        data: volume.toRgba8() });
    for (const probe of fixture.probes) {
      const got = gpuVolume.sample(probe.c[0], probe.c[1], probe.c[2], probe.channel);
      expect(Math.abs(got - probe.expected)).toBeLessThanOrEqual(1 / 255);
    }
  });

  it('clamps outside the voxel-center hull to edge samples', async () => {
    const volume = await loadAtlas(fixture.meta, fixture.pngBytes);
    expect(volume.sample(-5, 0, 0, 0)).toBe(volume.voxel(0, 0, 0, 0));
    const [nx, ny, nz] = fixture.meta.dims;
    expect(volume.sample(nx + 3, ny + 3, nz + 3, 0)).toBe(
      volume.voxel(nx - 1, ny - 1, nz - 1, 0));
  });

  it('rejects a PNG that disagrees with the sidecar', async () => {
    const png = await decodePng(fixture.pngBytes);
    expect(() => new AtlasVolume(
      { ...fixture.meta, tile_w: fixture.meta.tile_w + 1 }, png)).toThrow('sidecar');
  });
});
