import { afterEach, beforeEach, describe, expect, it, vi } from 'vitest';

import { Viewer } from '../src/viewer.js';
import { MockService } from './mockService.js';
import { StubBackend } from './stubBackend.js';

const SERVER = 'http://service.test';

describe('dataset loading', () => {
  it('fetches atlas + sidecar, configures the volume and camera', async () => {
    const service = new MockService();
    const backend = new StubBackend();
    const viewer = new Viewer(backend, { fetchFn: service.fetchFn });
    await viewer.loadDataset(SERVER, 'demo');

    expect(viewer.state.error).toBeNull();
    expect(viewer.state.volume).not.toBeNull();
    expect(viewer.state.volume!.meta.dims).toEqual([6, 5, 4]);
    expect(backend.uploads).toBe(1);
    expect(backend.camera).not.toBeNull();
    expect(backend.renders).toBeGreaterThan(0);
    // step defaults to half the smallest voxel spacing
    expect(viewer.state.uniforms.step).toBeCloseTo(0.5, 12);
  });

  it('unknown dataset raises the banner and leaves state untouched', async () => {
    const service = new MockService();
    const backend = new StubBackend();
    const viewer = new Viewer(backend, { fetchFn: service.fetchFn });
    await viewer.loadDataset(SERVER, 'nope');
    expect(viewer.state.error).toContain('unknown dataset');
    expect(viewer.state.volume).toBeNull();
    expect(backend.uploads).toBe(0);
  });

  it('re-loading the same dataset does not grow GPU allocations', async () => {
    const service = new MockService();
    const backend = new StubBackend();
    const viewer = new Viewer(backend, { fetchFn: service.fetchFn });
    await viewer.loadDataset(SERVER, 'demo');
    const counts = backend.resourceCounts();
    await viewer.loadDataset(SERVER, 'demo');
    expect(backend.resourceCounts()).toEqual(counts);
  });
});

describe('live controls', () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it('a 2-second slider drag produces zero network requests', async () => {
    const service = new MockService();
    const backend = new StubBackend();
    const viewer = new Viewer(backend, { fetchFn: service.fetchFn });
    await viewer.loadDataset(SERVER, 'demo');
    const requestsBefore = service.requests.length;
    const uploadsBefore = backend.uploads;

    for (let t = 0; t < 2000; t += 16) {
      viewer.updateControls({ intensity: 0.5 + (t / 2000) * 3,
        balance: (t % 500) / 500 });
      await vi.advanceTimersByTimeAsync(16);
    }

    expect(service.requests.length).toBe(requestsBefore);
    expect(backend.uploads).toBe(uploadsBefore); // no texture re-upload either
    expect(backend.renders).toBeGreaterThan(100); // frames kept coming
  });

  it('slider values clamp to their ranges', async () => {
    const service = new MockService();
    const viewer = new Viewer(new StubBackend(), { fetchFn: service.fetchFn });
    await viewer.loadDataset(SERVER, 'demo');
    viewer.updateControls({ intensity: -5, balance: 7 });
    expect(viewer.state.uniforms.intensity).toBe(0);
    expect(viewer.state.uniforms.balance).toBe(1);
    viewer.updateControls({ intensity: 1e9 });
    expect(viewer.state.uniforms.intensity).toBe(8);
  });

  it('intensity zero reaches the backend (volume goes dark)', async () => {
    const service = new MockService();
    const backend = new StubBackend();
    const viewer = new Viewer(backend, { fetchFn: service.fetchFn });
    await viewer.loadDataset(SERVER, 'demo');
    viewer.updateControls({ intensity: 0 });
    expect(backend.uniforms!.intensity).toBe(0);
  });

  it('camera orbit needs no network either', async () => {
    const service = new MockService();
    const backend = new StubBackend();
    const viewer = new Viewer(backend, { fetchFn: service.fetchFn });
    await viewer.loadDataset(SERVER, 'demo');
    const before = service.requests.length;
    for (let i = 0; i < 50; i++) {
      viewer.drag(7, -3);
      viewer.zoom(i % 2 === 0 ? 40 : -40);
    }
    expect(service.requests.length).toBe(before);
  });
});
