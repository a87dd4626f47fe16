export type Vec3 = [number, number, number];

/** Per-channel entry of the atlas sidecar document. */
export interface ChannelMeta {
  channel: 'R' | 'G' | 'B' | 'A';
  field: string;
  units: string;
  mode: 'linear' | 'log10';
  lo: number;
  hi: number;
}

/** Atlas sidecar: the layout that makes the tiled packing invertible. */
export interface AtlasMeta {
  dims: [number, number, number];
  slice_axis: 'x' | 'y' | 'z';
  n_slices: number;
  cols: number;
  rows: number;
  tile_w: number;
  tile_h: number;
  bit_depth: 8 | 16;
  channels: ChannelMeta[];
  spacing: [number, number, number];
  origin: [number, number, number];
}

export interface MeshData {
  positions: Float32Array; // xyz triples
  normals: Float32Array | null;
  indices: Uint32Array;
}

export interface VolumeUniforms {
  intensity: number;
  balance: number;
  step: number;
  isoPreview: number;
}

/** Everything the render loop needs; a software stub stands in for tests. */
export interface RenderBackend {
  uploadAtlas(pixels: Uint8Array, width: number, height: number, meta: AtlasMeta): void;
  setUniforms(uniforms: VolumeUniforms): void;
  setCamera(eye: Vec3, target: Vec3, up: Vec3): void;
  setMesh(mesh: MeshData | null): void;
  setVolumeVisible(visible: boolean): void;
  render(): void;
  resourceCounts(): { textures: number; buffers: number };
}

export interface JobSnapshot {
  id: string;
  status: 'queued' | 'running' | 'done' | 'failed';
  asset: string | null;
  error: string | null;
  timing_ms: number | null;
  cached: boolean;
}

export interface DatasetSummary {
  name: string;
  dims: number[];
  fields: string[];
}
