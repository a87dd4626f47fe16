import { readFileSync } from 'node:fs';
import { fileURLToPath } from 'node:url';
import type { AtlasMeta } from '../src/types.js';

export interface Probe {
  c: [number, number, number];
  channel: number;
  expected: number;
}

export interface AtlasFixture {
  meta: AtlasMeta;
  pngBytes: Uint8Array;
  probes: Probe[];
}

/** Atlas + oracle values produced by the service-side implementation. */
export function loadFixture(): AtlasFixture {
  const path = fileURLToPath(new URL('./fixtures/atlas_fixture.json', import.meta.url));
  const doc = JSON.parse(readFileSync(path, 'utf-8'));
  return {
    meta: doc.meta as AtlasMeta,
    pngBytes: new Uint8Array(Buffer.from(doc.png_base64, 'base64')),
    probes: doc.probes as Probe[],
  };
}
