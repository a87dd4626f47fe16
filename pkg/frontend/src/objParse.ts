/** Parse the OBJ meshes the analysis service produces (v / vn / f lines,
 * triangles only, optional v//n index pairs). */

import type { MeshData } from './types.js';

export function parseObj(text: string): MeshData {
  const positions: number[] = [];
  const normalsIn: number[] = [];
  const normalOf = new Map<number, number>(); // vertex index -> normal index
  const indices: number[] = [];

  for (const line of text.split('\n')) {
    const parts = line.trim().split(/\s+/);
    if (parts[0] === 'v') {
      positions.push(+parts[1], +parts[2], +parts[3]);
    } else if (parts[0] === 'vn') {
      normalsIn.push(+parts[1], +parts[2], +parts[3]);
    } else if (parts[0] === 'f') {
      if (parts.length !== 4) throw new Error('only triangle faces supported');
      for (const spec of parts.slice(1)) {
        const fields = spec.split('/');
        const vi = parseInt(fields[0], 10) - 1;
        indices.push(vi);
        if (fields.length > 2 && fields[2]) {
          normalOf.set(vi, parseInt(fields[2], 10) - 1);
        }
      }
    }
  }

  let normals: Float32Array | null = null;
  if (normalsIn.length && normalOf.size) {
    normals = new Float32Array(positions.length);
    for (const [vi, ni] of normalOf) {
      normals[3 * vi] = normalsIn[3 * ni];
      normals[3 * vi + 1] = normalsIn[3 * ni + 1];
      normals[3 * vi + 2] = normalsIn[3 * ni + 2];
    }
  }
  return {
    positions: new Float32Array(positions),
    normals,
    indices: new Uint32Array(indices),
  };
}
