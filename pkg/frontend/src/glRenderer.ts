/** WebGL2 render backend: volume ray marching plus an optional contour
 * mesh, driven entirely by uniforms so slider changes never re-upload
 * textures or geometry. */

import type { AtlasMeta, MeshData, RenderBackend, Vec3, VolumeUniforms } from './types.js';
import { MESH_FRAG, MESH_VERT, VOLUME_FRAG, VOLUME_VERT } from './shaders.js';

const AXES = { x: 0, y: 1, z: 2 } as const;

export class WebGlRenderer implements RenderBackend {
  private readonly gl: WebGL2RenderingContext;
  private readonly canvas: HTMLCanvasElement;
  private volumeProgram: WebGLProgram;
  private meshProgram: WebGLProgram;
  private quad: WebGLBuffer;
  private atlasTexture: WebGLTexture | null = null;
  private meshBuffers: { position: WebGLBuffer; normal: WebGLBuffer;
    index: WebGLBuffer; count: number } | null = null;
  private meta: AtlasMeta | null = null;
  private uniforms: VolumeUniforms = { intensity: 1, balance: 0.5, step: 0, isoPreview: 0 };
  private eye: Vec3 = [0, -2, 0];
  private target: Vec3 = [0, 0, 0];
  private upVec: Vec3 = [0, 0, 1];
  private volumeVisible = true;
  private textureCount = 0;
  private bufferCount = 0;

  constructor(canvas: HTMLCanvasElement) {
    const gl = canvas.getContext('webgl2');
    if (!gl) throw new Error('WebGL2 is not available');
    this.gl = gl;
    this.canvas = canvas;
    this.volumeProgram = this.compile(VOLUME_VERT, VOLUME_FRAG);
    this.meshProgram = this.compile(MESH_VERT, MESH_FRAG);
    this.quad = gl.createBuffer()!;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.quad);
    gl.bufferData(gl.ARRAY_BUFFER,
      new Float32Array([-1, -1, 3, -1, -1, 3]), gl.STATIC_DRAW);
    gl.enable(gl.DEPTH_TEST);
  }

  private compile(vertSrc: string, fragSrc: string): WebGLProgram {
    const gl = this.gl;
    const make = (type: number, src: string) => {
      const shader = gl.createShader(type)!;
      gl.shaderSource(shader, src);
      gl.compileShader(shader);
      if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
        throw new Error(`shader compile failed: ${gl.getShaderInfoLog(shader)}`);
      }
      return shader;
    };
    const program = gl.createProgram()!;
    gl.attachShader(program, make(gl.VERTEX_SHADER, vertSrc));
    gl.attachShader(program, make(gl.FRAGMENT_SHADER, fragSrc));
    gl.linkProgram(program);
    if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
      throw new Error(`program link failed: ${gl.getProgramInfoLog(program)}`);
    }
    return program;
  }

  uploadAtlas(pixels: Uint8Array, width: number, height: number, meta: AtlasMeta): void {
    const gl = this.gl;
    if (this.atlasTexture === null) {
      this.atlasTexture = gl.createTexture();
      this.textureCount += 1;
    }
    gl.bindTexture(gl.TEXTURE_2D, this.atlasTexture);
    gl.pixelStorei(gl.UNPACK_ALIGNMENT, 1);
    gl.texImage2D(gl.TEXTURE_2D, 0, gl.RGBA, width, height, 0,
      gl.RGBA, gl.UNSIGNED_BYTE, pixels);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MIN_FILTER, gl.LINEAR);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MAG_FILTER, gl.LINEAR);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_WRAP_S, gl.CLAMP_TO_EDGE);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_WRAP_T, gl.CLAMP_TO_EDGE);
    this.meta = meta;
  }

  setUniforms(uniforms: VolumeUniforms): void {
    this.uniforms = { ...uniforms };
  }

  setCamera(eye: Vec3, target: Vec3, up: Vec3): void {
    this.eye = eye;
    this.target = target;
    this.upVec = up;
  }

  setMesh(mesh: MeshData | null): void {
    const gl = this.gl;
    if (mesh === null || mesh.indices.length === 0) {
      this.meshBuffers = null;
      return;
    }
    if (this.meshBuffers === null) {
      this.meshBuffers = { position: gl.createBuffer()!, normal: gl.createBuffer()!,
        index: gl.createBuffer()!, count: 0 };
      this.bufferCount += 3;
    }
    const buffers = this.meshBuffers;
    gl.bindBuffer(gl.ARRAY_BUFFER, buffers.position);
    gl.bufferData(gl.ARRAY_BUFFER, mesh.positions, gl.STATIC_DRAW);
    gl.bindBuffer(gl.ARRAY_BUFFER, buffers.normal);
    gl.bufferData(gl.ARRAY_BUFFER,
      mesh.normals ?? new Float32Array(mesh.positions.length), gl.STATIC_DRAW);
    gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, buffers.index);
    gl.bufferData(gl.ELEMENT_ARRAY_BUFFER, mesh.indices, gl.STATIC_DRAW);
    buffers.count = mesh.indices.length;
  }

  setVolumeVisible(visible: boolean): void {
    this.volumeVisible = visible;
  }

  resourceCounts(): { textures: number; buffers: number } {
    return { textures: this.textureCount, buffers: this.bufferCount };
  }

  render(): void {
    const gl = this.gl;
    const meta = this.meta;
    gl.viewport(0, 0, this.canvas.width, this.canvas.height);
    gl.clearColor(0, 0, 0.02, 1);
    gl.clear(gl.COLOR_BUFFER_BIT | gl.DEPTH_BUFFER_BIT);
    if (meta === null) return;

    const extent: Vec3 = [meta.dims[0] * meta.spacing[0],
      meta.dims[1] * meta.spacing[1], meta.dims[2] * meta.spacing[2]];
    const basis = cameraBasis(this.eye, this.target, this.upVec);
    const aspect = this.canvas.width / Math.max(1, this.canvas.height);
    const halfH = Math.tan((45 / 2) * Math.PI / 180);

    if (this.volumeVisible && this.atlasTexture !== null) {
      gl.useProgram(this.volumeProgram);
      gl.disable(gl.DEPTH_TEST);
      const loc = (name: string) => gl.getUniformLocation(this.volumeProgram, name);
      gl.activeTexture(gl.TEXTURE0);
      gl.bindTexture(gl.TEXTURE_2D, this.atlasTexture);
      gl.uniform1i(loc('uAtlas'), 0);
      gl.uniform3f(loc('uDims'), meta.dims[0], meta.dims[1], meta.dims[2]);
      gl.uniform3fv(loc('uExtent'), extent);
      gl.uniform1f(loc('uCols'), meta.cols);
      gl.uniform1f(loc('uTileW'), meta.tile_w);
      gl.uniform1f(loc('uTileH'), meta.tile_h);
      gl.uniform2f(loc('uAtlasSize'), meta.cols * meta.tile_w, meta.rows * meta.tile_h);
      const axis = AXES[meta.slice_axis];
      const inSlice = [0, 1, 2].filter((a) => a !== axis);
      gl.uniform3f(loc('uAxisMap'), axis, inSlice[0], inSlice[1]);
      gl.uniform1f(loc('uNSlices'), meta.n_slices);
      gl.uniform1f(loc('uNChannels'), meta.channels.length);
      gl.uniform4fv(loc('uSlotMask0'), slotMask(meta, 0));
      gl.uniform4fv(loc('uSlotMask1'), slotMask(meta, 1));
      gl.uniform3fv(loc('uEye'), this.eye);
      gl.uniformMatrix3fv(loc('uCameraBasis'), false, basis);
      gl.uniform1f(loc('uHalfWidth'), halfH * aspect);
      gl.uniform1f(loc('uHalfHeight'), halfH);
      gl.uniform1f(loc('uIntensity'), this.uniforms.intensity);
      gl.uniform1f(loc('uBalance'), this.uniforms.balance);
      gl.uniform1f(loc('uStep'), this.uniforms.step);
      gl.uniform3f(loc('uBackground'), 0, 0, 0.02);
      gl.bindBuffer(gl.ARRAY_BUFFER, this.quad);
      gl.enableVertexAttribArray(0);
      gl.vertexAttribPointer(0, 2, gl.FLOAT, false, 0, 0);
      gl.drawArrays(gl.TRIANGLES, 0, 3);
      gl.enable(gl.DEPTH_TEST);
    }

    if (this.meshBuffers !== null) {
      gl.useProgram(this.meshProgram);
      const loc = (name: string) => gl.getUniformLocation(this.meshProgram, name);
      gl.uniformMatrix4fv(loc('uViewProjection'), false,
        viewProjection(this.eye, basis, aspect, 0.01, 100));
      gl.uniform3f(loc('uLightDir'), 0.4, -0.7, 0.59);
      gl.bindBuffer(gl.ARRAY_BUFFER, this.meshBuffers.position);
      gl.enableVertexAttribArray(0);
      gl.vertexAttribPointer(0, 3, gl.FLOAT, false, 0, 0);
      gl.bindBuffer(gl.ARRAY_BUFFER, this.meshBuffers.normal);
      gl.enableVertexAttribArray(1);
      gl.vertexAttribPointer(1, 3, gl.FLOAT, false, 0, 0);
      gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, this.meshBuffers.index);
      gl.drawElements(gl.TRIANGLES, this.meshBuffers.count, gl.UNSIGNED_INT, 0);
    }
  }
}

function slotMask(meta: AtlasMeta, channelIndex: number): Float32Array {
  const mask = new Float32Array(4);
  if (channelIndex < meta.channels.length) {
    mask['RGBA'.indexOf(meta.channels[channelIndex].channel)] = 1;
  }
  return mask;
}

/** Column-major right/up/forward basis for the pinhole camera. */
export function cameraBasis(eye: Vec3, target: Vec3, up: Vec3): Float32Array {
  const fwd = normalize(sub(target, eye));
  const right = normalize(cross(fwd, up));
  const trueUp = cross(right, fwd);
  return new Float32Array([
    right[0], right[1], right[2],
    trueUp[0], trueUp[1], trueUp[2],
    fwd[0], fwd[1], fwd[2],
  ]);
}

function viewProjection(eye: Vec3, basis: Float32Array, aspect: number,
  near: number, far: number): Float32Array {
  const right: Vec3 = [basis[0], basis[1], basis[2]];
  const up: Vec3 = [basis[3], basis[4], basis[5]];
  const fwd: Vec3 = [basis[6], basis[7], basis[8]];
  const f = 1 / Math.tan((45 / 2) * Math.PI / 180);
  // row-major compose, emitted column-major for WebGL
  const view = [
    right[0], right[1], right[2], -dot(right, eye),
    up[0], up[1], up[2], -dot(up, eye),
    -fwd[0], -fwd[1], -fwd[2], dot(fwd, eye),
    0, 0, 0, 1,
  ];
  const proj = [
    f / aspect, 0, 0, 0,
    0, f, 0, 0,
    0, 0, (far + near) / (near - far), (2 * far * near) / (near - far),
    0, 0, -1, 0,
  ];
  const out = new Float32Array(16);
  for (let row = 0; row < 4; row++) {
    for (let col = 0; col < 4; col++) {
      let sum = 0;
      for (let k = 0; k < 4; k++) {
        sum += proj[row * 4 + k] * view[k * 4 + col];
      }
      out[col * 4 + row] = sum; // transpose into column-major
    }
  }
  return out;
}

const sub = (a: Vec3, b: Vec3): Vec3 => [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
const dot = (a: Vec3, b: Vec3): number => a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
const cross = (a: Vec3, b: Vec3): Vec3 => [
  a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
function normalize(v: Vec3): Vec3 {
  const n = Math.hypot(v[0], v[1], v[2]);
  return [v[0] / n, v[1] / n, v[2] / n];
}
