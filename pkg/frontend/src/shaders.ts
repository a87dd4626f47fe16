/** GLSL for the volume ray marcher and the contour mesh.
 *
 * The fragment shader reconstructs the 3D volume from the tiled 2D atlas
 * exactly like the CPU sampler in atlas.ts: tile lookup from the slice
 * index, hardware bilinear filtering inside a tile (clamped half a texel
 * from tile borders so neighbouring tiles never bleed), and a manual mix
 * across adjacent slices. Compositing matches the service renderer:
 * per segment a = 1 - exp(-k*ds), C += T*a*emission/max(k, 1e-6),
 * T *= 1 - a, early exit below T = 1e-3.
 */

export const VOLUME_VERT = `#version 300 es
layout(location = 0) in vec2 aCorner;
out vec2 vNdc;
void main() {
  vNdc = aCorner;
  gl_Position = vec4(aCorner, 0.0, 1.0);
}
`;

export const VOLUME_FRAG = `#version 300 es
precision highp float;

uniform sampler2D uAtlas;
uniform vec3 uDims;        // voxel counts of the source grid
uniform vec3 uExtent;      // physical edge lengths
uniform float uCols;       // tile grid columns
uniform float uTileW;
uniform float uTileH;
uniform vec2 uAtlasSize;   // atlas pixels
uniform vec3 uAxisMap;     // (slice axis, in-slice axis 1, in-slice axis 2)
uniform float uNSlices;
uniform float uNChannels;
uniform vec4 uSlotMask0;   // RGBA selector for channel 1
uniform vec4 uSlotMask1;   // RGBA selector for channel 2

uniform vec3 uEye;
uniform mat3 uCameraBasis; // columns: right, up, forward
uniform float uHalfWidth;  // tan(fov/2) * aspect
uniform float uHalfHeight; // tan(fov/2)

uniform float uIntensity;
uniform float uBalance;
uniform float uStep;       // physical step length
uniform vec3 uBackground;

in vec2 vNdc;
out vec4 fragColor;

float axisAt(vec3 v, float axis) {
  return axis < 0.5 ? v.x : (axis < 1.5 ? v.y : v.z);
}

// fetch one bilinear-filtered texel from slice k at in-tile voxel coords p
vec4 sliceTexel(float k, vec2 p) {
  vec2 tile = vec2(mod(k, uCols), floor(k / uCols));
  vec2 tileSize = vec2(uTileW, uTileH);
  // clamp to the voxel-center hull of the tile: no cross-tile bleeding
  vec2 q = clamp(p + 0.5, vec2(0.5), tileSize - 0.5);
  return texture(uAtlas, (tile * tileSize + q) / uAtlasSize);
}

// trilinear volume sample at continuous voxel-center coordinates
vec4 volumeSample(vec3 c) {
  float s = axisAt(c, uAxisMap.x);
  vec2 p = vec2(axisAt(c, uAxisMap.y), axisAt(c, uAxisMap.z));
  float k0 = clamp(floor(s), 0.0, uNSlices - 2.0);
  float fs = clamp(s - k0, 0.0, 1.0);
  return mix(sliceTexel(k0, p), sliceTexel(k0 + 1.0, p), fs);
}

// fixed channel palettes: warm for channel 1, cool for channel 2
vec3 emission1(float u) { return vec3(1.0, 0.55, 0.25) * u; }
vec3 emission2(float u) { return vec3(0.3, 0.55, 1.0) * u; }
float kappaOf(float u) { return 6.0 * u; }

vec2 boxIntersect(vec3 ro, vec3 rd, vec3 lo, vec3 hi) {
  vec3 inv = 1.0 / rd;
  vec3 t0 = (lo - ro) * inv;
  vec3 t1 = (hi - ro) * inv;
  vec3 tn = min(t0, t1);
  vec3 tf = max(t0, t1);
  return vec2(max(max(tn.x, tn.y), max(tn.z, 0.0)), min(min(tf.x, tf.y), tf.z));
}

void main() {
  vec3 dir = normalize(uCameraBasis * vec3(vNdc.x * uHalfWidth,
                                           vNdc.y * uHalfHeight, 1.0));
  vec2 span = boxIntersect(uEye, dir, vec3(0.0), uExtent);
  if (span.y <= span.x) {
    fragColor = vec4(uBackground, 1.0);
    return;
  }
  vec3 color = vec3(0.0);
  float trans = 1.0;
  float t = span.x;
  vec3 voxelScale = uDims / uExtent;
  for (int i = 0; i < 2048; i++) {
    if (t >= span.y || trans < 1e-3) break;
    float ds = min(uStep, span.y - t);
    vec3 pos = uEye + dir * t;
    vec3 c = pos * voxelScale - 0.5; // physical -> voxel-center coords
    vec4 texel = volumeSample(c);
    float u1 = clamp(dot(texel, uSlotMask0), 0.0, 1.0);
    float u2 = uNChannels > 1.5 ? clamp(dot(texel, uSlotMask1), 0.0, 1.0) : 0.0;
    float w1 = uBalance;
    float w2 = uNChannels > 1.5 ? 1.0 - uBalance : 0.0;
    vec3 emission = uIntensity * (w1 * emission1(u1) + w2 * emission2(u2));
    float kappa = w1 * kappaOf(u1) + w2 * kappaOf(u2);
    float kEff = max(kappa, 1e-6);
    float a = 1.0 - exp(-kEff * ds);
    color += trans * a * emission / kEff;
    trans *= 1.0 - a;
    t += uStep;
  }
  fragColor = vec4(color + trans * uBackground, 1.0);
}
`;

export const MESH_VERT = `#version 300 es
layout(location = 0) in vec3 aPosition;
layout(location = 1) in vec3 aNormal;
uniform mat4 uViewProjection;
out vec3 vNormal;
void main() {
  vNormal = aNormal;
  gl_Position = uViewProjection * vec4(aPosition, 1.0);
}
`;

export const MESH_FRAG = `#version 300 es
precision highp float;
uniform vec3 uLightDir;
in vec3 vNormal;
out vec4 fragColor;
void main() {
  float shade = 0.25 + 0.75 * abs(dot(normalize(vNormal), uLightDir));
  fragColor = vec4(vec3(0.85, 0.8, 0.7) * shade, 1.0);
}
`;
