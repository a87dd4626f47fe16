/** Minimal PNG decoder for the truecolor images the service produces.
 *
 * Handles 8/16-bit RGB and RGBA, non-interlaced, all five scanline
 * filters. 16-bit samples are big-endian per the PNG standard. Inflation
 * uses DecompressionStream in the browser and falls back to node:zlib
 * when running under the test runner.
 */

export interface DecodedPng {
  width: number;
  height: number;
  channels: 3 | 4;
  depth: 8 | 16;
  data: Uint8Array | Uint16Array; // row-major, channel-interleaved
}

const SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

async function inflate(data: Uint8Array): Promise<Uint8Array> {
  if (typeof DecompressionStream !== 'undefined') {
    const stream = new Blob([data as BlobPart]).stream()
      .pipeThrough(new DecompressionStream('deflate'));
    return new Uint8Array(await new Response(stream).arrayBuffer());
  }
  const zlib = await import('node:zlib');
  return new Uint8Array(zlib.inflateSync(data));
}

function u32(bytes: Uint8Array, at: number): number {
  return ((bytes[at] << 24) | (bytes[at + 1] << 16) | (bytes[at + 2] << 8)
    | bytes[at + 3]) >>> 0;
}

function unfilter(raw: Uint8Array, height: number, stride: number, bpp: number): Uint8Array {
  const out = new Uint8Array(height * stride);
  for (let y = 0; y < height; y++) {
    const ftype = raw[y * (stride + 1)];
    const src = y * (stride + 1) + 1;
    const dst = y * stride;
    const prev = dst - stride;
    for (let x = 0; x < stride; x++) {
      const cur = raw[src + x];
      const a = x >= bpp ? out[dst + x - bpp] : 0;
      const b = y > 0 ? out[prev + x] : 0;
      const c = y > 0 && x >= bpp ? out[prev + x - bpp] : 0;
      let value: number;
      switch (ftype) {
        case 0: value = cur; break;
        case 1: value = cur + a; break;
        case 2: value = cur + b; break;
        case 3: value = cur + ((a + b) >> 1); break;
        case 4: {
          const p = a + b - c;
          const pa = Math.abs(p - a), pb = Math.abs(p - b), pc = Math.abs(p - c);
          value = cur + (pa <= pb && pa <= pc ? a : pb <= pc ? b : c);
          break;
        }
        default: throw new Error(`unsupported PNG filter type ${ftype}`);
      }
      out[dst + x] = value & 0xff;
    }
  }
  return out;
}

export async function decodePng(bytes: Uint8Array): Promise<DecodedPng> {
  for (let i = 0; i < 8; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error('not a PNG file');
  }
  let width = 0, height = 0, depth = 0, colorType = 0;
  const idatParts: Uint8Array[] = [];
  let at = 8;
  while (at + 8 <= bytes.length) {
    const length = u32(bytes, at);
    const tag = String.fromCharCode(...bytes.subarray(at + 4, at + 8));
    const payload = bytes.subarray(at + 8, at + 8 + length);
    if (tag === 'IHDR') {
      width = u32(payload, 0);
      height = u32(payload, 4);
      depth = payload[8];
      colorType = payload[9];
      if (payload[12] !== 0) throw new Error('interlaced PNG not supported');
    } else if (tag === 'IDAT') {
      idatParts.push(payload);
    } else if (tag === 'IEND') {
      break;
    }
    at += 12 + length;
  }
  if ((depth !== 8 && depth !== 16) || (colorType !== 2 && colorType !== 6)) {
    throw new Error(`unsupported PNG depth/color type ${depth}/${colorType}`);
  }
  const channels = colorType === 2 ? 3 : 4;
  const bpp = channels * depth / 8;
  const stride = width * bpp;

  const idat = new Uint8Array(idatParts.reduce((n, p) => n + p.length, 0));
  let offset = 0;
  for (const part of idatParts) {
    idat.set(part, offset);
    offset += part.length;
  }
  const raw = await inflate(idat);
  if (raw.length !== height * (stride + 1)) {
    throw new Error(`PNG data length ${raw.length} != expected ${height * (stride + 1)}`);
  }
  const flat = unfilter(raw, height, stride, bpp);
  if (depth === 8) {
    return { width, height, channels, depth, data: flat };
  }
  const wide = new Uint16Array(width * height * channels);
  for (let i = 0; i < wide.length; i++) {
    wide[i] = (flat[2 * i] << 8) | flat[2 * i + 1];
  }
  return { width, height, channels, depth, data: wide };
}
