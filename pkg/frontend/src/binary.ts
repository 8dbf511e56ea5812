/**
 * Parsers for the gateway's binary streams.
 *
 * ASTC1 cloud table: magic "ASTC1", u32 N, u32 C, u8 flags
 * (1 = normals, 2 = semantic, 4 = instance), then contiguous little-endian
 * arrays: f32 positions (N*3), f32 colors (N*3), optional f32 normals,
 * i32 semantic, i32 instance.
 *
 * ASTE1 heatmap table: magic "ASTE1", u32 N, u32 C, then f32 mean
 * probabilities (N*C), f32 uncertainty (N), i32 top class (N).
 */

export interface CloudTable {
  n: number;
  classCount: number;
  positions: Float32Array;
  colors: Float32Array;
  normals: Float32Array | null;
  semantic: Int32Array | null;
  instance: Int32Array | null;
}

export interface HeatmapTable {
  n: number;
  classCount: number;
  meanProbs: Float32Array;
  uncertainty: Float32Array;
  topClass: Int32Array;
}

const CLOUD_MAGIC = "ASTC1";
const HEATMAP_MAGIC = "ASTE1";

const FLAG_NORMALS = 1;
const FLAG_SEMANTIC = 2;
const FLAG_INSTANCE = 4;

function readMagic(view: DataView): string {
  let magic = "";
  for (let i = 0; i < 5; i++) {
    magic += String.fromCharCode(view.getUint8(i));
  }
  return magic;
}

class Cursor {
  offset: number;

  constructor(private buffer: ArrayBuffer, start: number) {
    this.offset = start;
  }

  private take(count: number): ArrayBuffer {
    if (this.offset + 4 * count > this.buffer.byteLength) {
      throw new Error(`truncated stream at byte ${this.offset}`);
    }
    const chunk = this.buffer.slice(this.offset, this.offset + 4 * count);
    this.offset += 4 * count;
    return chunk;
  }

  f32(count: number): Float32Array {
    return new Float32Array(this.take(count));
  }

  i32(count: number): Int32Array {
    return new Int32Array(this.take(count));
  }
}

export function parseCloud(buffer: ArrayBuffer): CloudTable {
  const view = new DataView(buffer);
  if (readMagic(view) !== CLOUD_MAGIC) {
    throw new Error("not an ASTC1 stream");
  }
  const n = view.getUint32(5, true);
  const classCount = view.getUint32(9, true);
  const flags = view.getUint8(13);
  const cursor = new Cursor(buffer, 14);
  const positions = cursor.f32(n * 3);
  const colors = cursor.f32(n * 3);
  const normals = flags & FLAG_NORMALS ? cursor.f32(n * 3) : null;
  const semantic = flags & FLAG_SEMANTIC ? cursor.i32(n) : null;
  const instance = flags & FLAG_INSTANCE ? cursor.i32(n) : null;
  if (cursor.offset !== buffer.byteLength) {
    throw new Error(`${buffer.byteLength - cursor.offset} trailing bytes`);
  }
  return { n, classCount, positions, colors, normals, semantic, instance };
}

export function parseHeatmap(buffer: ArrayBuffer): HeatmapTable {
  const view = new DataView(buffer);
  if (readMagic(view) !== HEATMAP_MAGIC) {
    throw new Error("not an ASTE1 stream");
  }
  const n = view.getUint32(5, true);
  const classCount = view.getUint32(9, true);
  const cursor = new Cursor(buffer, 13);
  const meanProbs = cursor.f32(n * classCount);
  const uncertainty = cursor.f32(n);
  const topClass = cursor.i32(n);
  if (cursor.offset !== buffer.byteLength) {
    throw new Error(`${buffer.byteLength - cursor.offset} trailing bytes`);
  }
  return { n, classCount, meanProbs, uncertainty, topClass };
}

/** Flag bits a ground-truth-free stream must not carry (leak check helper). */
export function cloudFlags(buffer: ArrayBuffer): number {
  return new DataView(buffer).getUint8(13);
}

export const GT_FLAG_MASK = FLAG_SEMANTIC | FLAG_INSTANCE;
