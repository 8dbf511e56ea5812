import { describe, expect, it } from "vitest";

import { cloudFlags, GT_FLAG_MASK, parseCloud, parseHeatmap } from "../src/binary";

function buildCloud(n: number, flags: number): ArrayBuffer {
  const withNormals = (flags & 1) !== 0;
  const withSemantic = (flags & 2) !== 0;
  const withInstance = (flags & 4) !== 0;
  let size = 14 + n * 24;
  if (withNormals) size += n * 12;
  if (withSemantic) size += n * 4;
  if (withInstance) size += n * 4;
  const buffer = new ArrayBuffer(size);
  const view = new DataView(buffer);
  "ASTC1".split("").forEach((ch, i) => view.setUint8(i, ch.charCodeAt(0)));
  view.setUint32(5, n, true);
  view.setUint32(9, 6, true);
  view.setUint8(13, flags);
  let offset = 14;
  const writeF32 = (count: number, base: number) => {
    for (let i = 0; i < count; i++) {
      view.setFloat32(offset, base + i, true);
      offset += 4;
    }
  };
  const writeI32 = (count: number, base: number) => {
    for (let i = 0; i < count; i++) {
      view.setInt32(offset, base + i, true);
      offset += 4;
    }
  };
  writeF32(n * 3, 0);      // positions
  writeF32(n * 3, 100);    // colors
  if (withNormals) writeF32(n * 3, 200);
  if (withSemantic) writeI32(n, 1);
  if (withInstance) writeI32(n, 10);
  return buffer;
}

function buildHeatmap(n: number, c: number): ArrayBuffer {
  const buffer = new ArrayBuffer(13 + n * c * 4 + n * 8);
  const view = new DataView(buffer);
  "ASTE1".split("").forEach((ch, i) => view.setUint8(i, ch.charCodeAt(0)));
  view.setUint32(5, n, true);
  view.setUint32(9, c, true);
  let offset = 13;
  for (let i = 0; i < n * c; i++) {
    view.setFloat32(offset, 1 / c, true);
    offset += 4;
  }
  for (let i = 0; i < n; i++) {
    view.setFloat32(offset, i * 0.01, true);
    offset += 4;
  }
  for (let i = 0; i < n; i++) {
    view.setInt32(offset, i % c, true);
    offset += 4;
  }
  return buffer;
}

describe("parseCloud", () => {
  it("reads positions and colors in point order", () => {
    const cloud = parseCloud(buildCloud(3, 0));
    expect(cloud.n).toBe(3);
    expect(cloud.classCount).toBe(6);
    expect(Array.from(cloud.positions.slice(0, 3))).toEqual([0, 1, 2]);
    expect(cloud.colors[0]).toBe(100);
    expect(cloud.normals).toBeNull();
    expect(cloud.semantic).toBeNull();
  });

  it("reads optional blocks when flagged", () => {
    const cloud = parseCloud(buildCloud(2, 1 | 2 | 4));
    expect(cloud.normals?.length).toBe(6);
    expect(Array.from(cloud.semantic!)).toEqual([1, 2]);
    expect(Array.from(cloud.instance!)).toEqual([10, 11]);
  });

  it("rejects wrong magic", () => {
    const buffer = buildCloud(1, 0);
    new DataView(buffer).setUint8(0, "X".charCodeAt(0));
    expect(() => parseCloud(buffer)).toThrow(/ASTC1/);
  });

  it("rejects truncated payloads", () => {
    const buffer = buildCloud(3, 0);
    expect(() => parseCloud(buffer.slice(0, buffer.byteLength - 5))).toThrow(/truncated/);
  });

  it("rejects trailing bytes", () => {
    const buffer = buildCloud(2, 0);
    const padded = new Uint8Array(buffer.byteLength + 3);
    padded.set(new Uint8Array(buffer));
    expect(() => parseCloud(padded.buffer)).toThrow(/trailing/);
  });

  it("exposes the ground-truth flag bits for the leak check", () => {
    expect(cloudFlags(buildCloud(1, 0)) & GT_FLAG_MASK).toBe(0);
    expect(cloudFlags(buildCloud(1, 2)) & GT_FLAG_MASK).not.toBe(0);
  });
});

describe("parseHeatmap", () => {
  it("round-trips all three arrays", () => {
    const heatmap = parseHeatmap(buildHeatmap(4, 6));
    expect(heatmap.n).toBe(4);
    expect(heatmap.meanProbs.length).toBe(24);
    expect(heatmap.uncertainty[2]).toBeCloseTo(0.02, 6);
    expect(Array.from(heatmap.topClass)).toEqual([0, 1, 2, 3]);
  });

  it("rejects wrong magic", () => {
    expect(() => parseHeatmap(buildCloud(1, 0))).toThrow(/ASTE1/);
  });
});
