import { describe, expect, it } from "vitest";
import { IvolFormatError, parseIvol, serializeIvol, toBase64 } from "../src/ivol.js";

function f32Volume(dims: [number, number, number]): Uint8Array {
  const n = dims[0] * dims[1] * dims[2];
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) data[i] = Math.sin(i) * 3.5;
  return serializeIvol({ dims, spacing: [1, 1, 1], dtype: "f32", data });
}

describe("parseIvol", () => {
  it("round-trips an f32 volume", () => {
    const dims: [number, number, number] = [2, 3, 4];
    const bytes = f32Volume(dims);
    const vol = parseIvol(bytes);
    expect(vol.dims).toEqual(dims);
    expect(vol.dtype).toBe("f32");
    expect(vol.data.length).toBe(24);
    expect(vol.data[5]).toBeCloseTo(Math.sin(5) * 3.5, 5);
  });

  it("round-trips a u8 mask", () => {
    const data = new Uint8Array([0, 1, 1, 0, 1, 0]);
    const bytes = serializeIvol({
      dims: [1, 2, 3],
      spacing: [2, 0.5, 0.5],
      dtype: "u8",
      data,
    });
    const mask = parseIvol(bytes);
    expect(mask.dtype).toBe("u8");
    expect(Array.from(mask.data)).toEqual([0, 1, 1, 0, 1, 0]);
    expect(mask.spacing).toEqual([2, 0.5, 0.5]);
  });

  it("rejects a wrong magic string", () => {
    const bad = new TextEncoder().encode('NOPE1 {"dims":[1,1,1]}\n\0\0\0\0');
    expect(() => parseIvol(bad)).toThrow(IvolFormatError);
  });

  it("rejects a truncated payload", () => {
    const bytes = f32Volume([2, 2, 2]);
    expect(() => parseIvol(bytes.subarray(0, bytes.length - 4))).toThrow(/expected/);
  });

  it("rejects an unknown dtype", () => {
    const bad = new TextEncoder().encode(
      'IVOL1 {"dims":[1,1,1],"spacing":[1,1,1],"dtype":"f64"}\n01234567',
    );
    expect(() => parseIvol(bad)).toThrow(/dtype/);
  });

  it("rejects a missing header newline", () => {
    expect(() => parseIvol(new Uint8Array([1, 2, 3]))).toThrow(/header/);
  });
});

describe("toBase64", () => {
  it("matches Buffer encoding on a large buffer", () => {
    const bytes = new Uint8Array(200_000);
    for (let i = 0; i < bytes.length; i++) bytes[i] = (i * 31) % 256;
    expect(toBase64(bytes)).toBe(Buffer.from(bytes).toString("base64"));
  });
});
