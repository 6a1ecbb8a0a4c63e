/**
 * IVOL container codec: a single "IVOL1 {json}\n" header line followed by the
 * raw little-endian row-major payload. Mirrors the wire format the service
 * produces and accepts; the client never re-derives voxel values.
 */

export type IvolDtype = "f32" | "u8";

export interface Ivol {
  dims: [number, number, number];
  spacing: [number, number, number];
  dtype: IvolDtype;
  data: Float32Array | Uint8Array;
}

export class IvolFormatError extends Error {}

const MAGIC = "IVOL1 ";

function product(dims: [number, number, number]): number {
  return dims[0] * dims[1] * dims[2];
}

export function parseIvol(bytes: Uint8Array): Ivol {
  const newline = bytes.indexOf(0x0a);
  if (newline < 0) {
    throw new IvolFormatError("missing header line");
  }
  const header = new TextDecoder().decode(bytes.subarray(0, newline));
  if (!header.startsWith(MAGIC)) {
    throw new IvolFormatError("bad magic, expected IVOL1");
  }
  let meta: { dims?: number[]; spacing?: number[]; dtype?: string };
  try {
    meta = JSON.parse(header.slice(MAGIC.length));
  } catch {
    throw new IvolFormatError("header is not valid JSON");
  }
  if (!Array.isArray(meta.dims) || meta.dims.length !== 3 || meta.dims.some((d) => !(d >= 1))) {
    throw new IvolFormatError("header dims must be three positive ints");
  }
  if (!Array.isArray(meta.spacing) || meta.spacing.length !== 3 || meta.spacing.some((s) => !(s > 0))) {
    throw new IvolFormatError("header spacing must be three positive numbers");
  }
  if (meta.dtype !== "f32" && meta.dtype !== "u8") {
    throw new IvolFormatError(`unsupported dtype ${String(meta.dtype)}`);
  }
  const dims = meta.dims as [number, number, number];
  const count = product(dims);
  const payload = bytes.subarray(newline + 1);
  const itemSize = meta.dtype === "f32" ? 4 : 1;
  if (payload.length !== count * itemSize) {
    throw new IvolFormatError(
      `payload is ${payload.length} bytes, expected ${count * itemSize}`,
    );
  }
  let data: Float32Array | Uint8Array;
  if (meta.dtype === "f32") {
    // copy to guarantee alignment before the typed-array view
    const buf = payload.slice().buffer;
    data = new Float32Array(buf);
  } else {
    data = payload.slice();
  }
  return {
    dims,
    spacing: meta.spacing as [number, number, number],
    dtype: meta.dtype,
    data,
  };
}

export function serializeIvol(vol: Ivol): Uint8Array {
  const count = product(vol.dims);
  if (vol.data.length !== count) {
    throw new IvolFormatError("data length does not match dims");
  }
  const header = `${MAGIC}${JSON.stringify({
    dims: vol.dims,
    dtype: vol.dtype,
    spacing: vol.spacing,
  })}\n`;
  const head = new TextEncoder().encode(header);
  const payload = new Uint8Array(vol.data.buffer, vol.data.byteOffset, vol.data.byteLength);
  const out = new Uint8Array(head.length + payload.length);
  out.set(head, 0);
  out.set(payload, head.length);
  return out;
}

export function toBase64(bytes: Uint8Array): string {
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}
