/**
 * Wire tensor codec for sgv-oracle/1.
 *
 * Tensors travel as base64 of raw little-endian bytes with an explicit
 * shape and dtype ("f32" or "u8"), so float values round-trip losslessly.
 */

export type WireDtype = 'f32' | 'u8';

export interface WireTensor {
  dtype: WireDtype;
  shape: number[];
  data: string;
}

export class ProtocolError extends Error {
  readonly code: string;
  constructor(message: string, code = 'OracleProtocolError') {
    super(message);
    this.code = code;
  }
}

const ITEM_SIZE: Record<WireDtype, number> = { f32: 4, u8: 1 };

// Strict base64: canonical alphabet, correct padding, length % 4 === 0.
const BASE64_RE =
  /^(?:[A-Za-z0-9+/]{4})*(?:[A-Za-z0-9+/]{2}==|[A-Za-z0-9+/]{3}=)?$/;

export function encodeF32(values: Float32Array, shape: number[]): WireTensor {
  const buf = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i += 1) {
    buf.writeFloatLE(values[i], i * 4);
  }
  return { dtype: 'f32', shape: [...shape], data: buf.toString('base64') };
}

export function encodeU8(values: Uint8Array, shape: number[]): WireTensor {
  return {
    dtype: 'u8',
    shape: [...shape],
    data: Buffer.from(values).toString('base64'),
  };
}

export interface DecodedTensor {
  dtype: WireDtype;
  shape: number[];
  /** Flat row-major values; integral for u8, f32-exact for f32. */
  values: Float64Array;
}

export function decodeTensor(obj: unknown): DecodedTensor {
  if (typeof obj !== 'object' || obj === null || Array.isArray(obj)) {
    throw new ProtocolError('tensor must be an object');
  }
  const { dtype, shape, data } = obj as Partial<WireTensor>;
  if (dtype !== 'f32' && dtype !== 'u8') {
    throw new ProtocolError(`unknown wire dtype ${JSON.stringify(dtype)}`);
  }
  if (
    !Array.isArray(shape) ||
    shape.length === 0 ||
    !shape.every((s) => Number.isInteger(s) && s > 0)
  ) {
    throw new ProtocolError(`bad tensor shape ${JSON.stringify(shape)}`);
  }
  if (typeof data !== 'string' || !BASE64_RE.test(data)) {
    throw new ProtocolError('tensor data must be a base64 string');
  }
  const raw = Buffer.from(data, 'base64');
  const count = shape.reduce((a, b) => a * b, 1);
  if (raw.length !== count * ITEM_SIZE[dtype]) {
    throw new ProtocolError(
      `tensor data length ${raw.length} does not match shape ` +
        `${JSON.stringify(shape)} (${dtype})`,
    );
  }
  const values = new Float64Array(count);
  if (dtype === 'f32') {
    for (let i = 0; i < count; i += 1) {
      values[i] = raw.readFloatLE(i * 4);
    }
  } else {
    for (let i = 0; i < count; i += 1) {
      values[i] = raw[i];
    }
  }
  return { dtype, shape: [...shape], values };
}
