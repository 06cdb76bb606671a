/**
 * TCC1 bitstream container.
 *
 * Layout (little-endian):
 *   magic   4 bytes "TCC1"
 *   version u8 (= 1)
 *   channels u16, height u16, width u16   (latent plane dims)
 *   s_min i32, s_max i32                  (symbol range echo)
 *   payload_len u32
 *   payload bytes
 *   crc32 u32 of the payload
 *
 * Parsing fails closed: wrong magic, version, truncation or checksum
 * mismatch raise before any symbol is emitted.
 */

export const MAGIC = "TCC1";
export const VERSION = 1;
const HEADER_BYTES = 4 + 1 + 2 * 3 + 4 * 2 + 4;

export class FormatError extends Error {}

export interface PlaneDims {
  channels: number;
  height: number;
  width: number;
}

export interface Bitstream {
  dims: PlaneDims;
  sMin: number;
  sMax: number;
  payload: Uint8Array;
}

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

export function crc32(data: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < data.length; i++) {
    c = CRC_TABLE[(c ^ data[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

export function serializeBitstream(stream: Bitstream): Uint8Array {
  const out = new Uint8Array(HEADER_BYTES + stream.payload.length + 4);
  const view = new DataView(out.buffer);
  for (let i = 0; i < 4; i++) out[i] = MAGIC.charCodeAt(i);
  view.setUint8(4, VERSION);
  view.setUint16(5, stream.dims.channels, true);
  view.setUint16(7, stream.dims.height, true);
  view.setUint16(9, stream.dims.width, true);
  view.setInt32(11, stream.sMin, true);
  view.setInt32(15, stream.sMax, true);
  view.setUint32(19, stream.payload.length, true);
  out.set(stream.payload, HEADER_BYTES);
  view.setUint32(HEADER_BYTES + stream.payload.length, crc32(stream.payload), true);
  return out;
}

export function parseBitstream(blob: Uint8Array): Bitstream {
  if (blob.length < HEADER_BYTES + 4) {
    throw new FormatError("bitstream truncated: header incomplete");
  }
  const view = new DataView(blob.buffer, blob.byteOffset, blob.byteLength);
  const magic = String.fromCharCode(blob[0], blob[1], blob[2], blob[3]);
  if (magic !== MAGIC) {
    throw new FormatError(`bad magic ${JSON.stringify(magic)}`);
  }
  const version = view.getUint8(4);
  if (version !== VERSION) {
    throw new FormatError(`unsupported version ${version}`);
  }
  const dims = {
    channels: view.getUint16(5, true),
    height: view.getUint16(7, true),
    width: view.getUint16(9, true),
  };
  const sMin = view.getInt32(11, true);
  const sMax = view.getInt32(15, true);
  if (sMax < sMin) throw new FormatError("empty symbol range");
  const payloadLen = view.getUint32(19, true);
  if (blob.length !== HEADER_BYTES + payloadLen + 4) {
    throw new FormatError(
      `bitstream truncated: expected ${HEADER_BYTES + payloadLen + 4} bytes, got ${blob.length}`,
    );
  }
  const payload = blob.subarray(HEADER_BYTES, HEADER_BYTES + payloadLen);
  const stored = view.getUint32(HEADER_BYTES + payloadLen, true);
  if (stored !== crc32(payload)) {
    throw new FormatError("payload checksum mismatch");
  }
  return { dims, sMin, sMax, payload };
}
