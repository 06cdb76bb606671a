/**
 * Plane-level coding: symbols + per-element CDF rows in, TCC1 container out,
 * and a pull-based decode session whose rows may depend on already-decoded
 * symbols (autoregressive models supply them one position at a time).
 *
 * Symbols outside [s_min, s_max] are coded through the escape slot followed
 * by 32 raw bits of the bias-shifted value.
 */

import { parseBitstream, serializeBitstream, type Bitstream, type PlaneDims } from "./bitstream.js";
import { escapeSlot, slotForSymbol, type CdfTable } from "./cdf.js";
import { RangeDecoder, RangeEncoder } from "./rangecoder.js";

const RAW_BIAS = 0x80000000; // i32 -> u32 bias for escape values

export class CodingError extends Error {}

export function encodePlane(
  symbols: Int32Array,
  table: CdfTable,
  dims: PlaneDims,
): Uint8Array {
  const count = dims.channels * dims.height * dims.width;
  if (symbols.length !== count) {
    throw new CodingError(
      `symbol count ${symbols.length} does not match dims (${count})`,
    );
  }
  if (table.rows.length !== count) {
    throw new CodingError(
      `row count ${table.rows.length} does not match dims (${count})`,
    );
  }
  const escape = escapeSlot(table);
  const encoder = new RangeEncoder();
  for (let i = 0; i < count; i++) {
    const row = table.rows[i];
    const slot = slotForSymbol(table, symbols[i]);
    encoder.encodeSlot(row[slot], row[slot + 1]);
    if (slot === escape) {
      encoder.encodeRawBits((symbols[i] + RAW_BIAS) >>> 0, 32);
    }
  }
  return serializeBitstream({
    dims,
    sMin: table.sMin,
    sMax: table.sMax,
    payload: encoder.finish(),
  });
}

/**
 * Pull-based decoding: construct with a container, then call
 * nextSymbol(row) once per element in encode order.
 */
export class DecodeSession {
  readonly stream: Bitstream;
  private readonly decoder: RangeDecoder;
  private remaining: number;

  constructor(container: Uint8Array) {
    this.stream = parseBitstream(container); // fail-closed before any symbol
    this.decoder = new RangeDecoder(this.stream.payload);
    const { channels, height, width } = this.stream.dims;
    this.remaining = channels * height * width;
  }

  get symbolsRemaining(): number {
    return this.remaining;
  }

  nextSymbol(row: Uint32Array): number {
    if (this.remaining <= 0) {
      throw new CodingError("plane fully decoded");
    }
    const slot = this.decoder.decodeSlot(row);
    this.remaining--;
    const escape = this.stream.sMax - this.stream.sMin + 1;
    if (slot === escape) {
      return (this.decoder.decodeRawBits(32) - RAW_BIAS) | 0;
    }
    return this.stream.sMin + slot;
  }
}

export function decodePlane(container: Uint8Array, table: CdfTable): Int32Array {
  const session = new DecodeSession(container);
  const { channels, height, width } = session.stream.dims;
  const count = channels * height * width;
  if (table.rows.length !== count) {
    throw new CodingError(
      `row count ${table.rows.length} does not match dims (${count})`,
    );
  }
  if (table.sMin !== session.stream.sMin || table.sMax !== session.stream.sMax) {
    throw new CodingError("cdf table symbol range disagrees with container");
  }
  const out = new Int32Array(count);
  for (let i = 0; i < count; i++) {
    out[i] = session.nextSymbol(table.rows[i]);
  }
  return out;
}
