/**
 * Quantized CDF table wire format (shared with the entropy model side):
 * header {s_min: i32, s_max: i32, precision: u8 = 16} followed by per-element
 * little-endian u16 cumulative rows of length |symbol_range| + 2 (symbol
 * slots, one escape slot, plus the terminator). The terminator value 2^16
 * wraps to 0 on the wire and is restored on load.
 */

import { CDF_TOTAL } from "./rangecoder.js";

export class CdfError extends Error {}

export interface CdfTable {
  sMin: number;
  sMax: number;
  precision: number;
  /** rows[i] has rowLength entries, strictly increasing 0 .. 2^16. */
  rows: Uint32Array[];
}

export function rowLength(sMin: number, sMax: number): number {
  return sMax - sMin + 3;
}

export function escapeSlot(table: Pick<CdfTable, "sMin" | "sMax">): number {
  return table.sMax - table.sMin + 1;
}

export function slotForSymbol(
  table: Pick<CdfTable, "sMin" | "sMax">,
  symbol: number,
): number {
  if (symbol >= table.sMin && symbol <= table.sMax) return symbol - table.sMin;
  return escapeSlot(table);
}

function validateRow(row: Uint32Array): void {
  if (row[0] !== 0) throw new CdfError("row must start at 0");
  if (row[row.length - 1] !== CDF_TOTAL) {
    throw new CdfError("row must end at 2^16");
  }
  for (let i = 1; i < row.length; i++) {
    if (row[i] <= row[i - 1]) {
      throw new CdfError(`row not strictly increasing at slot ${i - 1}`);
    }
  }
}

export function parseCdfTable(blob: Uint8Array): CdfTable {
  if (blob.length < 9) throw new CdfError("cdf table truncated: header");
  const view = new DataView(blob.buffer, blob.byteOffset, blob.byteLength);
  const sMin = view.getInt32(0, true);
  const sMax = view.getInt32(4, true);
  const precision = view.getUint8(8);
  if (sMax < sMin) throw new CdfError("empty symbol range");
  if (precision !== 16) throw new CdfError(`unsupported precision ${precision}`);
  const length = rowLength(sMin, sMax);
  const body = blob.length - 9;
  if (body % (2 * length) !== 0) {
    throw new CdfError(
      `cdf body of ${body} bytes is not a multiple of row size ${2 * length}`,
    );
  }
  const count = body / (2 * length);
  const rows: Uint32Array[] = [];
  for (let r = 0; r < count; r++) {
    const row = new Uint32Array(length);
    for (let i = 0; i < length; i++) {
      row[i] = view.getUint16(9 + 2 * (r * length + i), true);
    }
    if (row[length - 1] === 0) row[length - 1] = CDF_TOTAL; // terminator wrap
    validateRow(row);
    rows.push(row);
  }
  return { sMin, sMax, precision, rows };
}

export function serializeCdfTable(table: CdfTable): Uint8Array {
  const length = rowLength(table.sMin, table.sMax);
  const out = new Uint8Array(9 + 2 * length * table.rows.length);
  const view = new DataView(out.buffer);
  view.setInt32(0, table.sMin, true);
  view.setInt32(4, table.sMax, true);
  view.setUint8(8, table.precision);
  table.rows.forEach((row, r) => {
    if (row.length !== length) throw new CdfError("row length mismatch");
    validateRow(row);
    for (let i = 0; i < length; i++) {
      view.setUint16(9 + 2 * (r * length + i), row[i] % CDF_TOTAL, true);
    }
  });
  return out;
}
