import { describe, expect, it } from "vitest";

import { CDF_TOTAL } from "../src/rangecoder.js";
import { type CdfTable } from "../src/cdf.js";
import { DecodeSession, decodePlane, encodePlane } from "../src/plane.js";

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function gaussianRow(rand: () => number, slots: number): Uint32Array {
  const center = Math.floor(rand() * slots);
  const sigma = 0.5 + rand() * 3;
  const weights = new Array(slots)
    .fill(0)
    .map((_, i) => Math.exp(-((i - center) ** 2) / (2 * sigma * sigma)) + 1e-4);
  const total = weights.reduce((a, b) => a + b, 0);
  const row = new Uint32Array(slots + 1);
  let acc = 0;
  for (let i = 0; i < slots; i++) {
    const remaining = slots - i - 1;
    const f = Math.max(
      1,
      Math.min(
        Math.round((weights[i] / total) * CDF_TOTAL),
        CDF_TOTAL - acc - remaining,
      ),
    );
    acc += f;
    row[i + 1] = acc;
  }
  row[slots] = CDF_TOTAL;
  return row;
}

function randomTable(rand: () => number, sMin: number, sMax: number,
                     count: number): CdfTable {
  const slots = sMax - sMin + 2; // symbols + escape
  return {
    sMin,
    sMax,
    precision: 16,
    rows: new Array(count).fill(0).map(() => gaussianRow(rand, slots)),
  };
}

describe("plane coding", () => {
  it("round-trips randomized planes exactly, including escapes", () => {
    const rand = mulberry32(2024);
    for (let trial = 0; trial < 10; trial++) {
      const dims = { channels: 8, height: 4, width: 4 };
      const count = dims.channels * dims.height * dims.width;
      const table = randomTable(rand, -10, 10, count);
      const symbols = new Int32Array(count);
      for (let i = 0; i < count; i++) {
        symbols[i] =
          rand() < 0.05
            ? Math.floor(rand() * 100_000) - 50_000 // escape path
            : Math.floor(rand() * 21) - 10;
      }
      const container = encodePlane(symbols, table, dims);
      expect(Array.from(decodePlane(container, table))).toEqual(
        Array.from(symbols),
      );
    }
  });

  it("empty planes carry no payload", () => {
    const dims = { channels: 0, height: 4, width: 4 };
    const container = encodePlane(new Int32Array(0), randomTable(mulberry32(1), -2, 2, 0), dims);
    const session = new DecodeSession(container);
    expect(session.stream.payload.length).toBe(0);
    expect(session.symbolsRemaining).toBe(0);
    expect(() => session.nextSymbol(new Uint32Array([0, CDF_TOTAL]))).toThrow();
  });

  it("mismatched provider rows yield garbage or an error, never silence", () => {
    const rand = mulberry32(5);
    const dims = { channels: 2, height: 4, width: 4 };
    const count = dims.channels * dims.height * dims.width;
    const table = randomTable(rand, -5, 5, count);
    const symbols = new Int32Array(count).map(() => Math.floor(rand() * 11) - 5);
    const container = encodePlane(symbols, table, dims);

    // Perturb the rows the decoder sees from position 3 onward.
    const perturbed: CdfTable = {
      ...table,
      rows: table.rows.map((row, i) =>
        i >= 3 ? gaussianRow(mulberry32(900 + i), row.length - 1) : row,
      ),
    };
    let mismatch = false;
    try {
      const decoded = decodePlane(container, perturbed);
      mismatch = Array.from(decoded.subarray(3)).some(
        (v, i) => v !== symbols[3 + i],
      );
    } catch {
      mismatch = true; // error path is equally acceptable and fail-closed
    }
    expect(mismatch).toBe(true);
  });

  it("rejects dimension mismatches before coding", () => {
    const rand = mulberry32(9);
    const table = randomTable(rand, -2, 2, 4);
    expect(() =>
      encodePlane(new Int32Array(5), table, { channels: 1, height: 2, width: 2 }),
    ).toThrow(/symbol count/);
    const container = encodePlane(new Int32Array(4), table, {
      channels: 1,
      height: 2,
      width: 2,
    });
    expect(() => decodePlane(container, randomTable(rand, -2, 2, 3))).toThrow(
      /row count/,
    );
  });
});
