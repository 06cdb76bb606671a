/**
 * Carry-less range coder: 64-bit state, 16-bit probability precision.
 *
 * Symbols are coded against cumulative-frequency rows summing to 2^16.
 * The coder keeps the invariant low + range <= 2^64 and renormalizes
 * byte-wise whenever the top byte of the interval is settled; when precision
 * runs out before the byte settles, the interval is truncated to the next
 *2^40 boundary (the classic carry-free trick: emitted bytes are final, no
 * carry propagation ever happens). The flush emits the fewest bytes that pin
 * a value inside the final interval, with the decoder zero-padding past the
 * end of the payload.
 */

const MASK64 = (1n << 64n) - 1n;
const TOP = 1n << 56n; // byte-settled threshold
const BOT = 1n << 40n; // precision-exhausted threshold
const PRECISION_BITS = 16n;
export const CDF_TOTAL = 1 << 16;

/** Worst-case coder overhead bound in bits: flush constant plus 1%. */
export function overheadBoundBits(idealBits: number): number {
  return 64 + Math.ceil(0.01 * idealBits);
}

export class RangeEncoder {
  private low = 0n;
  private range = MASK64;
  private out: number[] = [];
  private finished = false;
  private anythingCoded = false;

  /** Code one slot given cumulative bounds, 0 <= cumLo < cumHi <= 2^16. */
  encodeSlot(cumLo: number, cumHi: number): void {
    if (this.finished) throw new Error("encoder already finished");
    if (!(cumLo >= 0 && cumLo < cumHi && cumHi <= CDF_TOTAL)) {
      throw new Error(`invalid cumulative bounds [${cumLo}, ${cumHi})`);
    }
    // The slack range - r * 2^16 stays a dead zone (never assigned to a
    // slot) so every symbol costs at least -log2(freq / 2^16) bits and the
    // information-theoretic floor on the payload holds exactly.
    this.anythingCoded = true;
    const r = this.range >> PRECISION_BITS;
    this.low += r * BigInt(cumLo);
    this.range = r * BigInt(cumHi - cumLo);
    this.normalize();
  }

  /** Code `bits` raw bits of `value`, most significant first. */
  encodeRawBits(value: number, bits: number): void {
    if (this.finished) throw new Error("encoder already finished");
    this.anythingCoded = true;
    for (let i = bits - 1; i >= 0; i--) {
      const half = this.range >> 1n;
      if ((value >>> i) & 1) {
        this.low += half;
        this.range -= half;
      } else {
        this.range = half;
      }
      this.normalize();
    }
  }

  private normalize(): void {
    for (;;) {
      if ((this.low ^ (this.low + this.range)) >= TOP) {
        if (this.range >= BOT) break;
        // Truncate to the next BOT boundary so emitted bytes stay final.
        this.range = -this.low & (BOT - 1n);
        if (this.range === 0n) this.range = BOT;
      }
      this.out.push(Number((this.low >> 56n) & 0xffn));
      this.low = (this.low << 8n) & MASK64;
      this.range <<= 8n;
    }
  }

  /** Emit the fewest bytes that pin a value inside [low, low + range).

   * The byte count is chosen from the final range alone (not from lucky
   * alignments of low), which keeps the payload at or above the
   * information-theoretic floor sum(-log2 p) for every stream. An encoder
   * that coded nothing emits nothing.
   */
  finish(): Uint8Array {
    if (!this.finished) {
      this.finished = true;
      if (this.anythingCoded) {
        let k = 1;
        while (k < 8 && 1n << BigInt(64 - 8 * k) >= this.range) k++;
        const granularity = 1n << BigInt(64 - 8 * k);
        const value =
          ((this.low + granularity - 1n) / granularity) * granularity;
        for (let i = 0; i < k; i++) {
          this.out.push(Number((value >> BigInt(56 - 8 * i)) & 0xffn));
        }
      }
    }
    return Uint8Array.from(this.out);
  }
}

/** Cumulative row access used by the decoder to locate a slot. */
export function findSlot(row: Uint32Array, cum: number): number {
  // row is strictly increasing with row[0] = 0, row[len-1] = 2^16.
  let lo = 0;
  let hi = row.length - 2;
  while (lo < hi) {
    const mid = (lo + hi + 1) >> 1;
    if (row[mid] <= cum) lo = mid;
    else hi = mid - 1;
  }
  return lo;
}

export class RangeDecoder {
  private low = 0n;
  private range = MASK64;
  private code = 0n;
  private pos = 0;

  constructor(private readonly payload: Uint8Array) {
    for (let i = 0; i < 8; i++) {
      this.code = (this.code << 8n) | BigInt(this.nextByte());
    }
  }

  private nextByte(): number {
    // Zero padding past the payload mirrors the encoder's minimal flush.
    return this.pos < this.payload.length ? this.payload[this.pos++] : 0;
  }

  /** Decode one slot against a cumulative row; returns the slot index. */
  decodeSlot(row: Uint32Array): number {
    const r = this.range >> PRECISION_BITS;
    let cum = Number(((this.code - this.low) & MASK64) / r);
    if (cum >= CDF_TOTAL) cum = CDF_TOTAL - 1;
    const slot = findSlot(row, cum);
    const cumLo = row[slot];
    const cumHi = row[slot + 1];
    this.low += r * BigInt(cumLo);
    this.range = r * BigInt(cumHi - cumLo);
    this.normalize();
    return slot;
  }

  decodeRawBits(bits: number): number {
    let value = 0;
    for (let i = 0; i < bits; i++) {
      const half = this.range >> 1n;
      const diff = (this.code - this.low) & MASK64;
      if (diff >= half) {
        this.low += half;
        this.range -= half;
        value = (value << 1) | 1;
      } else {
        this.range = half;
        value <<= 1;
      }
      this.normalize();
    }
    return value >>> 0;
  }

  private normalize(): void {
    for (;;) {
      if ((this.low ^ (this.low + this.range)) >= TOP) {
        if (this.range >= BOT) break;
        this.range = -this.low & (BOT - 1n);
        if (this.range === 0n) this.range = BOT;
      }
      this.code = ((this.code << 8n) & MASK64) | BigInt(this.nextByte());
      this.low = (this.low << 8n) & MASK64;
      this.range <<= 8n;
    }
  }
}
