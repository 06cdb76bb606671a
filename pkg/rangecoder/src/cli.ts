/**
 * Process boundary for the Python side. Framed little-endian binary protocol
 * over stdin/stdout; all data crosses as flat integer arrays and byte
 * buffers.
 *
 * encode:
 *   stdin:  u16 channels, u16 height, u16 width,
 *           u32 cdfLen + cdf table blob (one row per element, encode order),
 *           i32 x count symbols
 *   stdout: u32 len + TCC1 container
 *
 * decode-session:
 *   stdin:  u32 len + TCC1 container
 *   stdout: u8 status (1 ok / 0 error); error: u32 len + utf8 message;
 *           ok: u16 channels, u16 height, u16 width, i32 sMin, i32 sMax
 *   loop:   stdin:  u32 rowCount (0 terminates), u32 cdfLen + cdf blob
 *           stdout: i32 x rowCount decoded symbols
 */

import process from "node:process";

import { parseCdfTable } from "./cdf.js";
import { DecodeSession, encodePlane } from "./plane.js";

class StdinReader {
  private chunks: Buffer[] = [];
  private length = 0;
  private ended = false;
  private wakeup: (() => void) | null = null;

  constructor() {
    process.stdin.on("data", (chunk: Buffer) => {
      this.chunks.push(chunk);
      this.length += chunk.length;
      this.wakeup?.();
    });
    process.stdin.on("end", () => {
      this.ended = true;
      this.wakeup?.();
    });
  }

  async readBytes(n: number): Promise<Buffer> {
    while (this.length < n) {
      if (this.ended) throw new Error(`unexpected EOF: wanted ${n} bytes`);
      await new Promise<void>((resolve) => {
        this.wakeup = resolve;
      });
      this.wakeup = null;
    }
    const buf = Buffer.concat(this.chunks);
    this.chunks = [buf.subarray(n)];
    this.length -= n;
    return buf.subarray(0, n);
  }

  async readU16(): Promise<number> {
    return (await this.readBytes(2)).readUInt16LE(0);
  }

  async readU32(): Promise<number> {
    return (await this.readBytes(4)).readUInt32LE(0);
  }
}

function write(buffer: Uint8Array): void {
  process.stdout.write(buffer);
}

function writeU32(value: number): void {
  const b = Buffer.alloc(4);
  b.writeUInt32LE(value >>> 0, 0);
  write(b);
}

async function runEncode(reader: StdinReader): Promise<void> {
  const channels = await reader.readU16();
  const height = await reader.readU16();
  const width = await reader.readU16();
  const cdfLen = await reader.readU32();
  const table = parseCdfTable(new Uint8Array(await reader.readBytes(cdfLen)));
  const count = channels * height * width;
  const symbolBytes = await reader.readBytes(4 * count);
  const symbols = new Int32Array(count);
  for (let i = 0; i < count; i++) symbols[i] = symbolBytes.readInt32LE(4 * i);

  const container = encodePlane(symbols, table, { channels, height, width });
  writeU32(container.length);
  write(container);
}

async function runDecodeSession(reader: StdinReader): Promise<void> {
  const containerLen = await reader.readU32();
  const container = new Uint8Array(await reader.readBytes(containerLen));

  let session: DecodeSession;
  try {
    session = new DecodeSession(container);
  } catch (err) {
    const message = Buffer.from(String((err as Error).message), "utf8");
    write(Uint8Array.from([0]));
    writeU32(message.length);
    write(message);
    process.exitCode = 2;
    return;
  }

  const head = Buffer.alloc(1 + 2 * 3 + 4 * 2);
  head.writeUInt8(1, 0);
  head.writeUInt16LE(session.stream.dims.channels, 1);
  head.writeUInt16LE(session.stream.dims.height, 3);
  head.writeUInt16LE(session.stream.dims.width, 5);
  head.writeInt32LE(session.stream.sMin, 7);
  head.writeInt32LE(session.stream.sMax, 11);
  write(head);

  for (;;) {
    const rowCount = await reader.readU32();
    if (rowCount === 0) break;
    const cdfLen = await reader.readU32();
    const table = parseCdfTable(new Uint8Array(await reader.readBytes(cdfLen)));
    if (table.rows.length !== rowCount) {
      throw new Error(`expected ${rowCount} rows, got ${table.rows.length}`);
    }
    const out = Buffer.alloc(4 * rowCount);
    for (let i = 0; i < rowCount; i++) {
      out.writeInt32LE(session.nextSymbol(table.rows[i]), 4 * i);
    }
    write(out);
  }
}

async function main(): Promise<void> {
  const mode = process.argv[2];
  const reader = new StdinReader();
  if (mode === "encode") {
    await runEncode(reader);
  } else if (mode === "decode-session") {
    await runDecodeSession(reader);
  } else {
    process.stderr.write("usage: cli.js encode|decode-session\n");
    process.exitCode = 64;
    return;
  }
}

main().catch((err) => {
  process.stderr.write(`${(err as Error).stack ?? err}\n`);
  process.exitCode = 1;
});
