export {
  CDF_TOTAL,
  RangeDecoder,
  RangeEncoder,
  findSlot,
  overheadBoundBits,
} from "./rangecoder.js";
export {
  FormatError,
  MAGIC,
  VERSION,
  crc32,
  parseBitstream,
  serializeBitstream,
  type Bitstream,
  type PlaneDims,
} from "./bitstream.js";
export {
  CdfError,
  escapeSlot,
  parseCdfTable,
  rowLength,
  serializeCdfTable,
  slotForSymbol,
  type CdfTable,
} from "./cdf.js";
export { CodingError, DecodeSession, decodePlane, encodePlane } from "./plane.js";
