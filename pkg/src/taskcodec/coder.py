"""Boundary to the range-coder process (separate package, Node CLI).

Data crosses as flat little-endian buffers: symbols as i32 arrays, CDF tables
in their wire format, bitstreams as opaque byte blobs. Encoding is one shot;
decoding is a pull session because the entropy model regenerates CDF rows
from the already-decoded prefix.

Everything here degrades cleanly when the coder is not built: available()
gates the calls, and the rest of the package sticks to entropy estimates.
"""

from __future__ import annotations

import os
import shutil
import struct
import subprocess
from pathlib import Path

import numpy as np

from .entropy import QuantizedCdfTable

RANGECODER_ENV = "TASKCODEC_RANGECODER_JS"

# Flush constant plus 1%: the documented worst-case coder overhead.
FLUSH_BITS = 64


class CoderUnavailable(RuntimeError):
    pass


class FormatError(ValueError):
    """Bitstream rejected (magic/version/checksum/truncation)."""


def overhead_bound_bits(ideal_bits: float) -> int:
    return FLUSH_BITS + int(np.ceil(0.01 * ideal_bits))


def default_cli_path() -> Path:
    override = os.environ.get(RANGECODER_ENV)
    if override:
        return Path(override)
    return Path(__file__).resolve().parents[2] / "rangecoder" / "dist" / "cli.js"


def available() -> bool:
    return shutil.which("node") is not None and default_cli_path().exists()


def _require_cli() -> list[str]:
    cli = default_cli_path()
    if shutil.which("node") is None:
        raise CoderUnavailable("node is not on PATH")
    if not cli.exists():
        raise CoderUnavailable(
            f"range coder not built at {cli}; run `npm run build` in rangecoder/ "
            f"or point {RANGECODER_ENV} at cli.js"
        )
    return ["node", str(cli)]


def encode_plane(symbols: np.ndarray, table: QuantizedCdfTable,
                 dims: tuple[int, int, int]) -> bytes:
    """Encode flat symbols (encode order: raster position major, channel
    minor) against per-element CDF rows; returns the TCC1 container."""
    channels, height, width = dims
    count = channels * height * width
    symbols = np.ascontiguousarray(symbols, dtype="<i4").reshape(-1)
    if symbols.size != count or table.rows.shape[0] != count:
        raise ValueError("symbols/rows do not match plane dims")

    cdf_blob = table.to_bytes()
    request = b"".join([
        struct.pack("<HHH", channels, height, width),
        struct.pack("<I", len(cdf_blob)), cdf_blob,
        symbols.tobytes(),
    ])
    proc = subprocess.run(_require_cli() + ["encode"], input=request,
                          stdout=subprocess.PIPE, stderr=subprocess.PIPE)
    if proc.returncode != 0:
        raise RuntimeError(f"range coder encode failed: {proc.stderr.decode()}")
    (length,) = struct.unpack_from("<I", proc.stdout, 0)
    container = proc.stdout[4:4 + length]
    if len(container) != length:
        raise RuntimeError("range coder returned a short container")
    return container


class DecodeSession:
    """Pull-based decoding through the coder process.

    The container is validated (magic, version, checksum) before the first
    symbol; next_symbols(table) decodes one batch per call in encode order.
    """

    def __init__(self, container: bytes):
        self._proc = subprocess.Popen(
            _require_cli() + ["decode-session"], stdin=subprocess.PIPE,
            stdout=subprocess.PIPE, stderr=subprocess.PIPE,
        )
        assert self._proc.stdin and self._proc.stdout
        self._proc.stdin.write(struct.pack("<I", len(container)) + container)
        self._proc.stdin.flush()
        status = self._read(1)[0]
        if status != 1:
            (msg_len,) = struct.unpack("<I", self._read(4))
            message = self._read(msg_len).decode()
            self.close()
            raise FormatError(message)
        channels, height, width, s_min, s_max = struct.unpack("<HHHii", self._read(14))
        self.dims = (channels, height, width)
        self.symbol_range = (s_min, s_max)

    def _read(self, n: int) -> bytes:
        data = self._proc.stdout.read(n)
        if data is None or len(data) != n:
            stderr = self._proc.stderr.read() if self._proc.stderr else b""
            self.close()
            raise RuntimeError(f"decode session ended early: {stderr.decode()}")
        return data

    def next_symbols(self, table: QuantizedCdfTable) -> np.ndarray:
        """Decode len(table.rows) symbols with the given per-element rows."""
        count = table.rows.shape[0]
        blob = table.to_bytes()
        self._proc.stdin.write(struct.pack("<I", count))
        self._proc.stdin.write(struct.pack("<I", len(blob)) + blob)
        self._proc.stdin.flush()
        return np.frombuffer(self._read(4 * count), dtype="<i4").copy()

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                if self._proc.stdin:
                    self._proc.stdin.write(struct.pack("<I", 0))
                    self._proc.stdin.flush()
                    self._proc.stdin.close()
                self._proc.wait(timeout=10)
            except Exception:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- container inspection (header only; full validation happens coder-side) --

_HEADER = struct.Struct("<4sBHHHiiI")


def peek_header(container: bytes) -> dict:
    if len(container) < _HEADER.size + 4:
        raise FormatError("bitstream truncated: header incomplete")
    magic, version, channels, height, width, s_min, s_max, payload_len = \
        _HEADER.unpack_from(container, 0)
    if magic != b"TCC1":
        raise FormatError(f"bad magic {magic!r}")
    if version != 1:
        raise FormatError(f"unsupported version {version}")
    if len(container) != _HEADER.size + payload_len + 4:
        raise FormatError("bitstream truncated: payload incomplete")
    return {"channels": channels, "height": height, "width": width,
            "s_min": s_min, "s_max": s_max, "payload_bits": payload_len * 8}
