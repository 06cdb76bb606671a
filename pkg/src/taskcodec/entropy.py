"""Autoregressive conditional Gaussian entropy model.

A masked-convolution context network processes all channels of the previously
seen spatial positions (raster order); an optional side-information branch
(small ResNet over the base-layer latent) is concatenated with the context
and fused by two 1x1 convolutions into per-element means and scales of a
discretized Gaussian. The base layer runs the same architecture with the side
branch disabled.

Rates are differentiable estimates: bits = sum(-log2 P(y_hat)) with
P(v) = Phi((v - mu + 0.5) / sigma) - Phi((v - mu - 0.5) / sigma). The same
distribution, recentred on the symbol alphabet, is exported as 16-bit
quantized CDF rows for the range coder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy import special as sp_special

from .quantizer import ContractViolation, round_half_away
from .transforms import ResidualBottleneckBlock, ShapeError

SIGMA_MIN = 0.11
PROB_FLOOR = 2.0**-24
CDF_PRECISION = 16
CDF_TOTAL = 1 << CDF_PRECISION


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianFieldParams:
    """Per-element mean and scale fields aligned with a latent plane."""

    mu: torch.Tensor
    sigma: torch.Tensor

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape:
            raise ValueError("mu and sigma must share a shape")
        if float(self.sigma.detach().min()) < SIGMA_MIN - 1e-6:
            raise ValueError(f"sigma must be >= {SIGMA_MIN}")


@dataclass(frozen=True)
class EntropyModelSpec:
    context_channels: int = 48
    fusion_channels: int = 64
    side_channels: int = 32
    side_blocks: int = 2
    kernel_size: int = 5

    def __post_init__(self):
        if self.kernel_size % 2 == 0:
            raise ConfigurationError("kernel_size must be odd")


class MaskedConv2d(nn.Conv2d):
    """Convolution masked to raster-order spatial context, all channels
    jointly per position. Type 'A' excludes the current position (first
    layer); type 'B' includes it (later layers, where the center feature
    already depends only on strictly earlier inputs)."""

    def __init__(self, mask_type: str, in_channels: int, out_channels: int,
                 kernel_size: int):
        if mask_type not in ("A", "B"):
            raise ValueError("mask_type must be 'A' or 'B'")
        super().__init__(in_channels, out_channels, kernel_size,
                         padding=kernel_size // 2)
        mask = torch.zeros(1, 1, kernel_size, kernel_size)
        center = kernel_size // 2
        mask[:, :, :center, :] = 1.0
        mask[:, :, center, :center] = 1.0
        if mask_type == "B":
            mask[:, :, center, center] = 1.0
        self.register_buffer("mask", mask)

    def forward(self, x):
        # Multiplying in the forward keeps masked taps exactly zero, which is
        # what makes sequential decoding bit-exact against one-shot evaluation.
        return F.conv2d(x, self.weight * self.mask, self.bias,
                        padding=self.padding, stride=self.stride)


class AutoregressiveEntropyModel(nn.Module):
    """Entropy model over an integer-valued latent plane.

    `side_input_channels=None` builds the unconditional base-layer model;
    otherwise the model conditions on a same-resolution side latent.
    """

    def __init__(self, latent_channels: int, spec: EntropyModelSpec = EntropyModelSpec(),
                 side_input_channels: int | None = None):
        super().__init__()
        self.latent_channels = latent_channels
        self.spec = spec
        self.conditional = side_input_channels is not None

        self.ctx_in = MaskedConv2d("A", latent_channels, spec.context_channels,
                                   spec.kernel_size)
        self.ctx_hidden = MaskedConv2d("B", spec.context_channels,
                                       spec.context_channels, spec.kernel_size)

        fusion_in = spec.context_channels
        if self.conditional:
            self.side_stem = nn.Conv2d(side_input_channels, spec.side_channels,
                                       kernel_size=3, padding=1)
            self.side_resnet = nn.ModuleList(
                ResidualBottleneckBlock(spec.side_channels)
                for _ in range(spec.side_blocks)
            )
            fusion_in += spec.side_channels

        self.fuse_in = nn.Conv2d(fusion_in, spec.fusion_channels, kernel_size=1)
        self.fuse_out = nn.Conv2d(spec.fusion_channels, 2 * latent_channels,
                                  kernel_size=1)
        # Start wide: a large initial scale keeps early rate gradients flat,
        # so the latent is shaped by the task before the model prunes it.
        with torch.no_grad():
            self.fuse_out.bias[latent_channels:].fill_(2.5)

    # -- feature extractors -------------------------------------------------

    def context_features(self, y_hat: torch.Tensor) -> torch.Tensor:
        """Strictly causal features: position p sees only raster-earlier
        positions of y_hat; (0, 0) sees nothing."""
        return self.ctx_hidden(F.elu(self.ctx_in(y_hat)))

    def side_features(self, y_base: torch.Tensor) -> torch.Tensor:
        """Non-causal features over the (fully decoded) base latent."""
        if not self.conditional:
            raise ConfigurationError("model was built without a side branch")
        h = F.elu(self.side_stem(y_base))
        for block in self.side_resnet:
            h = block(h)
        return h

    def predict_params(self, context: torch.Tensor,
                       side: torch.Tensor | None = None) -> GaussianFieldParams:
        if self.conditional and side is None:
            raise ConfigurationError("conditional model requires side features")
        if not self.conditional and side is not None:
            raise ConfigurationError("unconditional model got side features")
        h = context if side is None else torch.cat([context, side], dim=-3)
        raw = self.fuse_out(F.elu(self.fuse_in(h)))
        mu, raw_sigma = torch.chunk(raw, 2, dim=-3)
        sigma = SIGMA_MIN + F.softplus(raw_sigma)
        return GaussianFieldParams(mu=mu, sigma=sigma)

    def forward(self, y_hat: torch.Tensor,
                side_input: torch.Tensor | None = None) -> GaussianFieldParams:
        """One-shot (mu, sigma) over the whole plane."""
        side = None
        if self.conditional:
            if side_input is None:
                raise ConfigurationError("conditional model requires side_input")
            if side_input.shape[-2:] != y_hat.shape[-2:]:
                raise ShapeError(
                    f"side latent spatial dims {tuple(side_input.shape[-2:])} != "
                    f"target dims {tuple(y_hat.shape[-2:])}"
                )
            side = self.side_features(side_input)
        elif side_input is not None:
            raise ConfigurationError("unconditional model got side_input")
        return self.predict_params(self.context_features(y_hat), side)

    # -- sequential decoding ------------------------------------------------

    def sequential_params(self, y_hat: torch.Tensor,
                          side_input: torch.Tensor | None = None) -> GaussianFieldParams:
        """Parameters generated position-by-position from the decoded prefix
        only. Equals forward() bit-exactly: suffix positions enter the masked
        convolutions through exactly-zero weights."""
        with torch.no_grad():
            decoder = self.start_sequential(y_hat.shape, side_input,
                                            device=y_hat.device, dtype=y_hat.dtype)
            mu = torch.zeros_like(y_hat)
            sigma = torch.full_like(y_hat, SIGMA_MIN)
            for i, j in decoder.positions():
                p = decoder.next_params()
                mu[..., :, i, j] = p.mu
                sigma[..., :, i, j] = p.sigma
                decoder.push(y_hat[..., :, i, j])
        return GaussianFieldParams(mu=mu, sigma=sigma)

    def start_sequential(self, shape: torch.Size,
                         side_input: torch.Tensor | None = None,
                         device=None, dtype=None) -> "SequentialDecoder":
        return SequentialDecoder(self, shape, side_input, device=device, dtype=dtype)


class SequentialDecoder:
    """Raster-order pull interface: alternate next_params() and push().

    next_params() returns the (mu, sigma) column for every channel at the
    current position, computed from the decoded prefix; push() supplies the
    decoded values and advances the frontier. Calling either out of turn is a
    contract violation (a prefix gap would silently corrupt the stream).
    """

    def __init__(self, model: AutoregressiveEntropyModel, shape, side_input,
                 device=None, dtype=None):
        if len(shape) != 4:
            raise ShapeError(f"expected (N, C, H, W) latent shape, got {tuple(shape)}")
        self.model = model
        self.shape = tuple(shape)
        self.known = torch.zeros(self.shape, device=device, dtype=dtype)
        if model.conditional:
            if side_input is None:
                raise ConfigurationError("conditional model requires side_input")
            self.side = model.side_features(side_input)
        else:
            if side_input is not None:
                raise ConfigurationError("unconditional model got side_input")
            self.side = None
        self._cursor = 0
        self._awaiting_push = False

    def positions(self):
        _, _, h, w = self.shape
        return ((i, j) for i in range(h) for j in range(w))

    @property
    def finished(self) -> bool:
        return self._cursor >= self.shape[2] * self.shape[3]

    def _position(self) -> tuple[int, int]:
        return divmod(self._cursor, self.shape[3])

    def next_params(self) -> GaussianFieldParams:
        if self._awaiting_push:
            raise ContractViolation("push() the decoded values before asking again")
        if self.finished:
            raise ContractViolation("plane fully decoded")
        with torch.no_grad():
            params = self.model.predict_params(
                self.model.context_features(self.known), self.side
            )
        i, j = self._position()
        self._awaiting_push = True
        return GaussianFieldParams(mu=params.mu[..., :, i, j].clone(),
                                   sigma=params.sigma[..., :, i, j].clone())

    def push(self, values: torch.Tensor) -> None:
        if not self._awaiting_push:
            raise ContractViolation("next_params() must precede push()")
        i, j = self._position()
        self.known[..., :, i, j] = values
        self._cursor += 1
        self._awaiting_push = False

    def plane(self) -> torch.Tensor:
        if not self.finished:
            raise ContractViolation("plane not fully decoded")
        return self.known


# ---------------------------------------------------------------------------
# Rate estimation
# ---------------------------------------------------------------------------


def _check_integer(y_hat: torch.Tensor) -> None:
    deviation = (y_hat.detach() - round_half_away(y_hat.detach())).abs().max()
    if float(deviation) > 1e-9:
        raise ContractViolation("rate estimates require integer-valued y_hat")


def element_likelihood(y_hat: torch.Tensor, params: GaussianFieldParams) -> torch.Tensor:
    """P(y_hat) under the discretized Gaussian, floored at 2**-24."""
    d = y_hat - params.mu
    # Symmetric form keeps precision in the tails: both CDF arguments end up
    # on the same side of zero.
    a = -d.abs()
    upper = torch.special.ndtr((a + 0.5) / params.sigma)
    lower = torch.special.ndtr((a - 0.5) / params.sigma)
    return torch.clamp(upper - lower, min=PROB_FLOOR, max=1.0)


def rate_bits(y_hat: torch.Tensor, params: GaussianFieldParams,
              per_element: bool = False) -> torch.Tensor:
    """Total (or per-element) code length estimate in bits; differentiable
    with respect to mu, sigma and y_hat."""
    _check_integer(y_hat)
    bits = -torch.log2(element_likelihood(y_hat, params))
    return bits if per_element else bits.sum()


# ---------------------------------------------------------------------------
# Quantized CDF export
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantizedCdfTable:
    """Per-element 16-bit cumulative frequency rows over [s_min, s_max] plus
    a trailing escape slot. Row layout: K+2 entries, first 0, last 2**16.

    On the wire every entry is a little-endian u16; the terminator 2**16 wraps
    to 0 and is restored on load (rows are strictly increasing, so only the
    terminator can be zero past index 0).
    """

    s_min: int
    s_max: int
    rows: np.ndarray  # (N, K+2) uint32 cumulative
    precision: int = CDF_PRECISION

    def __post_init__(self):
        if self.s_max < self.s_min:
            raise ConfigurationError("empty symbol range")
        expected = self.s_max - self.s_min + 3
        if self.rows.ndim != 2 or self.rows.shape[1] != expected:
            raise ValueError(f"rows must have {expected} columns")
        if (self.rows[:, 0] != 0).any() or (self.rows[:, -1] != CDF_TOTAL).any():
            raise ValueError("rows must start at 0 and end at 2**16")
        if (np.diff(self.rows.astype(np.int64), axis=1) < 1).any():
            raise ValueError("rows must be strictly increasing (min frequency 1)")

    @property
    def num_symbols(self) -> int:
        return self.s_max - self.s_min + 1

    @property
    def escape_slot(self) -> int:
        return self.num_symbols

    def slot_for(self, symbol: int) -> int:
        if self.s_min <= symbol <= self.s_max:
            return symbol - self.s_min
        return self.escape_slot

    def implied_bits(self, index: int, slot: int) -> float:
        row = self.rows[index]
        freq = float(row[slot + 1] - row[slot])
        return -float(np.log2(freq / CDF_TOTAL))

    def to_bytes(self) -> bytes:
        """Wire layout: header {s_min i32, s_max i32, precision u8} then the
        u16 rows (terminator stored mod 2**16)."""
        import struct

        header = struct.pack("<iiB", self.s_min, self.s_max, self.precision)
        body = (self.rows % CDF_TOTAL).astype("<u2").tobytes()
        return header + body

    @classmethod
    def from_bytes(cls, blob: bytes) -> "QuantizedCdfTable":
        import struct

        s_min, s_max, precision = struct.unpack_from("<iiB", blob, 0)
        row_len = s_max - s_min + 3
        body = np.frombuffer(blob, dtype="<u2", offset=9).astype(np.uint32)
        rows = body.reshape(-1, row_len).copy()
        rows[:, -1] = CDF_TOTAL
        return cls(s_min=s_min, s_max=s_max, rows=rows, precision=precision)


def _quantize_pmf(probs: np.ndarray) -> np.ndarray:
    """Scale probability rows to integer frequencies summing to 2**16 with
    every slot >= 1. Deterministic: floor, then settle the drift on the
    largest slots."""
    probs = probs / probs.sum(axis=1, keepdims=True)
    freq = np.floor(probs * CDF_TOTAL).astype(np.int64)
    np.maximum(freq, 1, out=freq)
    deficit = CDF_TOTAL - freq.sum(axis=1)

    grow = deficit > 0
    if grow.any():
        rows = np.nonzero(grow)[0]
        freq[rows, np.argmax(freq[rows], axis=1)] += deficit[rows]

    for row in np.nonzero(deficit < 0)[0]:
        need = -int(deficit[row])
        while need > 0:
            idx = int(np.argmax(freq[row]))
            take = min(int(freq[row, idx]) - 1, need)
            freq[row, idx] -= take
            need -= take
    return freq


def symbol_coding_params(params: GaussianFieldParams) -> GaussianFieldParams:
    """Distribution of the coded symbols s = round(y_hat - mu).

    y_hat = round(s + mu) = s + round(mu), so the symbol alphabet follows the
    same discretized Gaussian recentred on the fractional offset
    mu - round(mu); pass the result to export_cdfs before range coding.
    """
    mu = params.mu.detach()
    return GaussianFieldParams(mu=mu - round_half_away(mu),
                               sigma=params.sigma.detach())


def export_cdfs(params: GaussianFieldParams,
                symbol_range: tuple[int, int]) -> QuantizedCdfTable:
    """16-bit quantized CDF rows of the discretized Gaussians over
    [s_min, s_max]; probability mass outside the range (e.g. a mean far away
    from it) goes to the escape slot."""
    s_min, s_max = int(symbol_range[0]), int(symbol_range[1])
    if s_max < s_min:
        raise ConfigurationError("symbol_range is empty")

    mu = params.mu.detach().cpu().numpy().astype(np.float64).reshape(-1)
    sigma = params.sigma.detach().cpu().numpy().astype(np.float64).reshape(-1)

    grid = np.arange(s_min, s_max + 1, dtype=np.float64)
    d = grid[None, :] - mu[:, None]
    a = -np.abs(d)
    pmf = sp_special.ndtr((a + 0.5) / sigma[:, None]) - sp_special.ndtr(
        (a - 0.5) / sigma[:, None]
    )
    escape = np.clip(1.0 - pmf.sum(axis=1, keepdims=True), 0.0, 1.0)
    freq = _quantize_pmf(np.concatenate([pmf, escape], axis=1))

    rows = np.zeros((freq.shape[0], freq.shape[1] + 1), dtype=np.uint32)
    rows[:, 1:] = np.cumsum(freq, axis=1)
    return QuantizedCdfTable(s_min=s_min, s_max=s_max, rows=rows)
