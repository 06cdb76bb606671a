"""Quantization: straight-through rounding and mean-offset symbolization.

One rounding rule is used everywhere (training, symbolization, decoding and
the coder's CDF indexing): round half away from zero. A single documented rule
keeps the symbolize/desymbolize identity and the bitstream bit-exact across
components. Exact-half offsets (frac(y_hat - mu) == 0.5) are measure-zero and
excluded from the recovery guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

INTEGER_TOLERANCE = 1e-9


class ContractViolation(ValueError):
    """An input violated a documented precondition."""


def round_half_away(x: torch.Tensor) -> torch.Tensor:
    """Round half away from zero: 2.5 -> 3, -2.5 -> -3 (torch.round is
    half-to-even and must not be used here)."""
    return torch.sign(x) * torch.floor(torch.abs(x) + 0.5)


def round_half_away_np(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


class _SteRound(torch.autograd.Function):
    @staticmethod
    def forward(ctx, y):
        return round_half_away(y)

    @staticmethod
    def backward(ctx, grad_output):
        # Quantization gradient is the identity.
        return grad_output


def ste_round(y: torch.Tensor) -> torch.Tensor:
    """Integer-valued forward pass with an identity backward Jacobian."""
    if not torch.isfinite(y).all():
        raise FloatingPointError("ste_round requires finite inputs")
    return _SteRound.apply(y)


def noise_quantize(y: torch.Tensor, generator: torch.Generator | None = None) -> torch.Tensor:
    """Additive-uniform-noise proxy, U(-0.5, 0.5). Ablation-only alternative
    to ste_round; it leaves train-time representations non-integer."""
    noise = torch.empty_like(y).uniform_(-0.5, 0.5, generator=generator)
    return y + noise


def _check_integer_valued(y_hat: torch.Tensor, name: str) -> None:
    deviation = (y_hat - round_half_away(y_hat)).abs().max()
    if float(deviation) > INTEGER_TOLERANCE:
        raise ContractViolation(
            f"{name} must be integer-valued (max deviation {float(deviation):.3e})"
        )


@dataclass(frozen=True)
class SymbolPlane:
    """Integer symbols aligned with a latent plane, plus the offset means
    they were computed against."""

    symbols: torch.Tensor  # int64, same shape as the latent plane
    offset_means: torch.Tensor

    def __post_init__(self):
        if self.symbols.shape != self.offset_means.shape:
            raise ValueError("symbols and offset_means must share a shape")


def symbolize(y_hat: torch.Tensor, mu: torch.Tensor) -> SymbolPlane:
    """symbols = round(y_hat - mu), the values actually entropy-coded."""
    _check_integer_valued(y_hat, "y_hat")
    if not torch.isfinite(mu).all():
        raise ContractViolation("mu must be finite")
    symbols = round_half_away(y_hat.detach() - mu.detach()).to(torch.int64)
    return SymbolPlane(symbols=symbols, offset_means=mu.detach())


def desymbolize(plane: SymbolPlane, mu: torch.Tensor | None = None) -> torch.Tensor:
    """round(symbols + mu); recovers the original y_hat exactly whenever
    frac(y_hat - mu) != 0.5."""
    means = plane.offset_means if mu is None else mu
    if plane.symbols.shape != means.shape:
        raise ValueError("symbols and means must share a shape")
    return round_half_away(plane.symbols.to(means.dtype) + means)
