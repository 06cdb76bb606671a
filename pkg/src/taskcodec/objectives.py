"""Training objectives.

Base layer: total = lambda_b * d_b + R_b + beta * ||x_hat - x||, where the
auxiliary term rewards reconstructing the input from the base latent through
a simple transform. beta = 0 is the conventional baseline. Enhancement layer:
the traditional rate-distortion pair total = lambda_e * d_e + conditional
rate, trained against a frozen base.

Rate terms are in bits per pixel (log base 2) everywhere; lambda values in
configs are tied to this convention. Distortions: RMSE for reconstruction and
depth, mean per-pixel multi-class cross-entropy (nats) for segmentation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import torch
import torch.nn.functional as F

from .transforms import TASK_KINDS


class ConfigurationError(ValueError):
    pass


class ContractViolation(ValueError):
    pass


def _check_finite(*tensors: torch.Tensor) -> None:
    for t in tensors:
        if not torch.isfinite(t).all():
            raise FloatingPointError("non-finite values in loss inputs")


def rmse(prediction: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if prediction.shape != target.shape:
        raise ValueError("shape mismatch")
    _check_finite(prediction, target)
    return torch.sqrt(torch.mean((prediction - target) ** 2))


def distortion(kind: str, prediction: torch.Tensor,
               target: torch.Tensor) -> torch.Tensor:
    """Task distortion: RMSE for reconstruction/depth; mean per-pixel
    cross-entropy (nats) for segmentation scores vs integer labels."""
    if kind not in TASK_KINDS:
        raise ValueError(f"unknown task kind {kind!r}")
    if kind == "segmentation":
        _check_finite(prediction)
        return F.cross_entropy(prediction, target)
    return rmse(prediction, target)


def aux_reconstruction_term(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """RMSE between the auxiliary reconstruction and the input."""
    return rmse(x_hat, x)


@dataclass(frozen=True)
class BaseLossBreakdown:
    task_distortion: torch.Tensor
    rate_bits: torch.Tensor  # bits per pixel
    aux_recon: torch.Tensor
    total: torch.Tensor
    lambda_b: float
    beta: float

    def scalars(self) -> dict[str, float]:
        return {
            "task_distortion": float(self.task_distortion.detach()),
            "rate_bits": float(self.rate_bits.detach()),
            "aux_recon": float(self.aux_recon.detach()),
            "total": float(self.total.detach()),
            "lambda_b": self.lambda_b,
            "beta": self.beta,
        }


def base_loss(task_kind: str, z_b: torch.Tensor, z_b_hat: torch.Tensor,
              rate_bits: torch.Tensor, x: torch.Tensor,
              x_hat: torch.Tensor | None, lambda_b: float,
              beta: float) -> BaseLossBreakdown:
    """Base objective with the auxiliary reconstruction reward.

    With beta = 0 the auxiliary transform is removed from the graph entirely
    and `x_hat` must be None; its parameters then receive no gradient at all.
    """
    if beta < 0:
        raise ConfigurationError("beta must be >= 0")
    if beta > 0 and x_hat is None:
        raise ConfigurationError("beta > 0 requires an auxiliary reconstruction")

    d_b = distortion(task_kind, z_b_hat, z_b)
    if beta > 0:
        aux = aux_reconstruction_term(x, x_hat)
    else:
        aux = torch.zeros((), dtype=rate_bits.dtype, device=rate_bits.device)
    total = lambda_b * d_b + rate_bits + beta * aux
    return BaseLossBreakdown(task_distortion=d_b, rate_bits=rate_bits,
                             aux_recon=aux, total=total,
                             lambda_b=lambda_b, beta=beta)


@dataclass(frozen=True)
class EnhancementLossBreakdown:
    task_distortion: torch.Tensor
    conditional_rate_bits: torch.Tensor  # bits per pixel
    total: torch.Tensor
    lambda_e: float

    def scalars(self) -> dict[str, float]:
        return {
            "task_distortion": float(self.task_distortion.detach()),
            "conditional_rate_bits": float(self.conditional_rate_bits.detach()),
            "total": float(self.total.detach()),
            "lambda_e": self.lambda_e,
        }


def enhancement_loss(task_kind: str, z_e: torch.Tensor, z_e_hat: torch.Tensor,
                     conditional_rate_bits: torch.Tensor, lambda_e: float,
                     frozen_base_params: Iterable[torch.nn.Parameter] | None = None,
                     ) -> EnhancementLossBreakdown:
    """Conditional rate-distortion objective for the enhancement layer.

    The base analysis transform must be frozen; passing its parameters here
    asserts the contract (enhancement gradients must not reach it).
    """
    if frozen_base_params is not None:
        for p in frozen_base_params:
            if p.requires_grad:
                raise ContractViolation(
                    "base parameters must be frozen during enhancement training"
                )
    d_e = distortion(task_kind, z_e_hat, z_e)
    total = lambda_e * d_e + conditional_rate_bits
    return EnhancementLossBreakdown(task_distortion=d_e,
                                    conditional_rate_bits=conditional_rate_bits,
                                    total=total, lambda_e=lambda_e)
