"""Empirical estimators of predictive V-entropy and V-information.

H_V(Z|Y) is the infimum over a restricted predictive family of the expected
negative log-likelihood of Z given Y; I_V(Y -> Z) = H_V(Z|null) - H_V(Z|Y).
The infimum is approximated by budgeted gradient training, so every reported
entropy is an upper bound (and every I_V a lower bound); reports echo the
family spec so comparisons stay like-for-like. Estimates use a held-out eval
split to avoid optimistic bias, with a bootstrap std over eval resamples.

Every family contains the constant predictor (weights at zero reduce any
probe to its bias), which keeps I_V >= 0 up to estimation noise.

Discrete targets use categorical NLL in nats. Continuous targets use a
Gaussian predictive with a learned global scale; entropies are then per
dimension and may be negative (differential).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy import stats

FAMILY_KINDS = ("marginal_only", "linear_probe", "shallow_mlp", "conv_probe")

NATS_TO_BITS = 1.0 / math.log(2.0)


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class PredictiveFamilySpec:
    kind: str = "linear_probe"
    width: int = 32
    depth: int = 2
    steps: int = 400
    learning_rate: float = 0.05
    train_fraction: float = 0.75

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ConfigurationError(f"kind must be one of {FAMILY_KINDS}")
        if self.steps <= 0:
            raise ConfigurationError("optimizer budget (steps) must be > 0")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigurationError("train_fraction must be in (0, 1)")


@dataclass(frozen=True)
class VInfoReport:
    h_given_null: float  # nats
    h_given_y: float  # nats
    i_v: float  # nats; = h_given_null - h_given_y
    i_v_bits: float
    uncertainty: float  # bootstrap std of i_v over eval resamples
    family: PredictiveFamilySpec

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["family"] = asdict(self.family)
        return d

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")


class _Probe(nn.Module):
    """One member-family of predictors; weights at zero give the constant
    predictor, so optional ignorance is structural."""

    def __init__(self, family: PredictiveFamilySpec, in_shape: tuple[int, ...],
                 out_dim: int, discrete: bool, marginal: bool):
        super().__init__()
        self.discrete = discrete
        self.marginal = marginal or family.kind == "marginal_only"
        in_dim = int(np.prod(in_shape))

        if self.marginal:
            self.net = None
            self.bias = nn.Parameter(torch.zeros(out_dim))
        elif family.kind == "linear_probe":
            self.net = nn.Sequential(nn.Flatten(), nn.Linear(in_dim, out_dim))
        elif family.kind == "shallow_mlp":
            layers: list[nn.Module] = [nn.Flatten()]
            prev = in_dim
            for _ in range(family.depth):
                layers += [nn.Linear(prev, family.width), nn.ReLU()]
                prev = family.width
            layers.append(nn.Linear(prev, out_dim))
            self.net = nn.Sequential(*layers)
        elif family.kind == "conv_probe":
            if len(in_shape) != 3:
                raise ConfigurationError("conv_probe requires (C, H, W) inputs")
            c, h, w = in_shape
            self.net = nn.Sequential(
                nn.Conv2d(c, family.width, 3, padding=1), nn.ReLU(),
                nn.Conv2d(family.width, family.width, 3, padding=1), nn.ReLU(),
                nn.Flatten(), nn.Linear(family.width * h * w, out_dim),
            )
        else:  # pragma: no cover - guarded by the spec validator
            raise ConfigurationError(family.kind)

        if not self.discrete:
            self.log_sigma = nn.Parameter(torch.zeros(()))

    def forward(self, y: torch.Tensor) -> torch.Tensor:
        if self.marginal:
            return self.bias.expand(y.shape[0], -1)
        return self.net(y)

    def nll(self, y: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        """Per-sample negative log-likelihood in nats (per target dimension
        for continuous targets)."""
        out = self(y)
        if self.discrete:
            return F.cross_entropy(out, z, reduction="none")
        sigma2 = torch.exp(2.0 * self.log_sigma)
        per_dim = 0.5 * math.log(2.0 * math.pi) + self.log_sigma \
            + (z - out) ** 2 / (2.0 * sigma2)
        return per_dim.mean(dim=tuple(range(1, per_dim.ndim)))


def _as_tensors(pairs_y, pairs_z) -> tuple[torch.Tensor, torch.Tensor, bool]:
    y = torch.as_tensor(np.asarray(pairs_y), dtype=torch.float32)
    z_arr = np.asarray(pairs_z)
    discrete = np.issubdtype(z_arr.dtype, np.integer)
    if discrete:
        z = torch.as_tensor(z_arr, dtype=torch.int64)
        if z.ndim != 1:
            raise ConfigurationError("discrete targets must be 1-D class ids")
    else:
        z = torch.as_tensor(z_arr, dtype=torch.float32).reshape(z_arr.shape[0], -1)
    if y.shape[0] != z.shape[0]:
        raise ConfigurationError("y and z must pair up")
    if y.shape[0] < 2:
        raise ConfigurationError("need at least 2 samples")
    return y, z, discrete


def _split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    n_train = min(max(int(round(n * fraction)), 1), n - 1)
    return perm[:n_train], perm[n_train:]


def _fit(y: torch.Tensor, z: torch.Tensor, discrete: bool,
         family: PredictiveFamilySpec, seed: int, marginal: bool,
         train_idx: np.ndarray) -> _Probe:
    out_dim = int(z.max()) + 1 if discrete else z.shape[1]
    torch.manual_seed(seed)
    probe = _Probe(family, tuple(y.shape[1:]), out_dim, discrete, marginal)
    optimizer = torch.optim.Adam(probe.parameters(), lr=family.learning_rate)
    y_train, z_train = y[train_idx], z[train_idx]
    for _ in range(family.steps):
        optimizer.zero_grad()
        loss = probe.nll(y_train, z_train).mean()
        loss.backward()
        optimizer.step()
    probe.eval()
    return probe


def estimate_conditional_v_entropy(pairs_y, pairs_z,
                                   family: PredictiveFamilySpec,
                                   seed: int = 0) -> float:
    """H_V(Z|Y) in nats: train the best in-family predictor on a train split,
    report mean NLL on the disjoint eval split."""
    y, z, discrete = _as_tensors(pairs_y, pairs_z)
    train_idx, eval_idx = _split(y.shape[0], family.train_fraction, seed)
    probe = _fit(y, z, discrete, family, seed, marginal=False, train_idx=train_idx)
    with torch.no_grad():
        return float(probe.nll(y[eval_idx], z[eval_idx]).mean())


def estimate_v_information(pairs_y, pairs_z, family: PredictiveFamilySpec,
                           seed: int = 0, bootstrap: int = 20) -> VInfoReport:
    """I_V(Y -> Z) = H_V(Z|null) - H_V(Z|Y), both entropies estimated on the
    same eval split, with a bootstrap std over eval resamples."""
    y, z, discrete = _as_tensors(pairs_y, pairs_z)
    train_idx, eval_idx = _split(y.shape[0], family.train_fraction, seed)

    probe = _fit(y, z, discrete, family, seed, marginal=False, train_idx=train_idx)
    null_probe = _fit(y, z, discrete, family, seed + 1, marginal=True,
                      train_idx=train_idx)
    with torch.no_grad():
        nll_y = probe.nll(y[eval_idx], z[eval_idx]).numpy()
        nll_null = null_probe.nll(y[eval_idx], z[eval_idx]).numpy()

    h_y = float(nll_y.mean())
    h_null = float(nll_null.mean())

    rng = np.random.default_rng(seed)
    resamples = []
    for _ in range(bootstrap):
        idx = rng.integers(0, len(eval_idx), size=len(eval_idx))
        resamples.append(nll_null[idx].mean() - nll_y[idx].mean())
    uncertainty = float(np.std(resamples))

    i_v = h_null - h_y
    return VInfoReport(h_given_null=h_null, h_given_y=h_y, i_v=i_v,
                       i_v_bits=i_v * NATS_TO_BITS, uncertainty=uncertainty,
                       family=family)


@dataclass(frozen=True)
class ComparisonReport:
    """Per-seed I_V estimates for two representations plus a sign test."""

    i_v_a: tuple[float, ...]
    i_v_b: tuple[float, ...]
    mean_difference: float  # mean(I_V(A) - I_V(B))
    wins_a: int
    p_value: float  # two-sided sign test on per-seed wins
    family: PredictiveFamilySpec

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["family"] = asdict(self.family)
        return d


def compare_representations(rep_a, rep_b, pairs_z,
                            family: PredictiveFamilySpec,
                            seeds: list[int]) -> ComparisonReport:
    """Estimate I_V(rep -> Z) for both representations under several seeds
    (split + init + training randomness) and sign-test the ordering."""
    if len(seeds) < 3:
        raise ConfigurationError(
            f"need at least 3 seeds for a defensible ordering, got {len(seeds)}"
        )
    i_v_a, i_v_b = [], []
    for seed in seeds:
        i_v_a.append(estimate_v_information(rep_a, pairs_z, family, seed=seed).i_v)
        i_v_b.append(estimate_v_information(rep_b, pairs_z, family, seed=seed).i_v)
    diffs = np.array(i_v_a) - np.array(i_v_b)
    wins_a = int(np.sum(diffs > 0))
    p_value = float(stats.binomtest(wins_a, len(seeds), 0.5).pvalue)
    return ComparisonReport(i_v_a=tuple(i_v_a), i_v_b=tuple(i_v_b),
                            mean_difference=float(diffs.mean()), wins_a=wins_a,
                            p_value=p_value, family=family)
