"""Experiment orchestration: two-phase training and the three pipelines.

Phase 1 trains the base codec (analysis transform, base task head, optional
auxiliary reconstruction head, unconditional entropy model) jointly under the
base objective, sweeping a descending lambda grid with warm starts.

Phase 2 freezes a matched-rate base checkpoint per method and trains the
secondary task three ways: `direct` (a synthesis head reading the frozen base
latent), `scalable` (a dedicated enhancement codec whose entropy model
conditions on the base latent), and `standalone` (the proposed method's
scalable codec with the side input zeroed and only the entropy model
fine-tuned).

Method = one beta value of the base objective; beta = 0 is the baseline.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from . import data as data_mod
from . import metrics as metrics_mod
from . import vinfo as vinfo_mod
from .entropy import AutoregressiveEntropyModel, EntropyModelSpec, rate_bits
from .objectives import base_loss, distortion, enhancement_loss
from .quantizer import noise_quantize, ste_round
from .transforms import (
    AnalysisTransform,
    SynthesisTransform,
    TaskHeadSpec,
    TransformSpec,
    aux_spec_from,
)

DETERMINISTIC_ENV = "TASKCODEC_DETERMINISTIC"


class ConfigurationError(ValueError):
    pass


class MatchedRateError(RuntimeError):
    pass


class TrainingDiverged(RuntimeError):
    pass


class ExperimentFailed(RuntimeError):
    def __init__(self, out_dir: Path, cause: BaseException):
        super().__init__(f"experiment failed ({cause}); partial results in {out_dir}")
        self.out_dir = out_dir


def deterministic_mode() -> bool:
    return os.environ.get(DETERMINISTIC_ENV, "") == "1"


def _derive_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:4], "little")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int = 16
    learning_rate: float = 1e-4  # Adam, fixed
    max_epochs: int = 1000
    patience: int = 20  # early stopping on held-out total loss
    holdout_fraction: float = 0.2

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigurationError("batch_size, max_epochs, patience must be >= 1")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigurationError("holdout_fraction must be in (0, 1)")


@dataclass(frozen=True)
class ExperimentConfig:
    # dataset
    dataset_seed: int = 0
    dataset_count: int = 240
    image_size: int = 64
    num_classes: int = 4
    # tasks and methods
    base_task: str = "depth_regression"
    secondary_task: str = "reconstruction"
    lambda_b_grid: tuple[float, ...] = (12.0, 4.0, 1.5, 0.5)
    lambda_e_grid: tuple[float, ...] = (12.0, 4.0, 1.5, 0.5)
    betas: tuple[float, ...] = (0.0, 0.1)  # beta = 0 is the baseline method
    modes: tuple[str, ...] = ("direct", "scalable", "standalone")
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    # architecture
    transform: TransformSpec = TransformSpec(latent_channels=64, base_width=16,
                                             blocks_per_stage=1)
    entropy: EntropyModelSpec = EntropyModelSpec()
    # training
    training: TrainingConfig = TrainingConfig()
    augmentation: data_mod.AugmentationPolicy = data_mod.AugmentationPolicy()
    quantization: str = "ste"  # "noise" reproduces the additive-noise ablation
    matched_rate_tolerance: float = 0.15
    output_dir: str = "runs/experiment"

    def __post_init__(self):
        if any(b < 0 for b in self.betas):
            raise ConfigurationError("beta must be >= 0")
        if self.quantization not in ("ste", "noise"):
            raise ConfigurationError("quantization must be 'ste' or 'noise'")
        unknown = set(self.modes) - {"direct", "scalable", "standalone"}
        if unknown:
            raise ConfigurationError(f"unknown modes: {sorted(unknown)}")
        if "standalone" in self.modes and not any(b > 0 for b in self.betas):
            raise ConfigurationError(
                "standalone mode fine-tunes the proposed method's codec and "
                "requires a beta > 0 method in the config"
            )
        if "standalone" in self.modes and "scalable" not in self.modes:
            raise ConfigurationError(
                "standalone starts from scalable checkpoints; enable both"
            )
        if self.image_size % 16 != 0:
            raise ConfigurationError("image_size must be divisible by 16")

    # -- (de)serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        for key, sub in (("transform", TransformSpec),
                         ("entropy", EntropyModelSpec),
                         ("training", TrainingConfig),
                         ("augmentation", data_mod.AugmentationPolicy)):
            if key in d and isinstance(d[key], dict):
                d[key] = sub(**d[key])
        for key in ("lambda_b_grid", "lambda_e_grid", "betas", "modes", "seeds"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_overrides(self, overrides: list[str]) -> "ExperimentConfig":
        """Apply dotted `key=value` overrides, e.g. `training.patience=5`."""
        d = self.to_dict()
        for item in overrides:
            if "=" not in item:
                raise ConfigurationError(f"override must look like key=value: {item!r}")
            key, raw = item.split("=", 1)
            target = d
            parts = key.split(".")
            for part in parts[:-1]:
                if part not in target or not isinstance(target[part], dict):
                    raise ConfigurationError(f"unknown config group {part!r} in {key!r}")
                target = target[part]
            leaf = parts[-1]
            if leaf not in target:
                raise ConfigurationError(f"unknown config key {key!r}")
            target[leaf] = json.loads(raw) if raw.lstrip("-")[:1].isdigit() or raw in (
                "true", "false", "null") or raw.startswith(("[", "{", '"')) else raw
        return self.from_dict(d)


# ---------------------------------------------------------------------------
# Data plumbing
# ---------------------------------------------------------------------------


@dataclass
class TensorDataset:
    images: torch.Tensor  # (N, 3, S, S)
    depths: torch.Tensor  # (N, 1, S, S)
    segmentations: torch.Tensor  # (N, S, S) long


def _samples_to_tensors(samples: list[data_mod.ShapesSample]) -> TensorDataset:
    images = torch.from_numpy(np.stack([s.image for s in samples]))
    depths = torch.from_numpy(np.stack([s.depth for s in samples])).unsqueeze(1)
    segs = torch.from_numpy(np.stack([s.segmentation for s in samples]))
    return TensorDataset(images=images, depths=depths, segmentations=segs)


_DATASET_CACHE: dict[tuple, list[data_mod.ShapesSample]] = {}


def _dataset_samples(config: ExperimentConfig) -> list[data_mod.ShapesSample]:
    key = (config.dataset_seed, config.dataset_count, config.image_size,
           config.num_classes)
    if key not in _DATASET_CACHE:
        _DATASET_CACHE[key] = data_mod.generate_dataset(*key)
    return _DATASET_CACHE[key]


def build_splits(config: ExperimentConfig) -> tuple[list, list]:
    """Deterministic train/holdout split of the generated samples."""
    samples = _dataset_samples(config)
    n_val = max(1, int(round(len(samples) * config.training.holdout_fraction)))
    order = np.random.default_rng(_derive_seed("split", config.dataset_seed)).permutation(
        len(samples))
    val_idx = set(order[:n_val].tolist())
    train = [samples[i] for i in range(len(samples)) if i not in val_idx]
    val = [samples[i] for i in sorted(val_idx)]
    return train, val


def _target_for(task: str, batch: TensorDataset) -> torch.Tensor:
    if task == "depth_regression":
        return batch.depths
    if task == "reconstruction":
        return batch.images
    if task == "segmentation":
        return batch.segmentations
    raise ConfigurationError(f"unknown task {task!r}")


# ---------------------------------------------------------------------------
# Codec assemblies
# ---------------------------------------------------------------------------


@dataclass
class CodecOutputs:
    y_hat: torch.Tensor
    params: object  # GaussianFieldParams
    z_hat: torch.Tensor
    x_hat: torch.Tensor | None
    rate_bpp: torch.Tensor


class BaseCodec(nn.Module):
    """Analysis transform + base task head (+ auxiliary reconstruction head
    when beta > 0) + unconditional entropy model."""

    def __init__(self, transform: TransformSpec, entropy: EntropyModelSpec,
                 base_task: str, num_classes: int, with_aux: bool,
                 quantization: str = "ste"):
        super().__init__()
        self.base_task = base_task
        self.with_aux = with_aux
        self.quantization = quantization
        self.analysis = AnalysisTransform(transform)
        self.task_head = SynthesisTransform(
            transform, TaskHeadSpec(base_task, num_classes=num_classes))
        self.aux_head = (SynthesisTransform(aux_spec_from(transform),
                                            TaskHeadSpec("reconstruction"))
                         if with_aux else None)
        self.entropy_model = AutoregressiveEntropyModel(
            transform.latent_channels, entropy)

    def quantize(self, y: torch.Tensor) -> torch.Tensor:
        if self.quantization == "noise" and self.training:
            return noise_quantize(y)
        return ste_round(y)

    def forward(self, x: torch.Tensor) -> CodecOutputs:
        y_hat = self.quantize(self.analysis(x))
        params = self.entropy_model(y_hat)
        # The same y_hat feeds the entropy model, the heads and the rate
        # term, in training and at test time alike.
        bits = rate_bits(y_hat, params)
        bpp = bits / (x.shape[0] * x.shape[-1] * x.shape[-2])
        z_hat = self.task_head(y_hat)
        x_hat = self.aux_head(y_hat) if self.aux_head is not None else None
        return CodecOutputs(y_hat=y_hat, params=params, z_hat=z_hat,
                            x_hat=x_hat, rate_bpp=bpp)


class EnhancementCodec(nn.Module):
    """Dedicated secondary-task codec; its entropy model conditions on the
    (frozen, fully decoded) base latent."""

    def __init__(self, transform: TransformSpec, entropy: EntropyModelSpec,
                 secondary_task: str, num_classes: int, side_channels: int,
                 quantization: str = "ste"):
        super().__init__()
        self.secondary_task = secondary_task
        self.quantization = quantization
        self.analysis = AnalysisTransform(transform)
        self.task_head = SynthesisTransform(
            transform, TaskHeadSpec(secondary_task, num_classes=num_classes))
        self.entropy_model = AutoregressiveEntropyModel(
            transform.latent_channels, entropy, side_input_channels=side_channels)

    def quantize(self, y: torch.Tensor) -> torch.Tensor:
        if self.quantization == "noise" and self.training:
            return noise_quantize(y)
        return ste_round(y)

    def forward(self, x: torch.Tensor, y_b_hat: torch.Tensor) -> CodecOutputs:
        y_hat = self.quantize(self.analysis(x))
        params = self.entropy_model(y_hat, side_input=y_b_hat)
        bits = rate_bits(y_hat, params)
        bpp = bits / (x.shape[0] * x.shape[-1] * x.shape[-2])
        z_hat = self.task_head(y_hat)
        return CodecOutputs(y_hat=y_hat, params=params, z_hat=z_hat,
                            x_hat=None, rate_bpp=bpp)


class DirectHead(nn.Module):
    """Secondary task read directly off the frozen base latent; no dedicated
    channel, no rate term."""

    def __init__(self, transform: TransformSpec, secondary_task: str,
                 num_classes: int):
        super().__init__()
        self.secondary_task = secondary_task
        self.head = SynthesisTransform(
            transform, TaskHeadSpec(secondary_task, num_classes=num_classes))

    def forward(self, y_b_hat: torch.Tensor) -> torch.Tensor:
        return self.head(y_b_hat)


# ---------------------------------------------------------------------------
# Checkpoint bundles
# ---------------------------------------------------------------------------


def state_content_hash(state: dict[str, torch.Tensor]) -> str:
    digest = hashlib.sha256()
    for name in sorted(state):
        digest.update(name.encode())
        digest.update(state[name].detach().cpu().numpy().tobytes())
    return digest.hexdigest()


@dataclass
class CheckpointBundle:
    kind: str  # base | direct | scalable | standalone
    state: dict
    transform: TransformSpec
    entropy: EntropyModelSpec
    task: str
    num_classes: int
    with_aux: bool
    lam: float
    beta: float
    seed: int
    quantization: str
    history: list
    eval_metrics: dict
    config_echo: dict
    content_hash: str = ""
    base_hash: str | None = None  # frozen-base hash for secondary bundles
    side_channels: int | None = None

    def __post_init__(self):
        if not self.content_hash:
            self.content_hash = state_content_hash(self.state)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(asdict(self) | {
            "transform": asdict(self.transform),
            "entropy": asdict(self.entropy),
        }, path)
        return path

    @classmethod
    def load(cls, path: str | Path) -> "CheckpointBundle":
        payload = torch.load(path, map_location="cpu", weights_only=False)
        payload["transform"] = TransformSpec(**payload["transform"])
        payload["entropy"] = EntropyModelSpec(**payload["entropy"])
        return cls(**payload)


def build_base_codec(bundle: CheckpointBundle) -> BaseCodec:
    if bundle.kind != "base":
        raise ConfigurationError(f"expected a base bundle, got {bundle.kind!r}")
    codec = BaseCodec(bundle.transform, bundle.entropy, bundle.task,
                      bundle.num_classes, bundle.with_aux, bundle.quantization)
    codec.load_state_dict(bundle.state)
    codec.eval()
    return codec


def build_enhancement_codec(bundle: CheckpointBundle) -> EnhancementCodec:
    if bundle.kind not in ("scalable", "standalone"):
        raise ConfigurationError(f"expected an enhancement bundle, got {bundle.kind!r}")
    codec = EnhancementCodec(bundle.transform, bundle.entropy, bundle.task,
                             bundle.num_classes, bundle.side_channels,
                             bundle.quantization)
    codec.load_state_dict(bundle.state)
    codec.eval()
    return codec


def freeze(module: nn.Module) -> nn.Module:
    module.eval()
    for p in module.parameters():
        p.requires_grad_(False)
    return module


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def _epoch_tensors(samples, policy: data_mod.AugmentationPolicy, seed: int,
                   epoch: int) -> TensorDataset:
    if policy.is_identity:
        return _samples_to_tensors(samples)
    rng = np.random.default_rng([_derive_seed("augment", seed), epoch])
    return _samples_to_tensors([data_mod.augment(s, policy, rng) for s in samples])


def _batches(n: int, batch_size: int, generator: torch.Generator):
    order = torch.randperm(n, generator=generator)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _slice(ds: TensorDataset, idx) -> TensorDataset:
    return TensorDataset(images=ds.images[idx], depths=ds.depths[idx],
                         segmentations=ds.segmentations[idx])


def fit(model: nn.Module, loss_fn, train_samples, val_samples,
        config: ExperimentConfig, run_seed: int, max_epochs: int | None = None,
        log=None) -> list[dict]:
    """Generic loop: Adam at the configured fixed learning rate, early
    stopping on held-out total loss, best weights restored at the end.

    `loss_fn(model, batch) -> (total, scalars_dict)`. Raises TrainingDiverged
    on non-finite losses.
    """
    tcfg = config.training
    max_epochs = tcfg.max_epochs if max_epochs is None else max_epochs
    trainable = [p for p in model.parameters() if p.requires_grad]
    if not trainable:
        raise ConfigurationError("model has no trainable parameters")
    optimizer = torch.optim.Adam(trainable, lr=tcfg.learning_rate)

    generator = torch.Generator().manual_seed(_derive_seed("batches", run_seed))
    val_tensors = _samples_to_tensors(val_samples)

    history: list[dict] = []
    best_val = float("inf")
    best_state = copy.deepcopy(model.state_dict())
    since_best = 0

    for epoch in range(max_epochs):
        model.train()
        epoch_data = _epoch_tensors(train_samples, config.augmentation,
                                    run_seed, epoch)
        train_totals = []
        for idx in _batches(len(train_samples), tcfg.batch_size, generator):
            optimizer.zero_grad()
            total, _ = loss_fn(model, _slice(epoch_data, idx))
            if not torch.isfinite(total):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} (lr={tcfg.learning_rate})"
                )
            total.backward()
            optimizer.step()
            train_totals.append(float(total.detach()))

        model.eval()
        with torch.no_grad():
            val_total, val_scalars = loss_fn(model, val_tensors)
        val_value = float(val_total)
        if not np.isfinite(val_value):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")

        entry = {"epoch": epoch, "train_total": float(np.mean(train_totals)),
                 "val_total": val_value, **{f"val_{k}": v for k, v in val_scalars.items()}}
        history.append(entry)
        if log:
            log(entry)

        if val_value < best_val - 1e-7:
            best_val = val_value
            best_state = copy.deepcopy(model.state_dict())
            since_best = 0
        else:
            since_best += 1
            if since_best >= tcfg.patience:
                break

    model.load_state_dict(best_state)
    model.eval()
    return history


# ---------------------------------------------------------------------------
# Phase 1: base training
# ---------------------------------------------------------------------------


def _base_loss_fn(config: ExperimentConfig, lambda_b: float, beta: float):
    def loss_fn(model: BaseCodec, batch: TensorDataset):
        out = model(batch.images)
        breakdown = base_loss(config.base_task, _target_for(config.base_task, batch),
                              out.z_hat, out.rate_bpp, batch.images, out.x_hat,
                              lambda_b=lambda_b, beta=beta)
        return breakdown.total, breakdown.scalars()
    return loss_fn


@torch.no_grad()
def evaluate_base(codec: BaseCodec, val: TensorDataset, base_task: str) -> dict:
    codec.eval()
    out = codec(val.images)
    result = {
        "bpp": float(out.rate_bpp),
        "task_distortion": float(distortion(base_task, out.z_hat,
                                            _target_for(base_task, val))),
    }
    if out.x_hat is not None:
        result["aux_rmse"] = float(distortion("reconstruction", out.x_hat, val.images))
    return result


def train_base(config: ExperimentConfig, lambda_b: float, beta: float, seed: int,
               init: CheckpointBundle | None = None,
               max_epochs: int | None = None) -> CheckpointBundle:
    """Train f_b, g_b (and g_a when beta > 0) and the entropy model jointly.
    `init` warm-starts from a previous grid point."""
    torch.manual_seed(_derive_seed("base", seed, lambda_b, beta))
    codec = BaseCodec(config.transform, config.entropy, config.base_task,
                      config.num_classes, with_aux=beta > 0,
                      quantization=config.quantization)
    if init is not None:
        if init.with_aux != (beta > 0) or init.transform != config.transform:
            raise ConfigurationError("init bundle architecture does not match")
        codec.load_state_dict(init.state)

    train, val = build_splits(config)
    history = fit(codec, _base_loss_fn(config, lambda_b, beta), train, val,
                  config, run_seed=_derive_seed("fit-base", seed, lambda_b, beta),
                  max_epochs=max_epochs)
    eval_metrics = evaluate_base(codec, _samples_to_tensors(val), config.base_task)
    return CheckpointBundle(
        kind="base", state=codec.state_dict(), transform=config.transform,
        entropy=config.entropy, task=config.base_task,
        num_classes=config.num_classes, with_aux=beta > 0, lam=lambda_b,
        beta=beta, seed=seed, quantization=config.quantization,
        history=history, eval_metrics=eval_metrics, config_echo=config.to_dict(),
    )


def sweep_base(config: ExperimentConfig, beta: float, seed: int,
               log=None) -> list[CheckpointBundle]:
    """Descending-lambda sweep; each point warm-starts from the previous
    (highest lambda = lowest compression first)."""
    bundles = []
    previous = None
    for lam in sorted(config.lambda_b_grid, reverse=True):
        bundle = train_base(config, lam, beta, seed, init=previous)
        if log:
            log({"phase": "base", "beta": beta, "lambda": lam,
                 "epochs": len(bundle.history), **bundle.eval_metrics})
        bundles.append(bundle)
        previous = bundle
    return bundles


# ---------------------------------------------------------------------------
# Matched-rate selection
# ---------------------------------------------------------------------------


def select_matched_rate(candidates: dict[str, list[tuple[float, object]]],
                        tolerance: float = 0.15) -> dict[str, tuple[float, object]]:
    """Pick one checkpoint per method with similar base bpp.

    Target = median over the closest cross-method bpp pairs; a method whose
    best candidate is more than `tolerance` (relative) away fails loudly with
    the available bpps listed.
    """
    methods = sorted(candidates)
    if any(not candidates[m] for m in methods):
        raise MatchedRateError("every method needs a non-empty curve")
    if len(methods) == 1:
        bpps = [b for b, _ in candidates[methods[0]]]
        best = int(np.argmin(bpps))
        return {methods[0]: candidates[methods[0]][best]}

    paired_bpps: list[float] = []
    for i, m_a in enumerate(methods):
        for m_b in methods[i + 1:]:
            best_pair = min(
                ((a, b) for a, _ in candidates[m_a] for b, _ in candidates[m_b]),
                key=lambda ab: abs(np.log(ab[0] / ab[1])),
            )
            paired_bpps.extend(best_pair)
    target = float(np.median(paired_bpps))

    selected = {}
    for method in methods:
        bpp, ref = min(candidates[method], key=lambda c: abs(c[0] - target))
        if abs(bpp - target) / target > tolerance:
            available = {m: [round(b, 4) for b, _ in candidates[m]] for m in methods}
            raise MatchedRateError(
                f"method {method!r}: best bpp {bpp:.4f} is more than "
                f"{tolerance:.0%} from target {target:.4f}; available: {available}"
            )
        selected[method] = (bpp, ref)
    return selected


# ---------------------------------------------------------------------------
# Phase 2: secondary training
# ---------------------------------------------------------------------------


def _frozen_base_latents(base: BaseCodec, images: torch.Tensor) -> torch.Tensor:
    with torch.no_grad():
        return ste_round(base.analysis(images))


def _secondary_loss_fn(config: ExperimentConfig, base: BaseCodec, lambda_e: float,
                       mode: str):
    base_params = list(base.parameters())

    def loss_fn(model, batch: TensorDataset):
        y_b = _frozen_base_latents(base, batch.images)
        if mode == "standalone":
            y_b = torch.zeros_like(y_b)
        target = _target_for(config.secondary_task, batch)
        if mode == "direct":
            z_hat = model(y_b)
            d = distortion(config.secondary_task, z_hat, target)
            return d, {"task_distortion": float(d.detach())}
        out = model(batch.images, y_b)
        breakdown = enhancement_loss(config.secondary_task, target, out.z_hat,
                                     out.rate_bpp, lambda_e=lambda_e,
                                     frozen_base_params=base_params)
        return breakdown.total, breakdown.scalars()

    return loss_fn


@torch.no_grad()
def evaluate_secondary(model, base: BaseCodec, val: TensorDataset,
                       config: ExperimentConfig, mode: str) -> dict:
    model.eval()
    y_b = _frozen_base_latents(base, val.images)
    if mode == "standalone":
        y_b = torch.zeros_like(y_b)
    target = _target_for(config.secondary_task, val)

    if mode == "direct":
        z_hat = model(y_b)
        enh_bpp = 0.0
    else:
        out = model(val.images, y_b)
        z_hat = out.z_hat
        enh_bpp = float(out.rate_bpp)

    result = {"enh_bpp": enh_bpp,
              "task_distortion": float(distortion(config.secondary_task, z_hat, target))}
    if config.secondary_task == "reconstruction":
        result["psnr"] = metrics_mod.psnr(target.numpy(), z_hat.numpy(), 1.0)
    elif config.secondary_task == "segmentation":
        result["miou"] = metrics_mod.miou(z_hat.argmax(dim=1).numpy(),
                                          target.numpy(), config.num_classes)
    return result


def train_secondary(config: ExperimentConfig, base_bundle: CheckpointBundle,
                    lambda_e: float, mode: str, seed: int,
                    init: CheckpointBundle | None = None,
                    scalable_source: CheckpointBundle | None = None,
                    max_epochs: int | None = None) -> CheckpointBundle:
    """Train the secondary task against a frozen base checkpoint.

    direct: synthesis head on the base latent only. scalable: full
    enhancement codec with the base latent as side-information. standalone:
    start from the proposed method's scalable codec (`scalable_source`), zero
    the side input, freeze the transforms, fine-tune the entropy model.
    """
    if mode not in ("direct", "scalable", "standalone"):
        raise ConfigurationError(f"unknown mode {mode!r}")
    if base_bundle.kind != "base":
        raise ConfigurationError("train_secondary needs a base bundle")
    if mode == "standalone":
        if scalable_source is None or scalable_source.kind != "scalable":
            raise ConfigurationError(
                "standalone mode requires the proposed method's scalable bundle"
            )
        if scalable_source.beta == 0 or base_bundle.beta == 0:
            raise ConfigurationError(
                "standalone is defined on the proposed method (beta > 0)"
            )

    torch.manual_seed(_derive_seed("secondary", mode, seed, lambda_e,
                                   base_bundle.beta))
    base = freeze(build_base_codec(base_bundle))

    if mode == "direct":
        model: nn.Module = DirectHead(config.transform, config.secondary_task,
                                      config.num_classes)
    else:
        model = EnhancementCodec(config.transform, config.entropy,
                                 config.secondary_task, config.num_classes,
                                 side_channels=base_bundle.transform.latent_channels,
                                 quantization=config.quantization)
        if mode == "standalone":
            model.load_state_dict(scalable_source.state)
            freeze(model.analysis)
            freeze(model.task_head)
        elif init is not None:
            model.load_state_dict(init.state)

    train, val = build_splits(config)
    history = fit(model, _secondary_loss_fn(config, base, lambda_e, mode),
                  train, val, config,
                  run_seed=_derive_seed("fit-sec", mode, seed, lambda_e,
                                        base_bundle.beta),
                  max_epochs=max_epochs)
    eval_metrics = evaluate_secondary(model, base, _samples_to_tensors(val),
                                      config, mode)
    eval_metrics["base_bpp"] = base_bundle.eval_metrics["bpp"]

    return CheckpointBundle(
        kind=mode, state=model.state_dict(), transform=config.transform,
        entropy=config.entropy, task=config.secondary_task,
        num_classes=config.num_classes, with_aux=False, lam=lambda_e,
        beta=base_bundle.beta, seed=seed, quantization=config.quantization,
        history=history, eval_metrics=eval_metrics, config_echo=config.to_dict(),
        base_hash=base_bundle.content_hash,
        side_channels=base_bundle.transform.latent_channels,
    )


def sweep_secondary(config: ExperimentConfig, base_bundle: CheckpointBundle,
                    mode: str, seed: int,
                    scalable_sources: list[CheckpointBundle] | None = None,
                    log=None) -> list[CheckpointBundle]:
    """Descending lambda_e sweep with warm start (scalable), or per-source
    entropy-model fine-tunes (standalone)."""
    bundles = []
    previous = None
    grid = sorted(config.lambda_e_grid, reverse=True)
    for k, lam in enumerate(grid):
        source = None
        if mode == "standalone":
            source = next(s for s in scalable_sources if s.lam == lam)
        bundle = train_secondary(config, base_bundle, lam, mode, seed,
                                 init=previous if mode == "scalable" else None,
                                 scalable_source=source)
        if log:
            log({"phase": mode, "beta": base_bundle.beta, "lambda": lam,
                 "epochs": len(bundle.history), **bundle.eval_metrics})
        bundles.append(bundle)
        if mode == "scalable":
            previous = bundle
    return bundles


# ---------------------------------------------------------------------------
# Quality conventions
# ---------------------------------------------------------------------------


def quality_of(metrics: dict, task: str) -> tuple[str, float]:
    """Uniform higher-is-better quality axis: PSNR (reconstruction), mIoU
    (segmentation), negative RMSE (depth and other regressions)."""
    if task == "reconstruction":
        return "psnr", metrics["psnr"]
    if task == "segmentation":
        return "miou", metrics["miou"]
    return "neg_rmse", -metrics["task_distortion"]


def _rd_point(bundle: CheckpointBundle, mode: str, config: ExperimentConfig,
              task: str) -> metrics_mod.RDPoint:
    m = bundle.eval_metrics
    if mode == "base":
        bpp_value = m["bpp"]
    elif mode == "direct":
        bpp_value = m["base_bpp"]
    elif mode == "scalable":
        bpp_value = m["base_bpp"] + m["enh_bpp"]  # sum of both representations
    else:  # standalone transmits no base layer
        bpp_value = m["enh_bpp"]
    kind, quality = quality_of(m, task)
    return metrics_mod.RDPoint(bpp=bpp_value, quality=quality, lam=bundle.lam,
                               seed=bundle.seed, mode=mode, metric_kind=kind)


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------


def _method_name(beta: float) -> str:
    return f"beta{beta:g}"


def experiment_plan(config: ExperimentConfig) -> list[str]:
    plan = []
    for seed in config.seeds:
        for beta in config.betas:
            for lam in sorted(config.lambda_b_grid, reverse=True):
                plan.append(f"seed {seed}: train-base beta={beta:g} lambda_b={lam:g}")
            plan.append(f"seed {seed}: matched-rate selection across methods")
            for mode in config.modes:
                if mode == "direct":
                    plan.append(f"seed {seed}: direct head on beta={beta:g} base")
                elif mode == "scalable":
                    for lam in sorted(config.lambda_e_grid, reverse=True):
                        plan.append(
                            f"seed {seed}: scalable beta={beta:g} lambda_e={lam:g}")
                elif mode == "standalone" and beta > 0:
                    for lam in sorted(config.lambda_e_grid, reverse=True):
                        plan.append(
                            f"seed {seed}: standalone beta={beta:g} lambda_e={lam:g}")
    return plan


def _vinfo_report(config: ExperimentConfig, matched: dict, seed: int) -> dict:
    """I_V from the matched base latents to a coarse reconstruction target,
    per method, under a fixed conv-probe family."""
    _, val = build_splits(config)
    tensors = _samples_to_tensors(val)
    family = vinfo_mod.PredictiveFamilySpec("conv_probe", width=16, steps=200,
                                            learning_rate=0.01)
    target = torch.nn.functional.avg_pool2d(tensors.images, 8).numpy()
    target = target.reshape(target.shape[0], -1)

    report: dict = {"family": asdict(family), "per_method": {}}
    latents = {}
    for method, (_, bundle) in matched.items():
        base = freeze(build_base_codec(bundle))
        latents[method] = _frozen_base_latents(base, tensors.images).numpy()
        est = vinfo_mod.estimate_v_information(latents[method], target, family,
                                               seed=_derive_seed("vinfo", seed))
        report["per_method"][method] = est.to_json_dict()
    ordered = sorted(report["per_method"],
                     key=lambda m: report["per_method"][m]["i_v"], reverse=True)
    report["ordering_by_i_v"] = ordered
    return report


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None,
                   log=print) -> Path:
    """Execute both phases for every seed and method; emit curves.csv,
    bdrate.json, vinfo.json, manifest.json and checkpoints.

    Any phase failure still writes the manifest (marked failed) and preserves
    partial results before the error propagates.
    """
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.to_json(out / "config.json")

    manifest: dict = {
        "status": "running", "deterministic": deterministic_mode(),
        "config": config.to_dict(), "seeds": {}, "started_unix": time.time(),
    }
    all_points: list[tuple[str, metrics_mod.RDPoint]] = []
    bd_reports: list[dict] = []
    vinfo_reports: dict = {}

    def log_entry(entry):
        if log:
            log(entry)

    try:
        for seed in config.seeds:
            seed_info: dict = {"checkpoints": {}}
            manifest["seeds"][str(seed)] = seed_info

            base_curves: dict[str, list] = {}
            base_bundles: dict[str, list[CheckpointBundle]] = {}
            for beta in config.betas:
                method = _method_name(beta)
                bundles = sweep_base(config, beta, seed, log=log_entry)
                base_bundles[method] = bundles
                base_curves[method] = [(b.eval_metrics["bpp"], b) for b in bundles]
                for b in bundles:
                    path = out / "checkpoints" / f"seed{seed}" / method / \
                        f"base_lam{b.lam:g}.pt"
                    b.save(path)
                    seed_info["checkpoints"][f"{method}/base_lam{b.lam:g}"] = \
                        {"path": str(path), "hash": b.content_hash}
                    all_points.append((method, _rd_point(b, "base", config,
                                                         config.base_task)))

            matched = select_matched_rate(base_curves, config.matched_rate_tolerance)
            seed_info["matched_base_bpp"] = {m: bpp for m, (bpp, _) in matched.items()}

            # Uncompressed reference: best base-task quality at the largest
            # lambda across methods.
            top_lam = max(config.lambda_b_grid)
            anchor = max(
                quality_of(b.eval_metrics, config.base_task)[1]
                for bundles in base_bundles.values() for b in bundles
                if b.lam == top_lam
            )
            seed_info["uncompressed_anchor"] = {
                "lambda": top_lam,
                "quality": anchor,
                "metric": quality_of(
                    next(iter(base_bundles.values()))[0].eval_metrics,
                    config.base_task)[0],
            }

            scalable_by_method: dict[str, list[CheckpointBundle]] = {}
            for beta in config.betas:
                method = _method_name(beta)
                _, base_bundle = matched[method]

                if "direct" in config.modes:
                    bundle = train_secondary(config, base_bundle,
                                             lambda_e=0.0, mode="direct", seed=seed)
                    log_entry({"phase": "direct", "beta": beta,
                               **bundle.eval_metrics})
                    bundle.save(out / "checkpoints" / f"seed{seed}" / method /
                                "direct.pt")
                    all_points.append((method, _rd_point(bundle, "direct", config,
                                                         config.secondary_task)))

                if "scalable" in config.modes:
                    bundles = sweep_secondary(config, base_bundle, "scalable",
                                              seed, log=log_entry)
                    scalable_by_method[method] = bundles
                    for b in bundles:
                        b.save(out / "checkpoints" / f"seed{seed}" / method /
                               f"scalable_lam{b.lam:g}.pt")
                        all_points.append((method, _rd_point(b, "scalable", config,
                                                             config.secondary_task)))

                if "standalone" in config.modes and beta > 0:
                    bundles = sweep_secondary(
                        config, matched[method][1], "standalone", seed,
                        scalable_sources=scalable_by_method[method], log=log_entry)
                    for b in bundles:
                        b.save(out / "checkpoints" / f"seed{seed}" / method /
                               f"standalone_lam{b.lam:g}.pt")
                        all_points.append((method, _rd_point(b, "standalone", config,
                                                             config.secondary_task)))

            # Per-seed BD-rates: proposed (largest beta) vs baseline (smallest).
            baseline = _method_name(min(config.betas))
            proposed = _method_name(max(config.betas))
            if baseline != proposed:
                for mode, task in (("base", config.base_task),
                                   ("scalable", config.secondary_task)):
                    if mode != "base" and mode not in config.modes:
                        continue
                    pts = {
                        m: [p for mm, p in all_points
                            if mm == m and p.mode == mode and p.seed == seed]
                        for m in (baseline, proposed)
                    }
                    if min(len(v) for v in pts.values()) >= 4:
                        anchor = metrics_mod.RDCurve.from_points(pts[baseline],
                                                                 pts[baseline][0].metric_kind)
                        test = metrics_mod.RDCurve.from_points(pts[proposed],
                                                               pts[proposed][0].metric_kind)
                        rep = metrics_mod.bd_rate_report(
                            anchor, test, f"{baseline}/{mode}/seed{seed}",
                            f"{proposed}/{mode}/seed{seed}")
                        rep.update({"mode": mode, "seed": seed})
                        bd_reports.append(rep)
                        log_entry(rep)

            vinfo_reports[str(seed)] = _vinfo_report(config, matched, seed)

        manifest["status"] = "completed"
    except BaseException as exc:
        manifest["status"] = f"failed: {type(exc).__name__}: {exc}"
        _write_outputs(out, all_points, bd_reports, vinfo_reports, manifest)
        raise ExperimentFailed(out, exc) from exc

    _write_outputs(out, all_points, bd_reports, vinfo_reports, manifest)
    return out


def _write_outputs(out: Path, all_points, bd_reports, vinfo_reports, manifest):
    # Per-method curves carry the documented CSV schema; the combined file
    # adds a leading method column so rows stay distinguishable.
    methods = sorted({m for m, _ in all_points})
    for method in methods:
        mdir = out / method
        mdir.mkdir(parents=True, exist_ok=True)
        metrics_mod.write_rd_csv([p for m, p in all_points if m == method],
                                 mdir / "curves.csv")
    with open(out / "curves.csv", "w", newline="") as fh:
        import csv as csv_mod

        writer = csv_mod.writer(fh)
        writer.writerow(("method", "mode", "lambda", "seed", "bpp",
                         "metric_kind", "metric_value"))
        for method, p in all_points:
            writer.writerow([method, p.mode, repr(p.lam), p.seed, repr(p.bpp),
                             p.metric_kind, repr(p.quality)])

    metrics_mod.write_bd_rate_reports(bd_reports, out / "bdrate.json")
    (out / "vinfo.json").write_text(json.dumps(vinfo_reports, indent=2,
                                               sort_keys=True) + "\n")
    manifest["finished_unix"] = time.time()
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                  sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# File-level encode / decode through the range coder
# ---------------------------------------------------------------------------


def _encode_order(tensor: torch.Tensor) -> torch.Tensor:
    """Flatten (1, C, h, w) in coding order: raster position major, channel
    minor (the order the sequential decoder regenerates rows in)."""
    return tensor[0].permute(1, 2, 0).reshape(-1)


def encode_image(codec: BaseCodec, x: torch.Tensor) -> tuple[bytes, torch.Tensor, dict]:
    """Encode one image's base latent; returns (container, y_hat, info)."""
    from . import coder as coder_mod
    from .entropy import GaussianFieldParams, export_cdfs, symbol_coding_params
    from .quantizer import round_half_away, symbolize

    codec.eval()
    with torch.no_grad():
        y_hat = round_half_away(codec.analysis(x))
        params = codec.entropy_model(y_hat)
        estimate_bits = float(rate_bits(y_hat, params))
        plane = symbolize(y_hat, params.mu)
        coding = symbol_coding_params(params)

    symbols = _encode_order(plane.symbols).numpy().astype(np.int32)
    s_min = int(min(symbols.min(), -1))
    s_max = int(max(symbols.max(), 1))
    table = export_cdfs(
        GaussianFieldParams(mu=_encode_order(coding.mu), sigma=_encode_order(coding.sigma)),
        (s_min, s_max),
    )
    _, channels, h, w = y_hat.shape
    container = coder_mod.encode_plane(symbols, table, (channels, h, w))
    return container, y_hat, {"estimate_bits": estimate_bits,
                              "payload_bits": coder_mod.peek_header(container)["payload_bits"]}


def decode_latent(codec: BaseCodec, container: bytes) -> torch.Tensor:
    """Sequentially regenerate entropy parameters from the decoded prefix and
    pull symbols from the coder; returns the recovered y_hat plane."""
    from . import coder as coder_mod
    from .entropy import GaussianFieldParams, export_cdfs
    from .quantizer import round_half_away

    codec.eval()
    with coder_mod.DecodeSession(container) as session:
        channels, h, w = session.dims
        expected = codec.analysis.spec.latent_channels
        if channels != expected:
            raise coder_mod.FormatError(
                f"bitstream carries {channels} channels, bundle expects {expected}"
            )
        decoder = codec.entropy_model.start_sequential((1, channels, h, w))
        for _ in decoder.positions():
            p = decoder.next_params()
            offsets = round_half_away(p.mu)
            table = export_cdfs(
                GaussianFieldParams(mu=p.mu - offsets, sigma=p.sigma),
                session.symbol_range,
            )
            symbols = torch.from_numpy(session.next_symbols(table)).to(p.mu.dtype)
            decoder.push(round_half_away(symbols.reshape(p.mu.shape) + p.mu))
        return decoder.plane()


def _reconstruction_head(codec: BaseCodec):
    if codec.aux_head is not None:
        return codec.aux_head
    if codec.base_task == "reconstruction":
        return codec.task_head
    raise ConfigurationError(
        "bundle has no reconstruction path (no auxiliary head and a "
        "non-reconstruction base task)"
    )


def _load_image_tensor(path: str | Path) -> torch.Tensor:
    path = Path(path)
    if path.suffix == ".npy":
        arr = np.load(path).astype(np.float32)
    else:
        arr = data_mod.load_image(path)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ConfigurationError(f"expected a (3, H, W) image, got {arr.shape}")
    if arr.shape[1] % 16 or arr.shape[2] % 16:
        raise ConfigurationError("image dims must be divisible by 16")
    return torch.from_numpy(arr).unsqueeze(0)


def encode_file(image_path: str | Path, bundle_path: str | Path,
                out_path: str | Path) -> dict:
    """Image file -> TCC1 bitstream file, using the bundle's base codec."""
    bundle = CheckpointBundle.load(bundle_path)
    codec = build_base_codec(bundle)
    x = _load_image_tensor(image_path)
    container, _, info = encode_image(codec, x)
    out_path = Path(out_path)
    out_path.write_bytes(container)
    info["path"] = str(out_path)
    return info


def decode_file(bitstream_path: str | Path, bundle_path: str | Path,
                out_path: str | Path) -> dict:
    """TCC1 bitstream file -> reconstruction image (PNG) plus the recovered
    latent; fails closed on corrupt inputs before writing anything."""
    from PIL import Image

    bundle = CheckpointBundle.load(bundle_path)
    codec = build_base_codec(bundle)
    container = Path(bitstream_path).read_bytes()
    y_hat = decode_latent(codec, container)
    with torch.no_grad():
        recon = _reconstruction_head(codec)(y_hat)
    out_path = Path(out_path)
    array = recon[0].numpy()
    png = (np.clip(array, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    Image.fromarray(png.transpose(1, 2, 0)).save(out_path)
    return {"path": str(out_path), "y_hat": y_hat, "reconstruction": array}
