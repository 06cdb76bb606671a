"""Deterministic synthetic "shapes world" dataset.

Each sample is an RGB image of 1-5 colored geometric shapes (disk, rectangle,
triangle) over a smooth noise background, together with two aligned per-pixel
targets: a depth field in [0, 1] (a faint floor ramp plus per-shape radial
gradients, nearer shapes painted last), and a segmentation map labeling
pixels by shape type (0 = background). Shape colors are independent of depth,
so reconstruction genuinely needs information the depth task could discard.

Samples are pure functions of (dataset_seed, sample_id): regeneration is
bit-identical, so datasets are described by a small manifest and never stored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy import ndimage

GENERATOR_VERSION = 1

# Shape types, in class-id order (class id = 1 + index, folded into num_classes).
_SHAPE_TYPES = ("disk", "rectangle", "triangle")


@dataclass(frozen=True)
class ShapesSample:
    """One generated sample: image (3,S,S), depth (S,S), segmentation (S,S)."""

    image: np.ndarray
    depth: np.ndarray
    segmentation: np.ndarray
    sample_id: int

    def __post_init__(self):
        if self.image.shape[1:] != self.depth.shape or self.depth.shape != self.segmentation.shape:
            raise ValueError("image, depth and segmentation must share spatial dims")

    @property
    def size(self) -> int:
        return self.image.shape[-1]


@dataclass(frozen=True)
class DatasetManifest:
    """Declarative description of a dataset; samples regenerate on demand."""

    dataset_seed: int
    count: int
    size: int
    num_classes: int
    generator_version: int = GENERATOR_VERSION

    def __post_init__(self):
        if self.size % 16 != 0:
            raise ConfigurationError(
                f"size must be divisible by 16 (4 factor-2 scalings), got {self.size}"
            )
        if self.num_classes < 2:
            raise ConfigurationError("num_classes must be >= 2")
        if self.count < 1:
            raise ConfigurationError("count must be >= 1")

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "DatasetManifest":
        return cls(**json.loads(Path(path).read_text()))


class ConfigurationError(ValueError):
    """Raised for invalid dataset / experiment configuration."""


def _sample_rng(dataset_seed: int, sample_id: int) -> np.random.Generator:
    # The generator version participates in the seed so that any future change
    # to the generation recipe is an explicit, versioned break.
    return np.random.default_rng([GENERATOR_VERSION, dataset_seed, sample_id])


def _smooth_background(rng: np.random.Generator, size: int) -> np.ndarray:
    """Low-frequency RGB noise: coarse grid upsampled bilinearly."""
    coarse = rng.uniform(0.15, 0.7, size=(3, size // 16, size // 16))
    bg = ndimage.zoom(coarse, (1, 16, 16), order=1, mode="nearest", grid_mode=True)
    # Gentle global gradient so the background is not statistically flat.
    ramp = np.linspace(0.0, rng.uniform(0.0, 0.15), size, dtype=np.float64)
    if rng.random() < 0.5:
        bg = bg + ramp[None, None, :]
    else:
        bg = bg + ramp[None, :, None]
    return np.clip(bg, 0.0, 1.0)


def _shape_mask(kind: str, size: int, cx: float, cy: float, radius: float,
                angle: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    u = (xx - cx) * np.cos(angle) + (yy - cy) * np.sin(angle)
    v = -(xx - cx) * np.sin(angle) + (yy - cy) * np.cos(angle)
    if kind == "disk":
        return (xx - cx) ** 2 + (yy - cy) ** 2 <= radius**2
    if kind == "rectangle":
        return (np.abs(u) <= radius) & (np.abs(v) <= 0.65 * radius)
    if kind == "triangle":
        # Isoceles triangle pointing along +v, inscribed in the radius.
        return (v <= 0.8 * radius) & (v >= -0.8 * radius) & (
            np.abs(u) <= 0.75 * (0.8 * radius - v)
        )
    raise ValueError(f"unknown shape kind {kind!r}")


def generate_sample(dataset_seed: int, sample_id: int, size: int,
                    num_classes: int) -> ShapesSample:
    """Generate one sample, bit-identically reproducible from its arguments."""
    rng = _sample_rng(dataset_seed, sample_id)

    image = _smooth_background(rng, size)
    # Faint floor ramp: every background pixel carries a little depth signal.
    ramp = np.linspace(0.02, 0.14, size, dtype=np.float64)
    depth = np.tile(ramp[:, None], (1, size))
    segmentation = np.zeros((size, size), dtype=np.int64)

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    n_shapes = int(rng.integers(1, 6))
    # Proximity in (0, 1]: nearer shapes are drawn later and occlude.
    proximities = np.sort(rng.uniform(0.3, 1.0, size=n_shapes))
    for proximity in proximities:
        kind_idx = int(rng.integers(0, len(_SHAPE_TYPES)))
        kind = _SHAPE_TYPES[kind_idx]
        radius = rng.uniform(size / 8.0, size / 4.0)
        cx = rng.uniform(0.15 * size, 0.85 * size)
        cy = rng.uniform(0.15 * size, 0.85 * size)
        angle = rng.uniform(0.0, 2.0 * np.pi)
        color = rng.uniform(0.0, 1.0, size=3)

        mask = _shape_mask(kind, size, cx, cy, radius, angle)
        if not mask.any():
            continue

        # Radial gradient: peaks at the shape center, falls off with distance
        # scaled by the shape size. Defines both depth and a shading term.
        dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
        radial = np.clip(1.0 - dist / (2.0 * radius), 0.0, 1.0)
        shape_depth = np.clip(0.15 + 0.85 * proximity * radial, 0.0, 1.0)

        shading = 0.55 + 0.45 * radial
        image[:, mask] = np.clip(color[:, None] * shading[None, mask], 0.0, 1.0)
        depth[mask] = shape_depth[mask]
        segmentation[mask] = 1 + kind_idx % (num_classes - 1)

    return ShapesSample(
        image=image.astype(np.float32),
        depth=depth.astype(np.float32),
        segmentation=segmentation,
        sample_id=sample_id,
    )


def generate_dataset(dataset_seed: int, count: int, size: int,
                     num_classes: int) -> list[ShapesSample]:
    """Generate `count` samples; deterministic in all arguments."""
    manifest = DatasetManifest(dataset_seed, count, size, num_classes)
    return [
        generate_sample(manifest.dataset_seed, i, manifest.size, manifest.num_classes)
        for i in range(count)
    ]


class ShapesDataset:
    """Lazy view over a manifest; samples regenerate on access."""

    def __init__(self, manifest: DatasetManifest):
        self.manifest = manifest

    def __len__(self) -> int:
        return self.manifest.count

    def __getitem__(self, index: int) -> ShapesSample:
        if not 0 <= index < self.manifest.count:
            raise IndexError(index)
        m = self.manifest
        return generate_sample(m.dataset_seed, index, m.size, m.num_classes)


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentationPolicy:
    """Random horizontal flips plus color jitter (half-range factors).

    Flips are geometric and applied to image and both targets; jitter is
    photometric and touches the image only. Jitter magnitudes are artifact
    defaults, exposed here rather than claimed from any external source.
    """

    horizontal_flip_prob: float = 0.5
    jitter_brightness: float = 0.1
    jitter_contrast: float = 0.1
    jitter_saturation: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.horizontal_flip_prob <= 1.0:
            raise ConfigurationError("horizontal_flip_prob must be in [0, 1]")
        for name in ("jitter_brightness", "jitter_contrast", "jitter_saturation"):
            if getattr(self, name) < 0.0:
                raise ConfigurationError(f"{name} must be >= 0")

    @property
    def is_identity(self) -> bool:
        return (
            self.horizontal_flip_prob == 0.0
            and self.jitter_brightness == 0.0
            and self.jitter_contrast == 0.0
            and self.jitter_saturation == 0.0
        )


_GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def augment(sample: ShapesSample, policy: AugmentationPolicy,
            rng: np.random.Generator) -> ShapesSample:
    """Apply the policy using the caller-owned RNG stream.

    Operations with zero magnitude are skipped entirely (no RNG draws, no
    floating-point round-trips), so the identity policy returns the sample
    bit-exactly and callers control stream splitting.
    """
    image = sample.image
    depth = sample.depth
    segmentation = sample.segmentation

    if policy.horizontal_flip_prob > 0.0 and rng.random() < policy.horizontal_flip_prob:
        image = image[:, :, ::-1].copy()
        depth = depth[:, ::-1].copy()
        segmentation = segmentation[:, ::-1].copy()

    if policy.jitter_brightness > 0.0:
        factor = 1.0 + rng.uniform(-policy.jitter_brightness, policy.jitter_brightness)
        image = np.clip(image * max(factor, 0.0), 0.0, 1.0).astype(np.float32)

    if policy.jitter_contrast > 0.0:
        factor = 1.0 + rng.uniform(-policy.jitter_contrast, policy.jitter_contrast)
        mean_gray = float(np.einsum("chw,c->", image.astype(np.float64), _GRAY_WEIGHTS)
                          / (image.shape[1] * image.shape[2]))
        image = np.clip((image - mean_gray) * max(factor, 0.0) + mean_gray,
                        0.0, 1.0).astype(np.float32)

    if policy.jitter_saturation > 0.0:
        factor = 1.0 + rng.uniform(-policy.jitter_saturation, policy.jitter_saturation)
        gray = np.einsum("chw,c->hw", image.astype(np.float64), _GRAY_WEIGHTS)
        image = np.clip(gray[None] + (image - gray[None]) * max(factor, 0.0),
                        0.0, 1.0).astype(np.float32)

    return ShapesSample(image=image, depth=depth, segmentation=segmentation,
                        sample_id=sample.sample_id)


# ---------------------------------------------------------------------------
# Image-folder ingestion (reconstruction-only path; no targets)
# ---------------------------------------------------------------------------


def load_image(path: str | Path) -> np.ndarray:
    """Load an RGB file as a (3, H, W) float32 array in [0, 1]."""
    from PIL import Image

    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def load_image_folder(folder: str | Path,
                      extensions: tuple[str, ...] = (".png", ".jpg", ".jpeg")) -> list[np.ndarray]:
    """Load every RGB file in a folder, sorted by name. Targets are absent,
    so only reconstruction tasks may run on this data."""
    folder = Path(folder)
    paths = sorted(p for p in folder.iterdir() if p.suffix.lower() in extensions)
    if not paths:
        raise ConfigurationError(f"no image files found under {folder}")
    return [load_image(p) for p in paths]
