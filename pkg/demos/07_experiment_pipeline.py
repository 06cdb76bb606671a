"""The full two-phase experiment, in miniature.

Runs both methods (beta = 0 baseline, beta = 0.1 proposed) through base
training, matched-rate selection, and all three secondary pipelines on a
deliberately tiny configuration, then prints the artifact set. The
acceptance-scale version of this config lives in configs/acceptance.json;
run it with `taskcodec sweep --config configs/acceptance.json --out runs/full`.
"""

from pathlib import Path

import torch

torch.set_num_threads(1)

from taskcodec.data import AugmentationPolicy
from taskcodec.entropy import EntropyModelSpec
from taskcodec.harness import ExperimentConfig, TrainingConfig, run_experiment
from taskcodec.transforms import TransformSpec

out = Path(__file__).parent / "out" / "mini_experiment"

config = ExperimentConfig(
    dataset_count=32,
    image_size=32,
    lambda_b_grid=(400.0, 100.0),
    lambda_e_grid=(400.0, 100.0),
    betas=(0.0, 0.1),
    modes=("direct", "scalable", "standalone"),
    seeds=(0,),
    transform=TransformSpec(latent_channels=16, base_width=4, blocks_per_stage=0),
    entropy=EntropyModelSpec(context_channels=8, fusion_channels=12,
                             side_channels=8, side_blocks=1, kernel_size=3),
    training=TrainingConfig(batch_size=8, max_epochs=25, patience=6,
                            holdout_fraction=0.25, learning_rate=1e-3),
    augmentation=AugmentationPolicy(0.5, 0.1, 0.1, 0.1),
    matched_rate_tolerance=3.0,  # tiny models; keep the demo from aborting
    output_dir=str(out),
)

result = run_experiment(config, log=lambda e: print(f"  {e}"))
print("\nartifacts:")
for name in ("curves.csv", "bdrate.json", "vinfo.json", "manifest.json"):
    print(f"  {result / name}")
print("\nsummary via the CLI:  taskcodec report", result)
