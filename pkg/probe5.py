"""Dev probe: dense depth signal vs baseline collapse, across seeds."""
import time

import torch

torch.set_num_threads(1)

from taskcodec.harness import ExperimentConfig, TrainingConfig, train_base
from taskcodec.transforms import TransformSpec
from taskcodec.entropy import EntropyModelSpec

cfg = ExperimentConfig(
    dataset_count=128,
    transform=TransformSpec(latent_channels=64, base_width=8, blocks_per_stage=1),
    entropy=EntropyModelSpec(context_channels=24, fusion_channels=32,
                             side_channels=16, side_blocks=1),
    training=TrainingConfig(batch_size=16, max_epochs=250, patience=40,
                            holdout_fraction=0.25, learning_rate=1e-3),
)
for beta in (0.0, 0.1):
    for seed in (0, 1, 2):
        t0 = time.time()
        b = train_base(cfg, lambda_b=1000.0, beta=beta, seed=seed)
        print(f"beta={beta} seed={seed}: epochs={len(b.history)} "
              f"t={time.time()-t0:.0f}s bpp={b.eval_metrics['bpp']:.4f} "
              f"rmse={b.eval_metrics['task_distortion']:.4f}", flush=True)
