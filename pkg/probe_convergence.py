"""Dev probe: how long until the base codec actually trades rate for
distortion at the paper's fixed learning rate, and where quality lands."""
import time

import torch
torch.set_num_threads(1)

from taskcodec.harness import ExperimentConfig, TrainingConfig, train_base
from taskcodec.transforms import TransformSpec
from taskcodec.entropy import EntropyModelSpec

cfg = ExperimentConfig(
    dataset_count=128,  # 96 train / 32 holdout at 0.25
    transform=TransformSpec(latent_channels=64, base_width=8, blocks_per_stage=1),
    entropy=EntropyModelSpec(context_channels=24, fusion_channels=32,
                             side_channels=16, side_blocks=1),
    training=TrainingConfig(batch_size=16, max_epochs=400, patience=30,
                            holdout_fraction=0.25),
)

for lam in (24.0, 1.0):
    t0 = time.time()
    b = train_base(cfg, lambda_b=lam, beta=0.0, seed=0)
    dt = time.time() - t0
    hist = b.history
    marks = [hist[i] for i in range(0, len(hist), max(1, len(hist) // 8))]
    print(f"lam={lam}: epochs={len(hist)} time={dt:.0f}s "
          f"bpp={b.eval_metrics['bpp']:.4f} rmse={b.eval_metrics['task_distortion']:.4f}",
          flush=True)
    for m in marks:
        print(f"   ep{m['epoch']:>3} train={m['train_total']:.4f} val={m['val_total']:.4f} "
              f"d={m['val_task_distortion']:.4f} r={m['val_rate_bits']:.4f}", flush=True)
