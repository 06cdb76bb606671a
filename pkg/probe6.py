"""Dev probe: does a wide descending lambda grid actually sweep the rate?"""
import time
import torch
torch.set_num_threads(1)
from taskcodec.harness import ExperimentConfig, TrainingConfig, sweep_base
from taskcodec.transforms import TransformSpec
from taskcodec.entropy import EntropyModelSpec

cfg = ExperimentConfig(
    dataset_count=128,
    lambda_b_grid=(1000.0, 120.0, 24.0, 6.0),
    transform=TransformSpec(latent_channels=64, base_width=8, blocks_per_stage=1),
    entropy=EntropyModelSpec(context_channels=24, fusion_channels=32,
                             side_channels=16, side_blocks=1),
    training=TrainingConfig(batch_size=16, max_epochs=280, patience=30,
                            holdout_fraction=0.25, learning_rate=1e-3),
)
for beta in (0.0, 0.1):
    t0 = time.time()
    bundles = sweep_base(cfg, beta, seed=0)
    for b in bundles:
        print(f"beta={beta} lam={b.lam:<6g} bpp={b.eval_metrics['bpp']:.4f} "
              f"rmse={b.eval_metrics['task_distortion']:.4f} "
              f"aux={b.eval_metrics.get('aux_rmse')} epochs={len(b.history)}", flush=True)
    print(f"  sweep took {time.time()-t0:.0f}s", flush=True)
