"""Dev probe: does trunk width close the beta base-task quality gap?"""
import time
import torch
torch.set_num_threads(1)
from taskcodec.harness import ExperimentConfig, TrainingConfig, sweep_base
from taskcodec.transforms import TransformSpec
from taskcodec.entropy import EntropyModelSpec

cfg = ExperimentConfig(
    dataset_count=128,
    lambda_b_grid=(1000.0, 24.0),
    transform=TransformSpec(latent_channels=64, base_width=16, blocks_per_stage=1),
    entropy=EntropyModelSpec(context_channels=48, fusion_channels=64,
                             side_channels=24, side_blocks=1),
    training=TrainingConfig(batch_size=16, max_epochs=280, patience=30,
                            holdout_fraction=0.25, learning_rate=1e-3),
)
for beta in (0.0, 0.1):
    t0 = time.time()
    for b in sweep_base(cfg, beta, seed=0):
        print(f"beta={beta} lam={b.lam:<6g} bpp={b.eval_metrics['bpp']:.4f} "
              f"rmse={b.eval_metrics['task_distortion']:.4f} "
              f"aux={b.eval_metrics.get('aux_rmse')} epochs={len(b.history)}", flush=True)
    print(f"  took {time.time()-t0:.0f}s", flush=True)
