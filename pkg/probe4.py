"""Dev probe: wide-sigma init vs baseline collapse."""
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
    for seed in (0, 1):
        t0 = time.time()
        b = train_base(cfg, lambda_b=1000.0, beta=beta, seed=seed)
        hist = b.history
        print(f"beta={beta} seed={seed}: epochs={len(hist)} t={time.time()-t0:.0f}s "
              f"bpp={b.eval_metrics['bpp']:.4f} rmse={b.eval_metrics['task_distortion']:.4f}", flush=True)
        for m in [hist[i] for i in range(0, len(hist), max(1, len(hist)//5))]:
            print(f"   ep{m['epoch']:>3} d={m['val_task_distortion']:.4f} r={m['val_rate_bits']:.4f}", flush=True)
