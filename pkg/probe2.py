"""Dev probe: desk-scale learning rate."""
import time
import torch
torch.set_num_threads(1)
from taskcodec.harness import ExperimentConfig, TrainingConfig, train_base
from taskcodec.transforms import TransformSpec
from taskcodec.entropy import EntropyModelSpec

for lr, lam, beta in ((1e-3, 24.0, 0.1), (1e-3, 1.0, 0.1), (1e-3, 120.0, 0.1)):
    cfg = ExperimentConfig(
        dataset_count=128,
        transform=TransformSpec(latent_channels=64, base_width=8, blocks_per_stage=1),
        entropy=EntropyModelSpec(context_channels=24, fusion_channels=32,
                                 side_channels=16, side_blocks=1),
        training=TrainingConfig(batch_size=16, max_epochs=300, patience=25,
                                holdout_fraction=0.25, learning_rate=lr),
    )
    t0 = time.time()
    b = train_base(cfg, lambda_b=lam, beta=beta, seed=0)
    hist = b.history
    print(f"lr={lr} lam={lam}: epochs={len(hist)} time={time.time()-t0:.0f}s "
          f"bpp={b.eval_metrics['bpp']:.4f} rmse={b.eval_metrics['task_distortion']:.4f} "
          f"aux={b.eval_metrics.get('aux_rmse', float('nan')):.4f}", flush=True)
    for m in [hist[i] for i in range(0, len(hist), max(1, len(hist)//6))]:
        print(f"   ep{m['epoch']:>3} val={m['val_total']:.4f} d={m['val_task_distortion']:.4f} "
              f"r={m['val_rate_bits']:.4f}", flush=True)
