"""Calibration run: one seed, both methods, full pipeline. Dev-only script."""
import time

import torch
torch.set_num_threads(1)

from taskcodec.harness import (ExperimentConfig, TrainingConfig, sweep_base,
                               select_matched_rate, train_secondary, sweep_secondary)
from taskcodec.transforms import TransformSpec
from taskcodec.entropy import EntropyModelSpec

cfg = ExperimentConfig(
    dataset_count=128,
    lambda_b_grid=(1000.0, 450.0, 200.0, 90.0),
    lambda_e_grid=(1000.0, 450.0, 200.0, 90.0),
    transform=TransformSpec(latent_channels=64, base_width=8, blocks_per_stage=1),
    entropy=EntropyModelSpec(context_channels=24, fusion_channels=32,
                             side_channels=16, side_blocks=1),
    training=TrainingConfig(batch_size=16, max_epochs=280, patience=30,
                            holdout_fraction=0.25, learning_rate=1e-3),
)

t0 = time.time()
curves = {}
bundles = {}
for beta in (0.0, 0.1):
    print(f"=== sweep_base beta={beta} ===", flush=True)
    bs = sweep_base(cfg, beta, seed=0, log=lambda e: print(f"  {e}", flush=True))
    bundles[beta] = bs
    curves[f"beta{beta:g}"] = [(b.eval_metrics["bpp"], b) for b in bs]
    for b in bs:
        print(f"  lam={b.lam:<6g} bpp={b.eval_metrics['bpp']:.4f} "
              f"depth_rmse={b.eval_metrics['task_distortion']:.4f} "
              f"aux={b.eval_metrics.get('aux_rmse')} epochs={len(b.history)}", flush=True)
print(f"phase1 took {time.time()-t0:.0f}s", flush=True)

matched = select_matched_rate(curves, 0.15)
for m, (bpp, b) in matched.items():
    print(f"matched {m}: lam={b.lam} bpp={bpp:.4f}", flush=True)

t1 = time.time()
for m, (bpp, b) in matched.items():
    d = train_secondary(cfg, b, 0.0, "direct", seed=0)
    print(f"direct {m}: recon_rmse={d.eval_metrics['task_distortion']:.4f} "
          f"psnr={d.eval_metrics['psnr']:.2f} epochs={len(d.history)}", flush=True)
print(f"direct took {time.time()-t1:.0f}s", flush=True)

t2 = time.time()
scal = {}
for m, (bpp, b) in matched.items():
    print(f"=== scalable on {m} ===", flush=True)
    ss = sweep_secondary(cfg, b, "scalable", seed=0)
    scal[m] = ss
    for s in ss:
        print(f"  lam={s.lam:<6g} enh_bpp={s.eval_metrics['enh_bpp']:.4f} "
              f"total_bpp={s.eval_metrics['enh_bpp']+s.eval_metrics['base_bpp']:.4f} "
              f"rmse={s.eval_metrics['task_distortion']:.4f} "
              f"psnr={s.eval_metrics['psnr']:.2f} epochs={len(s.history)}", flush=True)
print(f"scalable took {time.time()-t2:.0f}s", flush=True)

t3 = time.time()
m = "beta0.1"
ss = sweep_secondary(cfg, matched[m][1], "standalone", seed=0,
                     scalable_sources=scal[m])
for s in ss:
    print(f"standalone lam={s.lam:<6g} enh_bpp={s.eval_metrics['enh_bpp']:.4f} "
          f"rmse={s.eval_metrics['task_distortion']:.4f} epochs={len(s.history)}", flush=True)
print(f"standalone took {time.time()-t3:.0f}s; total {time.time()-t0:.0f}s", flush=True)
