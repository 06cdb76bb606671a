"""Dev probe: escape the dead-latent basin for the beta=0 baseline."""
import time
import torch
torch.set_num_threads(1)
from taskcodec.harness import ExperimentConfig, TrainingConfig, train_base, BaseCodec, build_splits, _samples_to_tensors
from taskcodec.transforms import TransformSpec
from taskcodec.entropy import EntropyModelSpec

def gain_patch(codec, gain):
    with torch.no_grad():
        codec.analysis.stages[-1].down.weight.mul_(gain)

import taskcodec.harness as H
orig_train_base = H.train_base

for name, lr, gain in (("lr2e-3", 2e-3, 1.0), ("lr1e-3+gain4", 1e-3, 4.0), ("lr2e-3+gain4", 2e-3, 4.0)):
    cfg = ExperimentConfig(
        dataset_count=128,
        transform=TransformSpec(latent_channels=64, base_width=8, blocks_per_stage=1),
        entropy=EntropyModelSpec(context_channels=24, fusion_channels=32,
                                 side_channels=16, side_blocks=1),
        training=TrainingConfig(batch_size=16, max_epochs=150, patience=40,
                                holdout_fraction=0.25, learning_rate=lr),
    )
    # monkey-patch init gain inside train_base by wrapping BaseCodec
    orig_init = BaseCodec.__init__
    def patched(self, *a, __gain=gain, **k):
        orig_init(self, *a, **k)
        with torch.no_grad():
            self.analysis.stages[-1].down.weight.mul_(__gain)
    BaseCodec.__init__ = patched
    t0 = time.time()
    try:
        b = orig_train_base(cfg, lambda_b=1000.0, beta=0.0, seed=0)
    finally:
        BaseCodec.__init__ = orig_init
    hist = b.history
    print(f"{name}: epochs={len(hist)} t={time.time()-t0:.0f}s bpp={b.eval_metrics['bpp']:.4f} "
          f"rmse={b.eval_metrics['task_distortion']:.4f}", flush=True)
    for m in [hist[i] for i in range(0, len(hist), max(1, len(hist)//5))]:
        print(f"   ep{m['epoch']:>3} d={m['val_task_distortion']:.4f} r={m['val_rate_bits']:.4f}", flush=True)
