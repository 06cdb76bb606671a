"""Train a miniature base codec for a minute, then push one image through
the real range coder (if built) and verify the decode matches memory.

This is the whole pipeline in miniature: analysis -> straight-through
rounding -> autoregressive entropy model -> (optionally) bitstream.
"""

import time
from pathlib import Path

import torch

torch.set_num_threads(1)

from taskcodec import coder, data, harness
from taskcodec.entropy import EntropyModelSpec
from taskcodec.harness import ExperimentConfig, TrainingConfig
from taskcodec.transforms import TransformSpec

config = ExperimentConfig(
    dataset_count=48,
    transform=TransformSpec(latent_channels=32, base_width=8, blocks_per_stage=1),
    entropy=EntropyModelSpec(context_channels=16, fusion_channels=24,
                             side_channels=12, side_blocks=1),
    training=TrainingConfig(batch_size=16, max_epochs=40, patience=40,
                            holdout_fraction=0.25, learning_rate=1e-3),
)

t0 = time.time()
bundle = harness.train_base(config, lambda_b=300.0, beta=0.1, seed=0)
print(f"trained {len(bundle.history)} epochs in {time.time() - t0:.0f}s; "
      f"holdout: bpp={bundle.eval_metrics['bpp']:.3f} "
      f"depth_rmse={bundle.eval_metrics['task_distortion']:.3f} "
      f"aux_recon_rmse={bundle.eval_metrics['aux_rmse']:.3f}")

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)
bundle_path = bundle.save(out / "tiny_base.pt")

if coder.available():
    codec = harness.build_base_codec(bundle)
    sample = data.generate_sample(123, 0, 64, 4)
    x = torch.from_numpy(sample.image).unsqueeze(0)
    container, y_hat, info = harness.encode_image(codec, x)
    print(f"encoded: {info['payload_bits']} bits on the wire vs "
          f"{info['estimate_bits']:.1f} bits estimated")
    recovered = harness.decode_latent(codec, container)
    print("decoded latent bit-exact:", torch.equal(recovered, y_hat))
else:
    print("range coder not built; skipping the bitstream leg "
          "(cd rangecoder && npm install && npm run build)")
