"""Command-line interface.

Every training command is driven by a JSON config (see ExperimentConfig)
plus repeatable `--set key=value` overrides. TASKCODEC_DETERMINISTIC=1
forces deterministic mode: single-threaded torch with deterministic
algorithms, at some speed cost.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import harness, metrics, vinfo
from .harness import CheckpointBundle, ExperimentConfig


def _apply_determinism() -> None:
    if harness.deterministic_mode():
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


def _load_config(args) -> ExperimentConfig:
    config = (ExperimentConfig.from_json(args.config) if args.config
              else ExperimentConfig())
    if args.set:
        config = config.with_overrides(args.set)
    return config


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON experiment config")
    parser.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE", help="dotted config override")


def _cmd_train_base(args) -> int:
    config = _load_config(args)
    init = CheckpointBundle.load(args.init) if args.init else None
    bundle = harness.train_base(config, args.lambda_b, args.beta, args.seed,
                                init=init)
    path = bundle.save(args.out)
    print(json.dumps({"checkpoint": str(path), "hash": bundle.content_hash,
                      **bundle.eval_metrics}, indent=2))
    return 0


def _cmd_train_secondary(args) -> int:
    config = _load_config(args)
    base = CheckpointBundle.load(args.base)
    source = CheckpointBundle.load(args.scalable_source) if args.scalable_source else None
    bundle = harness.train_secondary(config, base, args.lambda_e, args.mode,
                                     args.seed, scalable_source=source)
    path = bundle.save(args.out)
    print(json.dumps({"checkpoint": str(path), "hash": bundle.content_hash,
                      **bundle.eval_metrics}, indent=2))
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    if args.dry_run:
        for line in harness.experiment_plan(config):
            print(line)
        return 0
    out = harness.run_experiment(config, out_dir=args.out)
    print(f"experiment written to {out}")
    return 0


def _cmd_eval(args) -> int:
    config = _load_config(args)
    bundle = CheckpointBundle.load(args.checkpoint)
    _, val = harness.build_splits(config)
    tensors = harness._samples_to_tensors(val)
    if bundle.kind == "base":
        codec = harness.build_base_codec(bundle)
        result = harness.evaluate_base(codec, tensors, bundle.task)
    else:
        raise SystemExit("eval supports base bundles; secondary metrics are "
                         "recorded in their bundles at training time")
    print(json.dumps(result, indent=2))
    return 0


def _cmd_encode(args) -> int:
    info = harness.encode_file(args.image, args.bundle, args.out)
    print(json.dumps({k: v for k, v in info.items() if k != "y_hat"}, indent=2))
    return 0


def _cmd_decode(args) -> int:
    info = harness.decode_file(args.bitstream, args.bundle, args.out)
    print(json.dumps({"path": info["path"]}, indent=2))
    return 0


def _cmd_bdrate(args) -> int:
    def curve(path):
        points = metrics.read_rd_csv(path)
        if args.mode:
            points = [p for p in points if p.mode == args.mode]
        if args.seed is not None:
            points = [p for p in points if p.seed == args.seed]
        return metrics.RDCurve.from_points(points, points[0].metric_kind)

    report = metrics.bd_rate_report(curve(args.anchor), curve(args.test),
                                    str(args.anchor), str(args.test))
    print(json.dumps(report, indent=2))
    return 0


def _cmd_vinfo(args) -> int:
    blob = np.load(args.pairs)
    family = vinfo.PredictiveFamilySpec(kind=args.family, steps=args.steps)
    report = vinfo.estimate_v_information(blob["y"], blob["z"], family,
                                          seed=args.seed)
    print(json.dumps(report.to_json_dict(), indent=2))
    return 0


def _cmd_report(args) -> int:
    exp = Path(args.experiment)
    manifest = json.loads((exp / "manifest.json").read_text())
    print(f"status: {manifest['status']}")
    for seed, info in sorted(manifest.get("seeds", {}).items()):
        if "matched_base_bpp" in info:
            matched = ", ".join(f"{m}={b:.4f}" for m, b in
                                sorted(info["matched_base_bpp"].items()))
            print(f"seed {seed}: matched base bpp {matched}")
    bd_path = exp / "bdrate.json"
    if bd_path.exists():
        for entry in json.loads(bd_path.read_text()):
            print(f"BD-rate [{entry['mode']} seed {entry['seed']}] "
                  f"{entry['test_id']} vs {entry['anchor_id']}: "
                  f"{entry['bd_rate_percent']}")
    vinfo_path = exp / "vinfo.json"
    if vinfo_path.exists():
        reports = json.loads(vinfo_path.read_text())
        for seed, rep in sorted(reports.items()):
            per = {m: round(r["i_v"], 4) for m, r in rep["per_method"].items()}
            print(f"vinfo seed {seed}: {per} (ordering {rep['ordering_by_i_v']})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="taskcodec")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-base", help="train one base codec point")
    _add_config_args(p)
    p.add_argument("--lambda-b", type=float, required=True)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", type=Path, help="warm-start checkpoint")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=_cmd_train_base)

    p = sub.add_parser("train-secondary", help="train one secondary point")
    _add_config_args(p)
    p.add_argument("--base", type=Path, required=True)
    p.add_argument("--lambda-e", type=float, required=True)
    p.add_argument("--mode", choices=("direct", "scalable", "standalone"),
                   required=True)
    p.add_argument("--scalable-source", type=Path,
                   help="proposed-method scalable checkpoint (standalone)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=_cmd_train_secondary)

    p = sub.add_parser("sweep", help="run the full two-phase experiment")
    _add_config_args(p)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--dry-run", action="store_true",
                   help="print the execution plan without training")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the holdout")
    _add_config_args(p)
    p.add_argument("checkpoint", type=Path)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("encode", help="image file -> TCC1 bitstream")
    p.add_argument("image", type=Path)
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=_cmd_encode)

    p = sub.add_parser("decode", help="TCC1 bitstream -> reconstruction PNG")
    p.add_argument("bitstream", type=Path)
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=_cmd_decode)

    p = sub.add_parser("bdrate", help="BD-rate between two curve CSVs")
    p.add_argument("anchor", type=Path)
    p.add_argument("test", type=Path)
    p.add_argument("--mode", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=_cmd_bdrate)

    p = sub.add_parser("vinfo", help="V-information estimate from an .npz of (y, z)")
    p.add_argument("pairs", type=Path)
    p.add_argument("--family", choices=vinfo.FAMILY_KINDS, default="linear_probe")
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_vinfo)

    p = sub.add_parser("report", help="summarize an experiment directory")
    p.add_argument("experiment", type=Path)
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    _apply_determinism()
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (harness.ConfigurationError, harness.MatchedRateError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
