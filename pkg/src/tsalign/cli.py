"""Command-line entry points.

    tsalign make-data      synthesize a benchmark-shaped CSV
    tsalign gen-prompts    render prompt JSONL files plus a manifest
    tsalign embed-stub     build stub embedding stores per split
    tsalign train          fit a model, write checkpoint + logs + figures
    tsalign eval           test-split metrics, baseline, figures
    tsalign zeroshot       evaluate a checkpoint on another dataset
    tsalign bench          parameter/speed/memory row
    tsalign inspect-store  validate and describe a store file
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import synth
from .config import ExperimentConfig, config_hash, parse_config
from .evaluate import benchmark, evaluate, zeroshot
from .model import load_checkpoint
from .prompts import dump_jsonl, prompts_for_dataset, template_hash
from .store import LastTokenStore, StoreError
from .train import SPLITS, build_stub_store, load_bundle, store_path, train


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "out", None) is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def cmd_make_data(args) -> int:
    stamps, columns, values, freq, split = synth.generate(
        args.profile, seed=args.seed or 0, length=args.length)
    out = Path(args.out_file)
    out.parent.mkdir(parents=True, exist_ok=True)
    synth.write_csv(str(out), stamps, columns, values)
    print(f"wrote {out} ({len(stamps)} rows, {len(columns)} columns, "
          f"frequency {freq}, split {split})")
    return 0


def cmd_gen_prompts(args) -> int:
    cfg = _load_config(args)
    bundle = load_bundle(cfg)
    out = Path(cfg.out_dir) / "prompts"
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "dataset": cfg.dataset_name,
        "design": cfg.prompt_design,
        "lookback": cfg.lookback,
        "template_version_hash": template_hash(),
        "config_hash": config_hash(cfg),
        "splits": {},
    }
    for split in SPLITS:
        windows = bundle.windows[split]
        records = prompts_for_dataset(bundle.dataset, windows,
                                      cfg.prompt_design)
        name = f"{cfg.dataset_name}_{split}_T{cfg.lookback}_{cfg.prompt_design}"
        path = out / f"{name}.prompts.jsonl"
        dump_jsonl(records, str(path))
        manifest["splits"][split] = {
            "path": str(path),
            "num_windows": len(windows),
            "num_variables": bundle.n_variables,
            "records": len(records),
        }
        print(f"{split}: {len(records)} prompts -> {path}")
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    print(f"manifest -> {out / 'manifest.json'}")
    return 0


def cmd_embed_stub(args) -> int:
    cfg = _load_config(args)
    bundle = load_bundle(cfg)
    for split in SPLITS:
        path = store_path(cfg, split)
        build_stub_store(cfg, bundle, split, path)
        store = LastTokenStore(str(path))
        print(f"{split}: {store.num_windows} x {store.num_variables} x "
              f"{store.embed_dim} -> {path}")
    return 0


def cmd_train(args) -> int:
    from .report import plot_loss_curves

    cfg = _load_config(args)
    result = train(cfg)
    out = Path(cfg.out_dir)
    plot_loss_curves(result.log, out / "loss_curves.png")
    print(f"best epoch {result.best_epoch} "
          f"(val loss {result.best_val_loss:.6f}) in {result.seconds:.1f}s")
    print(f"checkpoint -> {result.checkpoint_path}")
    print(f"log -> {out / 'training_log.jsonl'}")
    print(f"figure -> {out / 'loss_curves.png'}")
    return 0


def _default_ckpt(cfg: ExperimentConfig) -> str:
    return str(Path(cfg.out_dir) /
               f"{cfg.dataset_name}_T{cfg.lookback}_M{cfg.horizon}.ckpt")


def cmd_eval(args) -> int:
    from .report import plot_forecast_grid, write_metrics_csv

    cfg = _load_config(args)
    model, _ = load_checkpoint(args.checkpoint or _default_ckpt(cfg))
    bundle = load_bundle(cfg)
    report = evaluate(cfg, model, bundle, collect_predictions=True)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(report, out / "metrics.csv")
    plot_forecast_grid(bundle.windows["test"], report.predictions,
                       out / "forecast_windows.png")
    if args.dump_predictions:
        np.savez(out / "predictions.npz",
                 **{f"window_{i}": p for i, p in enumerate(report.predictions)})
    print(f"test MSE {report.mse:.6f}  MAE {report.mae:.6f}  "
          f"(persistence {report.baseline_mse:.6f} / {report.baseline_mae:.6f})")
    print(f"metrics -> {out / 'metrics.csv'}")
    print(f"figure -> {out / 'forecast_windows.png'}")
    return 0


def cmd_zeroshot(args) -> int:
    from .report import plot_forecast_grid, write_metrics_csv

    target_cfg = _load_config(args)
    model, _ = load_checkpoint(args.checkpoint)
    report = zeroshot(model, target_cfg, collect_predictions=True)
    out = Path(target_cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(report, out / "zeroshot_metrics.csv")
    bundle = load_bundle(target_cfg)
    plot_forecast_grid(bundle.windows["test"], report.predictions,
                       out / "zeroshot_windows.png")
    print(f"zero-shot MSE {report.mse:.6f}  MAE {report.mae:.6f} on "
          f"{target_cfg.dataset_name}")
    print(f"metrics -> {out / 'zeroshot_metrics.csv'}")
    return 0


def cmd_bench(args) -> int:
    from .report import write_bench_csv

    cfg = _load_config(args)
    model, _ = load_checkpoint(args.checkpoint or _default_ckpt(cfg))
    row = benchmark(cfg, model, min_iters=args.iters)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_bench_csv(row, out / "bench.csv")
    print(f"params {row.param_count}  {row.seconds_per_iter * 1e3:.3f} ms/iter "
          f"over {row.iterations} iters  peak rss {row.peak_rss_mib:.0f} MiB")
    print(f"table -> {out / 'bench.csv'}")
    return 0


def cmd_inspect_store(args) -> int:
    try:
        store = LastTokenStore(args.store)
    except (StoreError, OSError) as exc:
        if args.json:
            print(json.dumps({"valid": False, "error": str(exc)}))
        else:
            print(f"INVALID: {exc}")
        return 1
    info = {
        "valid": True,
        "path": args.store,
        "num_windows": store.num_windows,
        "num_variables": store.num_variables,
        "embed_dim": store.embed_dim,
        "checksum_ok": True,
    }
    if args.json:
        print(json.dumps(info))
    else:
        for key, value in info.items():
            print(f"{key}: {value}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsalign",
                                     description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="synthesize a benchmark-shaped CSV")
    p.add_argument("--profile", required=True, choices=synth.PROFILES)
    p.add_argument("--out-file", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--length", type=int, default=None)
    p.set_defaults(func=cmd_make_data)

    def experiment_command(name, func, help_text, checkpoint=False,
                           checkpoint_required=False):
        cp = sub.add_parser(name, help=help_text)
        cp.add_argument("--config", required=True)
        cp.add_argument("--seed", type=int, default=None)
        cp.add_argument("--out", default=None)
        if checkpoint:
            cp.add_argument("--checkpoint", required=checkpoint_required,
                            default=None)
        cp.set_defaults(func=func)
        return cp

    experiment_command("gen-prompts", cmd_gen_prompts,
                       "render prompt JSONL files and a manifest")
    experiment_command("embed-stub", cmd_embed_stub,
                       "write stub embedding stores for every split")
    experiment_command("train", cmd_train, "train and checkpoint a model")
    p = experiment_command("eval", cmd_eval, "evaluate on the test split",
                           checkpoint=True)
    p.add_argument("--dump-predictions", action="store_true")
    experiment_command("zeroshot", cmd_zeroshot,
                       "evaluate a source checkpoint on a target dataset",
                       checkpoint=True, checkpoint_required=True)
    p = experiment_command("bench", cmd_bench, "efficiency measurements",
                           checkpoint=True)
    p.add_argument("--iters", type=int, default=100)

    p = sub.add_parser("inspect-store", help="validate and describe a store")
    p.add_argument("store")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_inspect_store)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
