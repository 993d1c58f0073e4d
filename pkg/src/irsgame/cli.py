"""Command-line entry point.

Subcommands:
    pretrain        offline PPO pretraining for every coalition partition
    run             online switch-operation stage on trained checkpoints
    baseline        frozen-partition runs (--policy lfi|efi)
    eval-stability  per-slot stability / NE-gain report over a recorded run
    emit-plots      re-emit plot series from a recorded run

Common flags: --config <yaml>, --seed <int>, --out <dir>, --checkpoint-dir <dir>.
Without --seed the first entry of the config's seed list is used.
"""

import argparse
import json
import os
import sys

from .config import default_config, load_config, save_config
from .harness import RunRecord, emit_outputs, eval_stability, offline_pretrain, online_run, run_baseline


def _add_common(parser):
    parser.add_argument("--config", type=str, default=None, help="YAML config path")
    parser.add_argument("--seed", type=int, default=None, help="master seed (overrides config list)")
    parser.add_argument("--out", type=str, default="out", help="output directory")
    parser.add_argument("--checkpoint-dir", type=str, default="checkpoints")


def _load(args):
    cfg = load_config(args.config) if args.config else default_config()
    seed = args.seed if args.seed is not None else cfg.run.seeds[0]
    return cfg, seed


def _read_record(args) -> RunRecord:
    if args.record:
        path = args.record
    else:
        path = os.path.join(args.out, f"record_{args.mode}_s{args.seed_for_record}.csv")
    with open(path, "r", encoding="utf-8") as fh:
        return RunRecord.from_csv_text(fh.read())


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="irsgame",
                                     description="Three-party IRS coalition game simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="offline pretraining for both partitions")
    _add_common(p)

    p = sub.add_parser("run", help="online switch-operation stage")
    _add_common(p)

    p = sub.add_parser("baseline", help="frozen-partition baseline run")
    _add_common(p)
    p.add_argument("--policy", choices=("lfi", "efi"), required=True)

    p = sub.add_parser("eval-stability", help="stability/NE report for a recorded run")
    _add_common(p)
    p.add_argument("--record", type=str, default=None, help="record CSV (default: from --out)")
    p.add_argument("--mode", choices=("proposed", "lfi", "efi"), default="proposed")

    p = sub.add_parser("emit-plots", help="re-emit plot series from a recorded run")
    _add_common(p)
    p.add_argument("--record", type=str, default=None)
    p.add_argument("--mode", choices=("proposed", "lfi", "efi"), default="proposed")

    p = sub.add_parser("write-config", help="write the default config YAML and exit")
    p.add_argument("--out", type=str, default="config.yaml")

    args = parser.parse_args(argv)

    if args.command == "write-config":
        save_config(default_config(), args.out)
        print(f"wrote {args.out}")
        return 0

    cfg, seed = _load(args)

    if args.command == "pretrain":
        result = offline_pretrain(cfg, seed, args.checkpoint_dir, out_dir=args.out)
        curves = result.curves
        final = curves.rows[-1] if curves.rows else []
        print(f"pretrain done: {len(curves.rows)} episodes, seed {seed}, "
              f"checkpoints in {args.checkpoint_dir}")
        if final:
            print("final episode per-party utilities: "
                  f"L={final[-3]:.4f} E={final[-2]:.4f} R={final[-1]:.4f}")
        return 0

    if args.command == "run":
        record = online_run(cfg, seed, args.checkpoint_dir, mode="proposed")
        paths = emit_outputs(record, args.out, plot_points=cfg.run.plot_points)
        print(json.dumps(record.summary(), sort_keys=True, indent=2))
        print(f"record written to {paths['record']}")
        return 0

    if args.command == "baseline":
        record = run_baseline(cfg, seed, args.checkpoint_dir, which=args.policy)
        paths = emit_outputs(record, args.out, plot_points=cfg.run.plot_points)
        print(json.dumps(record.summary(), sort_keys=True, indent=2))
        print(f"record written to {paths['record']}")
        return 0

    if args.command == "eval-stability":
        args.seed_for_record = seed
        record = _read_record(args)
        report = eval_stability(record)
        out_path = os.path.join(args.out, f"stability_{record.mode}_s{record.seed}.json")
        os.makedirs(args.out, exist_ok=True)
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")
        print(json.dumps(report, sort_keys=True, indent=2))
        return 0 if report["all_stable"] else 1

    if args.command == "emit-plots":
        args.seed_for_record = seed
        record = _read_record(args)
        paths = emit_outputs(record, args.out, plot_points=cfg.run.plot_points)
        print(f"plot series written to {paths['plots']}")
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
