"""Command-line entry point: ``cet datagen|pretrain|finetune|run|report``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import datagen as dg
from ..errors import ConfigError, DataError, DivergenceError
from ..model import config_from_str, load_checkpoint, save_checkpoint
from .config import SELF_SUPERVISED, ExperimentConfig, config_to_text, load_config
from .protocols import Lab, build_world, diverged, run_protocol
from .report import read_reports, summary_table, write_report

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3
log = logging.getLogger("cet.harness")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _base_config(path) -> ExperimentConfig:
    return load_config(path) if path else ExperimentConfig().validate()


def cmd_datagen(args) -> int:
    cfg = _base_config(args.config)
    market = dg.generate(cfg.synthetic)
    manifest = dg.write_dataset(market, args.out, {"generator_seed": cfg.synthetic.seed})
    print(f"wrote {len(manifest.days)} day entries for {len(manifest.companies)} companies to {args.out}")
    return EXIT_OK


def _cli_world(cfg: ExperimentConfig):
    world = build_world(cfg)
    sp = dg.split_dataset(world.samples, dg.SplitSpec("fraction_sweep", test_fraction=cfg.test_fraction,
                                                       seed=cfg.split_seed))
    return world, sp, Lab(cfg, world, dg.Scaler.fit(world.samples, sp.pretrain))


def cmd_pretrain(args) -> int:
    cfg = replace(_base_config(args.config), data_dir=args.data, seeds=(args.seed,))
    if args.epochs:
        cfg.pretrain_epochs = cfg.pretext_epochs = args.epochs
    cfg.validate()
    _, sp, lab = _cli_world(cfg)
    params = lab.pretrain(args.model, sp.pretrain, args.seed)
    save_checkpoint(params, args.out, {
        "model": args.model, "data_dir": str(Path(args.data).resolve()), "stride": cfg.stride,
        "split_seed": cfg.split_seed, "test_fraction": cfg.test_fraction, "preset": cfg.preset,
        "eps_hold": repr(cfg.eps_hold),
    })
    print(f"saved {args.model} checkpoint ({params.num_values()} values) to {args.out}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    params = load_checkpoint(args.ckpt)
    meta = params.meta
    kind = meta.get("model", "cet")
    if kind not in SELF_SUPERVISED:
        raise ConfigError(f"checkpoint holds a {kind!r} model, which has no pre-trained encoder")
    data_dir = args.data or meta.get("data_dir")
    if not data_dir:
        raise ConfigError("no dataset: pass --data or use a checkpoint written by `cet pretrain`")
    cfg = _base_config(args.config)
    cfg = replace(cfg, data_dir=data_dir, stride=int(meta.get("stride", cfg.stride)),
                  split_seed=int(meta.get("split_seed", cfg.split_seed)),
                  test_fraction=float(meta.get("test_fraction", cfg.test_fraction)),
                  eps_hold=float(meta.get("eps_hold", cfg.eps_hold)), seeds=tuple(args.seeds))
    if "config" in meta:
        mcfg = config_from_str(meta["config"])
        cfg.model_overrides = {k: getattr(mcfg, k) for k in ("d", "transformer_layers", "heads", "ff_dim",
                                                               "enc_hidden", "omega", "K")}
    cfg.validate()
    world, _, lab = _cli_world(cfg)
    sp = dg.split_dataset(world.samples, dg.SplitSpec("fraction_sweep", fraction=args.fraction,
                                                       test_fraction=cfg.test_fraction, seed=cfg.split_seed))
    accs = []
    for seed in cfg.seeds:
        acc, tuned = lab.fit(kind, params, lab.train_idx(sp.finetune), sp.test, args.mode, seed)
        accs.append(acc)
        print(f"seed {seed}: accuracy {acc:.2f}%")
        if args.out and seed == cfg.seeds[-1]:
            save_checkpoint(tuned, args.out, {"finetune_mode": args.mode, "fraction": args.fraction})
    std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
    print(f"{kind} {args.mode} fraction {args.fraction}: {np.mean(accs):.2f} + {std:.3f}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _base_config(args.config)
    cfg.protocol = args.protocol
    if args.seeds:
        cfg.seeds = tuple(args.seeds)
    cfg.validate()
    rep = run_protocol(cfg)
    out = Path(args.out)
    write_report([rep], out)
    (out / "config.txt").write_text(config_to_text(cfg), encoding="utf-8")
    print(summary_table(rep), end="")
    if diverged(rep):
        print("one or more runs diverged; see annotations", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_report(args) -> int:
    reports = read_reports(args.input)
    write_report(reports, args.input)
    for rep in reports:
        print(summary_table(rep))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cet", description="Contrastive earnings transformer experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("datagen", help="write a synthetic dataset")
    s.add_argument("--config", help="key = value file (synthetic.* keys)")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_datagen)

    s = sub.add_parser("pretrain", help="pre-train a self-supervised model on day-1 data")
    s.add_argument("--data", required=True, help="dataset directory")
    s.add_argument("--model", required=True, choices=SELF_SUPERVISED)
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--config")
    s.add_argument("--epochs", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_pretrain)

    s = sub.add_parser("finetune", help="fine-tune a checkpoint at a label fraction")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--fraction", type=float, required=True, choices=dg.SWEEP_FRACTIONS)
    s.add_argument("--mode", required=True, choices=("frozen", "unfrozen"))
    s.add_argument("--data", help="dataset directory (defaults to the one recorded in the checkpoint)")
    s.add_argument("--config")
    s.add_argument("--seeds", type=int, nargs="+", default=[0])
    s.add_argument("--out", help="write the last seed's tuned checkpoint here")
    s.set_defaults(func=cmd_finetune)

    s = sub.add_parser("run", help="run an experiment protocol and write its report")
    s.add_argument("--protocol", required=True, choices=("fractions", "sectors", "days", "ablation"))
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--seeds", type=int, nargs="+")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="regenerate summary and plot scripts from report CSVs")
    s.add_argument("--in", dest="input", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
