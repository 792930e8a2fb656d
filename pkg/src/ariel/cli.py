"""Command-line driver: ``ariel {train,eval,attack-study,gen-sbm}``.

Exit codes: 0 on success, 2 for configuration or input problems, 3 when
training or an attack hits a non-finite value.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config, with_seed
from .errors import ArielError, NumericError
from .evaluation import curve_to_csv, embed, embed_graphs, evaluate_embeddings, kfold_probe, vulnerability_study
from .graph import generate_sbm
from .graphio import atomic_write_text, load_graph, load_graph_dataset, write_graph
from .training import TrainingAborted, train_graph_level, train_node_level

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

CHECKPOINT_NAME = "checkpoint.ckpt"
LOG_NAME = "train_log.csv"
REPORT_NAME = "eval_report.json"
CURVE_NAME = "vulnerability.csv"


class InputError(ArielError):
    pass


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        with_seed(cfg, args.seed)
    if args.out is not None:
        cfg.out_override = args.out
    return cfg


def _data_path(cfg: RunConfig) -> Path:
    if not cfg.data_path:
        raise InputError("no dataset given ([data] path)")
    path = cfg.resolve(cfg.data_path)
    if not path.is_file():
        raise InputError(f"dataset not found: {path}")
    return path


def _load_data(cfg: RunConfig):
    path = _data_path(cfg)
    return load_graph(path) if cfg.mode == "node" else load_graph_dataset(path)


def _checkpoint_path(args, cfg: RunConfig, section: dict) -> Path:
    if args.checkpoint:
        path = Path(args.checkpoint)
    elif section.get("checkpoint"):
        path = cfg.resolve(section["checkpoint"])
    else:
        path = cfg.out_dir() / CHECKPOINT_NAME
    if not path.is_file():
        raise InputError(f"checkpoint not found: {path}")
    return path


def cmd_train(args) -> int:
    cfg = _run_config(args)
    data = _load_data(cfg)
    out = cfg.out_dir()
    trainer = train_node_level if cfg.mode == "node" else train_graph_level
    try:
        encoder, head, log = trainer(data, cfg.train)
    except TrainingAborted as exc:
        exc.log.write_csv(out / LOG_NAME)
        raise
    meta = dict(mode=cfg.mode, seed=cfg.seed, epochs=cfg.train.epochs, dataset=cfg.data_name)
    save_checkpoint(out / CHECKPOINT_NAME, encoder, head, meta)
    log.write_csv(out / LOG_NAME)
    last = log.records[-1] if log.records else None
    if last is None:
        print(f"trained 0 iterations; wrote {out / CHECKPOINT_NAME}")
    else:
        print(
            f"iterations={len(log.records)} total={last['total']:.6f} l_con={last['l_con']:.6f} "
            f"l_adv={last['l_adv']:.6f} l_ir={last['l_ir']:.6f} eps1={last['eps1']:.4f}"
        )
        print(f"wrote {out / CHECKPOINT_NAME} and {out / LOG_NAME}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    data = _load_data(cfg)
    encoder, _, _ = load_checkpoint(_checkpoint_path(args, cfg, cfg.eval))
    opts = cfg.eval
    if cfg.mode == "node":
        if data.labels is None:
            raise InputError("node-level evaluation needs node labels")
        report = evaluate_embeddings(
            embed(data, encoder),
            data.labels,
            repetitions=opts["repetitions"],
            seed=cfg.seed,
            fractions=(opts["train_fraction"], opts["valid_fraction"]),
            iterations=opts["iterations"],
            dataset=cfg.data_name,
        )
    else:
        if any(g.graph_label is None for g in data):
            raise InputError("graph-level evaluation needs a label on every graph")
        labels = np.array([g.graph_label for g in data])
        report = kfold_probe(
            embed_graphs(data, encoder), labels, opts["folds"], cfg.seed, opts["iterations"], cfg.data_name
        )
    path = cfg.out_dir() / REPORT_NAME
    atomic_write_text(path, report.to_json())
    print(f"accuracy {report.accuracy_mean:.4f} +/- {report.accuracy_std:.4f} over {report.repetitions} splits")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_attack_study(args) -> int:
    cfg = _run_config(args)
    if cfg.mode != "node":
        raise InputError("the degradation study runs on a single graph ([run] mode = node)")
    g = _load_data(cfg)
    encoder, _, _ = load_checkpoint(_checkpoint_path(args, cfg, cfg.study))
    p, steps = cfg.study["p"], cfg.study["steps"]
    if not 0 <= p <= 1:
        raise InputError("[study] p must lie in [0, 1]")
    if steps < 0:
        raise InputError("[study] steps must be non-negative")
    rows = vulnerability_study(g, encoder, p, steps, np.random.default_rng(cfg.seed))
    path = cfg.out_dir() / CURVE_NAME
    atomic_write_text(path, curve_to_csv(rows))
    last = rows[-1]
    print(f"step {last['step']}: mean similarity {last['mean']:.4f}, retention {last['edge_retention']:.4f}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_gen_sbm(args) -> int:
    cfg = _run_config(args)
    s = cfg.sbm
    try:
        g = generate_sbm(s["block_sizes"], s["p_in"], s["p_out"], s["feature_dim"], s["feature_noise"],
                         np.random.default_rng(cfg.seed))
    except ValueError as exc:
        raise InputError(f"invalid SBM parameters: {exc}") from None
    name = Path(s["output"])
    path = cfg.out_dir() / name.name if cfg.out_override is not None else cfg.resolve(str(name))
    write_graph(g, path)
    print(f"wrote {path} ({g.n} nodes, {g.num_edges} edges)")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "attack-study": cmd_attack_study, "gen-sbm": cmd_gen_sbm}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ariel", description="Adversarial graph contrastive learning.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI run configuration")
        p.add_argument("--seed", type=int, help="overrides [run] seed")
        p.add_argument("--out", help="output directory (overrides [run] out)")
        if name in ("eval", "attack-study"):
            p.add_argument("--checkpoint", help="checkpoint file (default: <out>/checkpoint.ckpt)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ArielError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
