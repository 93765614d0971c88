"""Command-line entry point: gen-data, train, eval, generate, dump-attn."""

import argparse
import os
import sys
from dataclasses import fields

import numpy as np

from .config import (
    RunConfig, ConfigError, load_config, save_config, key_of,
)
from .corpus import Vocabulary, CorpusError, load_jsonl, gen_synthetic
from .evalrank import EvalError, build_train_stats, evaluate
from .model import Model
from .numerics import CheckpointError, seeded_rng
from .ortho import gram
from .reports import write_rank_report, write_matrix_csv, write_heatmap
from .training import TrainingError, run_training

USER_ERRORS = (ConfigError, CorpusError, EvalError, TrainingError,
               CheckpointError, FileNotFoundError, ValueError)


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_config_flags(parser):
    for f in fields(RunConfig):
        key = key_of(f.name)
        typ = _parse_bool if f.type is bool else f.type
        parser.add_argument(f"--{key}", dest=f.name, type=typ, default=None,
                            help=f"override config key {key}")


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config, base=cfg)
    _apply_flag_overrides(cfg, args)
    return cfg.validate()


def _apply_flag_overrides(cfg, args):
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)


def _load_corpus(data_dir):
    vocab = Vocabulary.load(os.path.join(data_dir, "vocab.txt"))
    splits = {
        name: load_jsonl(os.path.join(data_dir, f"{name}.jsonl"), vocab)
        for name in ("train", "dev", "test")
    }
    return vocab, splits


def _echo_config(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    save_config(cfg, os.path.join(out_dir, "config.txt"))


# ----------------------------------------------------------------------
# commands

def cmd_gen_data(args) -> int:
    paths = gen_synthetic(args.out, seed=args.seed, videos=args.videos,
                          per_video=args.per_video, d_f=args.d_f,
                          vocab_size=args.vocab_size)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_train(args) -> int:
    vocab, splits = _load_corpus(args.data)
    if args.resume:
        model = Model.load(args.resume)
        _apply_flag_overrides(model.cfg, args)
        model.cfg.validate()
    else:
        cfg = _resolve_config(args)
        if not splits["train"]:
            raise TrainingError("training split is empty")
        d_f = splits["train"][0].frames.shape[1]
        model = Model.build(cfg, V=len(vocab), d_f=d_f)
    _echo_config(model.cfg, args.out)
    ckpt = run_training(model, splits["train"], splits["dev"], args.out)
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_eval(args) -> int:
    vocab, splits = _load_corpus(args.data)
    model = Model.load(args.checkpoint)
    seed = args.seed if args.seed is not None else model.cfg.seed
    stats = build_train_stats(splits["train"], vocab)
    insts = splits[args.split]
    if not insts:
        raise EvalError(f"split {args.split!r} is empty")
    report = evaluate(model, insts, stats, seed)
    _echo_config(model.cfg, args.out)
    json_path, txt_path = write_rank_report(report, args.out)
    with open(txt_path, encoding="utf-8") as fh:
        print(fh.read(), end="")
    print(f"report: {json_path}")
    return 0


def cmd_generate(args) -> int:
    vocab, splits = _load_corpus(args.data)
    model = Model.load(args.checkpoint)
    insts = splits[args.split]
    if args.limit is not None:
        insts = insts[:args.limit]
    rng = seeded_rng("sample", args.seed) if args.sample else None
    os.makedirs(args.out, exist_ok=True)
    _echo_config(model.cfg, args.out)
    out_path = os.path.join(args.out, "generated.tsv")
    with open(out_path, "w", encoding="utf-8") as fh:
        for inst in insts:
            tokens = model.generate(inst, max_len=args.max_len, rng=rng)
            fh.write(f"{inst.id}\t{vocab.decode(tokens)}\n")
    print(f"generated: {out_path}")
    return 0


def cmd_dump_attn(args) -> int:
    vocab, splits = _load_corpus(args.data)
    model = Model.load(args.checkpoint)
    inst = None
    for insts in splits.values():
        for candidate in insts:
            if candidate.id == args.instance:
                inst = candidate
                break
    if inst is None:
        raise EvalError(f"unknown instance id {args.instance!r}")
    os.makedirs(args.out, exist_ok=True)
    _echo_config(model.cfg, args.out)
    S_list = model.similarity_stack(inst)
    for k, S in enumerate(S_list):
        csv_path = os.path.join(args.out, f"S_{k}.csv")
        write_matrix_csv(csv_path, S)
        write_heatmap(os.path.join(args.out, f"S_{k}.png"), S,
                      title=f"{inst.id} perspective {k}")
        print(f"S_{k}: {csv_path}")
    L = model.L_arrays() or [np.eye(model.cfg.d)]
    gram_path = os.path.join(args.out, "gram.csv")
    write_matrix_csv(gram_path, gram(L))
    print(f"gram: {gram_path}")
    return 0


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="divco",
        description="multi-perspective co-attention commenting model")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--videos", type=int, default=50)
    p.add_argument("--per-video", type=int, default=20)
    p.add_argument("--d_f", type=int, default=16)
    p.add_argument("--vocab-size", type=int, default=120)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--resume", help="checkpoint to continue from")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="rank candidate comments on a split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=("train", "dev", "test"))
    p.add_argument("--seed", type=int, default=None,
                   help="candidate/tie seed (default: checkpoint seed)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("generate", help="decode comments for a split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=("train", "dev", "test"))
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--sample", action="store_true",
                   help="ancestral sampling instead of greedy decoding")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("dump-attn", help="dump per-perspective similarity")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--instance", required=True, help="instance id")
    p.set_defaults(func=cmd_dump_attn)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
