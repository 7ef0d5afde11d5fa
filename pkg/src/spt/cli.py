"""``spt`` command-line entry point.

Exit codes: 0 ok, 1 other failure, 2 invalid config or dataset, 3 phase order,
4 missing checkpoint, 5 numerical error.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path

from . import checkpoint
from .config import Config, load_config
from .datagen import dataset_stats, generate, read_jsonl, write_jsonl
from .errors import CheckpointError, NumericalError, PhaseOrderError, SpecError, TruncatedGeneration
from .formats import plain_ids, pretrain_docs, render
from .harness import (bench, evaluate_extraction, evaluate_generation, evaluate_retrieval,
                      generation_probe)
from .model import init_params, reset_extension, trainable_parameter_count
from .registry import SchemaPool, validate_pool
from .textcore import build_vocabulary
from .trainer import P1, P2, P3, PRETRAIN, TrainPlan, pretrain, run_phase, unigram_perplexity, write_metrics

EXIT_SPEC, EXIT_ORDER, EXIT_MISSING, EXIT_NUMERIC = 2, 3, 4, 5
PHASE_NAMES = {1: P1, 2: P2, 3: P3}
log = logging.getLogger("spt")


class MissingCheckpoint(Exception):
    pass


def _emit(args, obj, text: str | None = None) -> None:
    if args.json:
        print(json.dumps(obj, sort_keys=True))
    else:
        print(text if text is not None else json.dumps(obj, indent=1, sort_keys=True))


def _dirs(args, cfg: Config):
    data = Path(args.data or cfg.paths.data_dir)
    out = Path(args.out or cfg.paths.out_dir)
    return data, out


def _load_data(data: Path):
    try:
        pool = SchemaPool.load(data / "pool.json")
        return pool, read_jsonl(data / "train.jsonl"), read_jsonl(data / "test.jsonl")
    except FileNotFoundError as exc:
        raise SpecError(f"dataset missing under {data}: run `spt gen-data` first ({exc})") from exc


def _load_ckpt(path: Path):
    if not path.exists():
        raise MissingCheckpoint(f"checkpoint not found: {path}")
    return checkpoint.load(path)


# -------------------------------------------------------------- commands

def cmd_gen_data(args, cfg: Config) -> int:
    out = Path(args.out or cfg.paths.data_dir)
    out.mkdir(parents=True, exist_ok=True)
    pool, train, test = generate(cfg.data)
    problems = validate_pool(pool, strict=True)
    if problems:
        raise SpecError("; ".join(problems))
    pool.save(out / "pool.json")
    write_jsonl(train, out / "train.jsonl")
    write_jsonl(test, out / "test.jsonl")
    stats = {"pool_size": len(pool), "extension_tokens": len(pool) + 2,
             "train": dataset_stats(train), "test": dataset_stats(test), "out": str(out)}
    _emit(args, stats)
    return 0


def cmd_pretrain(args, cfg: Config) -> int:
    data, out = _dirs(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    pool, train, test = _load_data(data)
    docs = pretrain_docs(train, pool, seed=cfg.seed)
    val = [render(s, pool) for s in test]
    vocab = build_vocabulary([d.text for d in docs], pool.names)
    params = init_params(cfg.model, vocab.n_base, len(pool))
    uni = unigram_perplexity([plain_ids(vocab, d)[1] for d in docs],
                             [plain_ids(vocab, d)[1] for d in val], len(vocab))
    pc = cfg.pretrain
    params, rows = pretrain(params, docs, vocab, pc.epochs, pc.lr, val=val,
                            batch_size=pc.batch_size, optimizer=pc.optimizer, seed=cfg.seed,
                            decay=pc.decay)
    for r in rows:
        r["metric"]["unigram_ppl"] = uni
    write_metrics(rows, out / "metrics.jsonl", append=False)
    checkpoint.save(out / "pretrain.spt", params, vocab, pool)
    _emit(args, {"checkpoint": str(out / "pretrain.spt"), "epochs": rows, "unigram_ppl": uni,
                 "vocab_size": len(vocab)})
    return 0


def _phase_input(out: Path, n: int, explicit, force: bool) -> Path:
    if explicit:
        return Path(explicit)
    want = out / ("pretrain.spt" if n == 1 else f"phase{n - 1}.spt")
    if want.exists():
        return want
    earlier = [out / "pretrain.spt"] + [out / f"phase{k}.spt" for k in range(1, n - 1)]
    have = [p for p in earlier if p.exists()]
    if not have:
        raise MissingCheckpoint(f"no checkpoint in {out}; run `spt pretrain` first")
    if not force:
        raise PhaseOrderError(f"phase {n} needs {want.name}; run the earlier phases or pass --force")
    return have[-1]


def cmd_train(args, cfg: Config) -> int:
    data, out = _dirs(args, cfg)
    pool, train, _ = _load_data(data)
    phases = [1, 2, 3] if args.phase == "all" else [int(args.phase)]
    tc = cfg.train
    lrs = {1: tc.lr, 2: tc.lr, 3: tc.lr / 10}
    summary = []
    src = _phase_input(out, phases[0], args.checkpoint, args.force)
    params, vocab, ck_pool, _ = _load_ckpt(src)
    if ck_pool.names != pool.names:
        raise SpecError("checkpoint pool differs from the dataset pool")
    for n in phases:
        if n == 1 and params.phases_done == [PRETRAIN]:
            # attach fresh extension rows at the mean of the trained head
            reset_extension(params)
        plan = TrainPlan(PHASE_NAMES[n], tc.epochs[n - 1], lrs[n], batch_size=tc.batch_size,
                         optimizer=tc.optimizer, seed=cfg.seed)
        probe = generation_probe(vocab, pool, train, threshold=cfg.eval.soft_match_threshold)
        params, rows = run_phase(params, plan, train, pool, vocab, force=args.force, gen_probe=probe)
        write_metrics(rows, out / "metrics.jsonl")
        path = out / f"phase{n}.spt"
        checkpoint.save(path, params, vocab, pool)
        summary.append({"phase": plan.phase, "checkpoint": str(path), "epochs": rows,
                        "trainable_parameters": trainable_parameter_count(params, plan.groups)})
    _emit(args, {"phases": summary,
                 "extension_parameters": trainable_parameter_count(params)})
    return 0


def _eval_ckpt(args, out: Path) -> Path:
    if args.checkpoint:
        return Path(args.checkpoint)
    for name in ("phase3.spt", "phase2.spt", "phase1.spt"):
        if (out / name).exists():
            return out / name
    raise MissingCheckpoint(f"no trained checkpoint in {out}")


def cmd_eval(args, cfg: Config) -> int:
    data, out = _dirs(args, cfg)
    pool, _, test = _load_data(data)
    params, vocab, _, _ = _load_ckpt(_eval_ckpt(args, out))
    ec = cfg.eval
    tracks = ["retrieval", "extraction", "generation", "bench"] if args.track == "all" else [args.track]
    reports = {}
    for t in tracks:
        if t == "retrieval":
            rep = evaluate_retrieval(params, vocab, pool, test, k=ec.k)
        elif t == "extraction":
            rep = evaluate_extraction(params, vocab, pool, test, copy_constraint=ec.copy_constraint)
        elif t == "generation":
            rep = evaluate_generation(params, vocab, pool, test, ec.soft_match_threshold,
                                      copy_constraint=ec.copy_constraint)
        else:
            rep = bench(params, vocab, pool, test, n=ec.bench_queries)
        reports[t] = rep.to_json()
        if not args.json:
            print(rep.table())
    report = {"format_version": 1, "reports": reports}
    path = Path(args.report) if args.report else out / "report.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    if args.json:
        print(json.dumps(report, sort_keys=True))
    return 0


def cmd_extract(args, cfg: Config) -> int:
    from .decoder import Decoder
    _, out = _dirs(args, cfg)
    params, vocab, pool, _ = _load_ckpt(_eval_ckpt(args, out))
    dec = Decoder(params, vocab, pool, copy_constraint=cfg.eval.copy_constraint)
    try:
        trace = dec.extract(args.query)
    except TruncatedGeneration as exc:
        obj = {**exc.trace.to_json(), "truncated": True}
        print(json.dumps(obj, indent=None if args.json else 1))
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(trace.dumps(indent=None if args.json else 1))
    return 0


# ------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. train.lr=1e-3")
    common.add_argument("--json", action="store_true", help="machine-readable stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="spt", description="schema tokens on a frozen LM head")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="write pool.json, train.jsonl, test.jsonl")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain", parents=[common], help="train the base language model")
    p.add_argument("--data")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", parents=[common], help="run extension-row phases")
    p.add_argument("--phase", choices=["1", "2", "3", "all"], default="all")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--checkpoint", help="start from this checkpoint instead of the previous phase")
    p.add_argument("--force", action="store_true", help="skip the phase-order check")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("track", choices=["retrieval", "extraction", "generation", "bench", "all"])
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--checkpoint")
    p.add_argument("--report", help="report path (default OUT/report.json)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("extract", parents=[common], help="decode one query and print the trace")
    p.add_argument("--query", required=True)
    p.add_argument("--out")
    p.add_argument("--data")
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_extract)
    return ap


def _thread_limit():
    n = os.environ.get("SPT_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=max(1, int(n)))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args.set)
        with _thread_limit():
            return args.func(args, cfg)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except PhaseOrderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ORDER
    except (MissingCheckpoint, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
