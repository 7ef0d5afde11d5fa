"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N PASS|FAIL`` line; the lines are
repeated in the terminal summary. Criteria 4-8, 11 and 12 share one
default-config pipeline run (plus a second run for reproducibility).
"""
import filecmp
import json
import time

import numpy as np

from oracles import bm25_oracle, fd_check, rouge_l_oracle, unigram_ppl_oracle
from test_decoder import QUERIES, _quick_hook, _selection_paths
from conftest import tiny_params
from spt import checkpoint
from spt.baselines import build_index, score
from spt.datagen import CLOSED, SCHEMA_FREE, read_jsonl
from spt.decoder import GENERATING, Decoder, parse_output
from spt.formats import plain_ids, pretrain_docs, render
from spt.metrics import recall_at_k, rejection_score, rouge_l_f1
from spt.model import (ModelConfig, extension_parameter_count, init_params, reset_extension,
                       trainable_parameter_count)
from spt.registry import SchemaPool
from spt.trainer import P1, P2, P3, PHASE_GROUPS

def _metrics(pipe, track):
    obj = json.loads((pipe["out"] / f"report-{track}.json").read_text())
    return obj["reports"][track]["metrics"]


def _ckpt(pipe, name):
    return checkpoint.load(pipe["out"] / name)[0]


# 1 ------------------------------------------------------------------------
def test_c01_gradient_correctness(criterion):
    t0 = time.process_time()
    cfg = ModelConfig(d_model=64, n_layers=2, n_heads=4, d_ff=128, max_seq_len=32,
                      dtype="float64", init_std=0.1, seed=11)
    p = init_params(cfg, 40, 5)
    reset_extension(p, noise=0.1, seed=12)
    rng = np.random.default_rng(13)
    ids = rng.integers(0, 40, (2, 12))
    ids[0, 4] = ids[1, 7] = p.gen_id
    tgt = rng.integers(0, 47, (2, 12))
    tgt[:, :2] = -1
    worst, report = fd_check(p, ids, tgt, ("base", "W_S", "rej", "gen"), eps=1e-4)
    cpu = time.process_time() - t0
    covered = {"W_S", "rej", "gen", "tok_emb", "pos_emb", "head"} <= set(report)
    ok = worst < 1e-4 and cpu < 60 and covered
    criterion(1, "gradient correctness", ok,
              f"max rel err {worst:.2e} over {len(report)} tensors, {cpu:.1f}s CPU")
    assert ok, report


# 2 ------------------------------------------------------------------------
def _changed_base(a, b):
    """Base tensors that are not bit-identical between two parameter sets."""
    assert a.base.keys() == b.base.keys()
    return {k for k in a.base if a.base[k].tobytes() != b.base[k].tobytes()}


def _ext_rows(p):
    return {g: p.group_view(g).tobytes() for g in ("W_S", "rej", "gen")}


def test_c02_phase_isolation(pipeline, criterion):
    pre = _ckpt(pipeline, "pretrain.spt")
    reset_extension(pre)  # the CLI attaches fresh rows before phase 1
    stages = [pre] + [_ckpt(pipeline, f"phase{n}.spt") for n in (1, 2, 3)]
    problems = []
    for phase, before, after in zip((P1, P2, P3), stages, stages[1:]):
        changed = _changed_base(before, after)
        if changed:
            problems.append(f"{phase}: base tensors changed {sorted(changed)}")
        rb, ra = _ext_rows(before), _ext_rows(after)
        for g in ("W_S", "rej", "gen"):
            if g not in PHASE_GROUPS[phase] and rb[g] != ra[g]:
                problems.append(f"{phase}: frozen group {g} changed")
    w_s_kept = _ext_rows(stages[1])["W_S"] == _ext_rows(stages[2])["W_S"]
    ok = not problems and w_s_kept
    criterion(2, "freezing / phase isolation", ok,
              "; ".join(problems) or "all frozen groups bit-identical; W_S unchanged by P2")
    assert ok


# 3 ------------------------------------------------------------------------
def test_c03_parameter_accounting(pipeline, criterion):
    desk = trainable_parameter_count(_ckpt(pipeline, "phase3.spt"))
    big_cfg = ModelConfig(d_model=1536, n_layers=1, n_heads=12, d_ff=64, max_seq_len=8)
    big = trainable_parameter_count(init_params(big_cfg, 10, 26))
    ok = (desk == 28 * 64 == 1792 and big == 28 * 1536 == 43008
          and extension_parameter_count(26, 1536) == 43008)
    criterion(3, "parameter accounting", ok, f"desk {desk}, d=1536 → {big}")
    assert ok


# 4 ------------------------------------------------------------------------
def test_c04_pretraining_beats_unigram(pipeline, criterion):
    pool = SchemaPool.load(pipeline["data"] / "pool.json")
    train = read_jsonl(pipeline["data"] / "train.jsonl")
    test = read_jsonl(pipeline["data"] / "test.jsonl")
    _, vocab, _, _ = checkpoint.load(pipeline["out"] / "pretrain.spt")
    uni = unigram_ppl_oracle([plain_ids(vocab, d)[1] for d in pretrain_docs(train, pool, seed=7)],
                             [plain_ids(vocab, render(s, pool))[1] for s in test], len(vocab))
    rows = [json.loads(l) for l in (pipeline["out"] / "metrics.jsonl").read_text().splitlines()]
    pre = [r for r in rows if r["phase"] == "Pretrain"]
    ppl = pre[-1]["metric"]["val_ppl"]
    cpu = pipeline["cpu_seconds"]["pretrain"]
    ok = len(pre) == 3 and ppl < uni and cpu < 600
    criterion(4, "base LM pretraining", ok,
              f"val ppl {ppl:.3f} < unigram {uni:.2f} after {len(pre)} epochs, {cpu:.0f}s CPU")
    assert ok


# 5 ------------------------------------------------------------------------
def test_c05_retrieval_direction(pipeline, criterion):
    m = _metrics(pipeline, "retrieval")
    spt, bm = m["spt_recall@5"], m["bm25_recall@5"]
    cpu = sum(pipeline["cpu_seconds"][k] for k in ("gen-data", "pretrain", "train", "eval-retrieval"))
    ok = spt >= 0.90 and spt - bm >= 0.15 and cpu < 900
    criterion(5, "retrieval direction", ok,
              f"SPT R@5 {spt:.3f}, BM25 R@5 {bm:.3f}, gap {spt - bm:.3f}, {cpu:.0f}s CPU")
    assert ok


# 6 ------------------------------------------------------------------------
def test_c06_rejection_after_phase2(pipeline, criterion):
    params, vocab, pool, _ = checkpoint.load(pipeline["out"] / "phase2.spt")
    dec = Decoder(params, vocab, pool)
    test = read_jsonl(pipeline["data"] / "test.jsonl")
    decisions = [(dec.select(s.query) is None, s.kind == SCHEMA_FREE)
                 for s in test if s.kind in (CLOSED, SCHEMA_FREE)]
    r = rejection_score(decisions)
    n_free = sum(g for _, g in decisions)
    ok = r["f1"] >= 0.85
    criterion(6, "rejection after phase 2", ok,
              f"F1 {r['f1']:.3f} ({n_free} schema-free vs {len(decisions) - n_free} closed)")
    assert ok


# 7 ------------------------------------------------------------------------
def test_c07_infilling_exact_match(pipeline, criterion):
    m = _metrics(pipeline, "extraction")
    ok = m["infill_exact_match"] >= 0.80
    criterion(7, "infilling exact match", ok, f"{m['infill_exact_match']:.3f} with copy constraint")
    assert ok


# 8 ------------------------------------------------------------------------
def test_c08_generation_validity(pipeline, criterion):
    m = _metrics(pipeline, "generation")
    ok = m["generation_validity"] == 1.0 and m["header_soft_f1"] >= 0.60
    criterion(8, "generation-mode validity", ok,
              f"valid {m['generation_validity']:.3f}, header soft F1 {m['header_soft_f1']:.3f}")
    assert ok


# 9 ------------------------------------------------------------------------
def test_c09_metric_oracles(criterion):
    rng = np.random.default_rng(9)
    words = list("abcdefg")
    rouge_ok = all(rouge_l_f1(a, b) == rouge_l_oracle(a, b) for a, b in (
        (" ".join(rng.choice(words, size=int(rng.integers(0, 12)))),
         " ".join(rng.choice(words, size=int(rng.integers(0, 12))))) for _ in range(1000)))
    worst = 0.0
    for _ in range(100):
        docs = [" ".join(rng.choice(words, size=int(rng.integers(1, 10))))
                for _ in range(int(rng.integers(1, 9)))]
        q = " ".join(rng.choice(words + ["zz"], size=int(rng.integers(1, 6))))
        idx = build_index([(str(i), d) for i, d in enumerate(docs)])
        for i in range(len(docs)):
            a, b = score(idx, q, i), bm25_oracle(docs, q, i)
            worst = max(worst, abs(a - b) / abs(b) if b else abs(a))
    mono = True
    for _ in range(300):
        ranked = list(rng.permutation(12).astype(str))
        gold = list(rng.choice(12, size=int(rng.integers(1, 5)), replace=False).astype(str))
        r = [recall_at_k(ranked, gold, k) for k in range(0, 14)]
        mono &= all(x <= y for x, y in zip(r, r[1:]))
    ok = rouge_ok and worst < 1e-9 and mono
    criterion(9, "metric oracles", ok,
              f"ROUGE-L exact on 1000 pairs: {rouge_ok}; BM25 max rel err {worst:.1e}; "
              f"recall@k monotone: {mono}")
    assert ok


# 10 -----------------------------------------------------------------------
def test_c10_dual_mode_soundness(toy_vocab, toy_pool, pipeline, criterion):
    params = tiny_params(toy_vocab, len(toy_pool), seed=3)
    mismatches, paths = 0, list(_selection_paths(toy_vocab, 3))
    for path in paths:
        tr = Decoder(params, toy_vocab, toy_pool, logit_hook=_quick_hook(toy_vocab, path)).extract(QUERIES[0])
        rej_emitted = tr.steps[0].token == "<Rej>"
        mismatches += (GENERATING in tr.modes) != rej_emitted or tr.rejected != rej_emitted
        parse_output(tr.output, toy_pool)
    ext = _metrics(pipeline, "extraction")
    counts = json.loads((pipeline["out"] / "report-extraction.json").read_text())
    counts = counts["reports"]["extraction"]["counts"]
    ok = mismatches == 0 and counts["parse_failures"] == 0 and counts["truncated"] == 0
    criterion(10, "dual-mode soundness", ok,
              f"{len(paths)} forced paths, {mismatches} mode mismatches; "
              f"{counts['parse_failures']} parse failures / {counts['samples']} test queries")
    assert ok and ext["parse_failure_rate"] == 0.0


# 11 -----------------------------------------------------------------------
def test_c11_inference_cost(pipeline, criterion):
    m = _metrics(pipeline, "bench")
    n = json.loads((pipeline["out"] / "report-bench.json").read_text())["reports"]["bench"]["counts"]
    ok = n["queries"] == 100 and n["truncated"] == 0 and m["spt_tokens"] < m["baseline_tokens"]
    criterion(11, "inference-cost direction", ok,
              f"{n['queries']} queries: SPT {m['spt_tokens']:.1f} vs prompt {m['baseline_tokens']:.1f} "
              f"tokens ({m['spt_ms_per_token']:.2f} vs {m['baseline_ms_per_token']:.2f} ms/token)")
    assert ok


# 12 -----------------------------------------------------------------------
def _strip_timing(path):
    obj = json.loads(path.read_text())
    for rep in obj["reports"].values():
        rep["metrics"] = {k: v for k, v in rep["metrics"].items() if "ms_per_token" not in k}
    return obj


def test_c12_reproducibility(pipeline, pipeline_repeat, criterion):
    a, b = pipeline, pipeline_repeat
    diffs = []
    for f in ("pool.json", "train.jsonl", "test.jsonl"):
        if not filecmp.cmp(a["data"] / f, b["data"] / f, shallow=False):
            diffs.append(f)
    for f in ("pretrain.spt", "phase1.spt", "phase2.spt", "phase3.spt", "metrics.jsonl"):
        if not filecmp.cmp(a["out"] / f, b["out"] / f, shallow=False):
            diffs.append(f)
    for t in ("retrieval", "extraction", "generation", "bench"):
        name = f"report-{t}.json"
        if t == "bench":
            same = _strip_timing(a["out"] / name) == _strip_timing(b["out"] / name)
        else:
            same = filecmp.cmp(a["out"] / name, b["out"] / name, shallow=False)
        if not same:
            diffs.append(name)
    ok = not diffs
    criterion(12, "reproducibility", ok, "differing: " + ", ".join(diffs) if diffs else
              "datasets, checkpoints, metrics and reports byte-identical (bench timing excluded)")
    assert ok
