"""Retrieval, extraction and generation metrics."""
from __future__ import annotations

from collections import Counter, defaultdict
from typing import Iterable, Sequence


def recall_at_k(ranked: Sequence, gold: Iterable, k: int) -> float:
    gold = set(gold)
    if not gold:
        raise ValueError("gold set is empty")
    return len(gold & set(ranked[:k])) / len(gold)


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def span_macro_f1(pred: Iterable[tuple], gold: Iterable[tuple]) -> dict:
    """Exact (type, span) matching; macro mean over types present in gold."""
    pred, gold = set(pred), set(gold)
    types = sorted({t for t, _ in gold})
    per_type = {}
    for t in types:
        p_t = {x for x in pred if x[0] == t}
        g_t = {x for x in gold if x[0] == t}
        tp = len(p_t & g_t)
        per_type[t] = dict(zip(("p", "r", "f1"), prf(tp, len(p_t) - tp, len(g_t) - tp)))
    macro = sum(v["f1"] for v in per_type.values()) / len(types) if types else 0.0
    return {"per_type": per_type, "macro_f1": macro}


def rejection_score(decisions: Iterable[tuple[bool, bool]]) -> dict:
    """Binary F1 with "reject" as the positive class; accuracy alongside."""
    tp = fp = fn = tn = 0
    for pred, gold in decisions:
        if pred and gold:
            tp += 1
        elif pred:
            fp += 1
        elif gold:
            fn += 1
        else:
            tn += 1
    p, r, f = prf(tp, fp, fn)
    n = tp + fp + fn + tn
    return {"precision": p, "recall": r, "f1": f, "accuracy": (tp + tn) / n if n else 0.0}


def lcs_length(a: Sequence, b: Sequence) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_f1(pred: str, ref: str) -> float:
    p, r = pred.split(), ref.split()
    if not p or not r:
        return 0.0
    lcs = lcs_length(p, r)
    if lcs == 0:
        return 0.0
    prec, rec = lcs / len(p), lcs / len(r)
    return 2 * prec * rec / (prec + rec)


def token_f1(a: str, b: str) -> float:
    x, y = Counter(a.lower().split()), Counter(b.lower().split())
    common = sum((x & y).values())
    if not common:
        return 0.0
    p, r = common / sum(x.values()), common / sum(y.values())
    return 2 * p * r / (p + r)


def header_soft_f1(pred: Sequence[str], gold: Sequence[str], threshold: float = 0.5) -> float:
    """Greedy one-to-one role matching on name token-F1, then set F1."""
    if not pred or not gold:
        return 1.0 if not pred and not gold else 0.0
    pairs = sorted(((token_f1(p, g), i, j) for i, p in enumerate(pred) for j, g in enumerate(gold)),
                   key=lambda t: (-t[0], t[1], t[2]))
    used_p, used_g = set(), set()
    matched = 0
    for s, i, j in pairs:
        if s < threshold:
            break
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matched += 1
    return prf(matched, len(pred) - matched, len(gold) - matched)[2]


def mean(xs: Iterable[float]) -> float:
    xs = list(xs)
    return sum(xs) / len(xs) if xs else 0.0


def group_mean(rows: Iterable[tuple[str, float]]) -> dict:
    acc = defaultdict(list)
    for key, v in rows:
        acc[key].append(v)
    return {k: mean(v) for k, v in sorted(acc.items())}
