"""Base pretraining and the three-phase extension-row schedule."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .datagen import CLOSED, KINDS, OPEN, SCHEMA_FREE, Sample
from .errors import EmptyDataset, NumericalError, PhaseOrderError
from .formats import Doc, plain_ids, render, spt_ids
from .model import (EXT_GROUPS, ModelParams, _check_ids, _forward, full_head, loss_and_grads,
                    make_optimizer, softmax)
from .registry import SchemaPool
from .textcore import NEWLINE, Vocabulary

log = logging.getLogger(__name__)

PRETRAIN, P1, P2, P3 = "Pretrain", "P1", "P2", "P3"
PHASES = (PRETRAIN, P1, P2, P3)
PHASE_GROUPS = {
    PRETRAIN: ("base",),
    P1: ("W_S",),
    P2: ("rej", "gen"),
    P3: ("W_S", "rej", "gen"),
}
# P2 also sees closed samples: without negatives the rejection row would
# simply learn to win everywhere.
PHASE_KINDS = {
    PRETRAIN: KINDS,
    P1: (CLOSED,),
    P2: (SCHEMA_FREE, OPEN, CLOSED),
    P3: KINDS,
}
PREREQ = {P1: PRETRAIN, P2: P1, P3: P2}


@dataclass
class TrainPlan:
    phase: str
    epochs: int
    lr: float
    groups: tuple = ()
    kinds: tuple = ()
    batch_size: int = 32
    optimizer: str = "sgd"
    seed: int = 7

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")
        self.groups = tuple(self.groups) or PHASE_GROUPS[self.phase]
        self.kinds = tuple(self.kinds) or PHASE_KINDS[self.phase]
        if self.epochs < 0 or self.lr <= 0 or self.batch_size < 1:
            raise ValueError("epochs >= 0, lr > 0 and batch_size >= 1 required")
        if set(self.groups) != set(PHASE_GROUPS[self.phase]):
            raise ValueError(f"{self.phase} trains exactly {PHASE_GROUPS[self.phase]}")


def default_schedule(lr: float = 5e-4, epochs=(3, 3, 2), **kw) -> list[TrainPlan]:
    """P1 and P2 at ``lr``; P3 at ``lr / 10``."""
    return [TrainPlan(P1, epochs[0], lr, **kw),
            TrainPlan(P2, epochs[1], lr, **kw),
            TrainPlan(P3, epochs[2], lr / 10, **kw)]


def _batches(n: int, batch_size: int, rng: np.random.Generator, lengths=None):
    order = rng.permutation(n)
    if lengths is not None:
        # sort inside windows of 8 batches to cut padding, keep randomness
        win = batch_size * 8
        order = np.concatenate([sorted(order[i:i + win], key=lambda j: lengths[j])
                                for i in range(0, n, win)]) if n else order
    batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    perm = rng.permutation(len(batches))
    return [batches[i] for i in perm]


def _pad(pairs):
    T = max(len(ids) for ids, _ in pairs)
    ids = np.zeros((len(pairs), T), dtype=np.int64)
    tgt = np.full((len(pairs), T), -1, dtype=np.int64)
    for i, (a, b) in enumerate(pairs):
        ids[i, :len(a)] = a
        tgt[i, :len(b)] = b
    return ids, tgt


# ----------------------------------------------------------------- pretrain

def unigram_perplexity(train_targets: Sequence[np.ndarray], val_targets: Sequence[np.ndarray],
                       vocab_size: int) -> float:
    """Add-one unigram model fitted on train targets, evaluated on val targets."""
    counts = np.ones(vocab_size)
    for t in train_targets:
        np.add.at(counts, t[t >= 0], 1)
    logp = np.log(counts / counts.sum())
    nll = [-logp[t[t >= 0]] for t in val_targets]
    return float(np.exp(np.concatenate(nll).mean()))


def evaluate_nll(params: ModelParams, pairs, batch_size: int = 64) -> float:
    total, n = 0.0, 0
    for i in range(0, len(pairs), batch_size):
        ids, tgt = _pad(pairs[i:i + batch_size])
        loss, _ = loss_and_grads(params, ids, tgt, trainable=())
        k = int((tgt >= 0).sum())
        total += loss * k
        n += k
    return total / n


def pretrain(params: ModelParams, corpus: Sequence[Doc], vocab: Vocabulary, epochs: int,
             lr: float, val: Sequence[Doc] = (), batch_size: int = 32, optimizer: str = "adam",
             seed: int = 7, decay: bool = True,
             on_epoch: Callable[[dict], None] | None = None):
    """Train the base language model on plain-text documents.

    With ``decay`` the learning rate falls linearly to a tenth of ``lr``
    over the run. Returns ``(params, metrics)``; each metrics row has the
    epoch-mean training loss and the validation perplexity.
    """
    if "base" in params.frozen:
        raise ValueError("base is frozen")
    pairs = [plain_ids(vocab, d) for d in corpus]
    val_pairs = [plain_ids(vocab, d) for d in val]
    opt = make_optimizer(optimizer, lr)
    lengths = [len(p[0]) for p in pairs]
    metrics = []
    total = epochs * -(-len(pairs) // batch_size)
    done = 0
    for epoch in range(epochs):
        rng = np.random.default_rng([seed, 0, epoch])
        losses = []
        for step, idx in enumerate(_batches(len(pairs), batch_size, rng, lengths)):
            if decay:
                opt.lr = lr * (1.0 - 0.9 * done / total)
            done += 1
            ids, tgt = _pad([pairs[i] for i in idx])
            try:
                loss, grads = loss_and_grads(params, ids, tgt, trainable=("base",),
                                             batch_index=step)
            except NumericalError as exc:
                raise NumericalError(f"pretrain epoch {epoch} step {step}: {exc}",
                                     batch_index=step) from exc
            opt.step(params, grads)
            losses.append(loss)
        row = {"phase": PRETRAIN, "epoch": epoch + 1, "loss": float(np.mean(losses)),
               "first_loss": float(losses[0]), "metric": {}}
        if val_pairs:
            row["metric"]["val_ppl"] = float(np.exp(evaluate_nll(params, val_pairs)))
        log.info("pretrain epoch %d loss %.4f %s", epoch + 1, row["loss"], row["metric"])
        metrics.append(row)
        if on_epoch:
            on_epoch(row)
    if epochs and PRETRAIN not in params.phases_done:
        params.phases_done.append(PRETRAIN)
    return params, metrics


# ------------------------------------------------------------ SPT phases

@dataclass
class _Item:
    ids: np.ndarray
    targets: np.ndarray
    kind: str
    has_gen: bool
    choices: dict = field(default_factory=dict)
    masks: dict = field(default_factory=dict)
    # cached rows: hidden state, target and weight per (position, target) pair
    pos: np.ndarray | None = None
    feats: np.ndarray | None = None
    tgt: np.ndarray | None = None
    w: np.ndarray | None = None


def _selection_masks(vocab: Vocabulary, doc) -> dict:
    """Allowed-id sets at the schema-choice positions of a rendered document."""
    nb, s = vocab.n_base, vocab.n_schemas
    schema_ids = np.arange(nb, nb + s)
    out, listed = {}, []
    for j, (p, tok) in enumerate(doc.decisions):
        if j == 0:
            out[p] = np.append(schema_ids, vocab.rej_id)
        else:
            out[p] = np.setdiff1d(schema_ids, listed)
        listed.append(vocab.id(tok))
    return out


def prepare(params: ModelParams, samples: Sequence[Sample], pool: SchemaPool,
            vocab: Vocabulary, kinds=KINDS, generation: bool = True) -> list[_Item]:
    items = []
    for s in samples:
        if s.kind not in kinds:
            continue
        doc = render(s, pool)
        ids, tgt = spt_ids(vocab, doc, generation=generation)
        item = _Item(ids, tgt, s.kind, bool((ids == vocab.gen_id).any()))
        item.masks = _selection_masks(vocab, doc)
        item.choices = {p: [vocab.id(t) for t in toks] for p, toks in doc.choices.items()}
        items.append(item)
    _cache_features(params, [it for it in items if not it.has_gen])
    return items


def _cache_features(params: ModelParams, items: list[_Item], chunk: int = 64) -> None:
    # Base weights are frozen during the SPT phases, so hidden states of
    # sequences without a soft prompt never change.
    for i in range(0, len(items), chunk):
        part = items[i:i + chunk]
        ids, tgt = _pad([(it.ids, it.targets) for it in part])
        _check_ids(params, ids)
        h, _ = _forward(params, ids)
        for b, it in enumerate(part):
            pos, feats, tg, w = [], [], [], []
            for p in np.flatnonzero(tgt[b] >= 0):
                # a set of correct choices shares the position's unit weight
                opts = it.choices.get(int(p), [int(tgt[b, p])])
                for t in opts:
                    pos.append(p)
                    feats.append(h[b, p])
                    tg.append(t)
                    w.append(1.0 / len(opts))
            it.pos = np.array(pos)
            it.feats = np.array(feats)
            it.tgt = np.array(tg, dtype=np.int64)
            it.w = np.array(w)


def _head_loss_grads(params: ModelParams, feats: np.ndarray, tgt: np.ndarray, w: np.ndarray,
                     trainable):
    """Weighted summed NLL and extension-row gradients for fixed hidden states."""
    W = full_head(params)
    z = feats @ W.T
    p = softmax(z.astype(np.float64))
    n = len(tgt)
    loss = float(-(w * np.log(np.maximum(p[np.arange(n), tgt], 1e-300))).sum())
    p[np.arange(n), tgt] -= 1.0
    dW = (p * w[:, None]).T @ feats
    nb, s = params.n_base, params.n_schemas
    grads = {}
    if "W_S" in trainable:
        grads["W_S"] = dW[nb:nb + s]
    if "rej" in trainable:
        grads["rej"] = dW[nb + s]
    if "gen" in trainable:
        grads["gen"] = dW[nb + s + 1]
    return loss, grads


def _batch_step(params: ModelParams, batch: list[_Item], trainable, batch_index: int):
    cached = [it for it in batch if not it.has_gen]
    live = [it for it in batch if it.has_gen]
    total_loss, total_n = 0.0, 0
    grads: dict[str, np.ndarray] = {}

    def acc(g, scale):
        for k, v in g.items():
            grads[k] = grads.get(k, 0.0) + np.asarray(v, dtype=np.float64) * scale

    if cached:
        feats = np.concatenate([it.feats for it in cached])
        tgt = np.concatenate([it.tgt for it in cached])
        w = np.concatenate([it.w for it in cached])
        loss, g = _head_loss_grads(params, feats, tgt, w, trainable)
        total_loss += loss
        total_n += float(w.sum())
        acc(g, 1.0)
    if live:
        ids, tgt = _pad([(it.ids, it.targets) for it in live])
        n = int((tgt >= 0).sum())
        loss, g = loss_and_grads(params, ids, tgt, trainable=trainable, batch_index=batch_index)
        total_loss += loss * n
        total_n += n
        acc(g, float(n))
    if not np.isfinite(total_loss):
        raise NumericalError("non-finite loss", batch_index=batch_index)
    dt = params.ext.dtype
    return total_loss / total_n, {k: (v / total_n).astype(dt) for k, v in grads.items()}


def selection_accuracy(params: ModelParams, items: Sequence[_Item], vocab: Vocabulary) -> dict:
    """Masked-argmax accuracy at selection positions (first position and all)."""
    W = full_head(params)
    first_ok = first_n = all_ok = all_n = rej_ok = rej_n = 0
    for it in items:
        if it.feats is None:
            continue
        first = int(it.pos[0])
        for p in np.unique(it.pos):
            mask = it.masks.get(int(p))
            if mask is None:
                continue
            row = int(np.flatnonzero(it.pos == p)[0])
            pred = int(mask[np.argmax(W[mask] @ it.feats[row])])
            ok = pred in it.choices.get(int(p), [int(it.tgt[row])])
            all_ok += ok
            all_n += 1
            if p == first:
                first_ok += ok
                first_n += 1
                rej_ok += bool((pred == vocab.rej_id) == (it.tgt[row] == vocab.rej_id))
                rej_n += 1
    return {"schema_token_acc": all_ok / max(all_n, 1), "first_acc": first_ok / max(first_n, 1),
            "rejection_acc": rej_ok / max(rej_n, 1)}


def check_order(params: ModelParams, phase: str, force: bool = False) -> None:
    need = PREREQ.get(phase)
    if need and need not in params.phases_done and not force:
        raise PhaseOrderError(f"{phase} requires {need} (done: {params.phases_done or 'none'})")


def run_phase(params: ModelParams, plan: TrainPlan, samples: Sequence[Sample], pool: SchemaPool,
              vocab: Vocabulary, force: bool = False,
              on_epoch: Callable[[dict], None] | None = None,
              gen_probe: Callable[[ModelParams], dict] | None = None):
    """Train the plan's extension groups; everything else stays bit-identical.

    ``gen_probe`` optionally computes generation metrics after each epoch.
    """
    if plan.phase == PRETRAIN:
        raise ValueError("use pretrain() for the base phase")
    check_order(params, plan.phase, force)
    items = prepare(params, samples, pool, vocab, kinds=plan.kinds,
                    generation=plan.phase != P1)
    if not items:
        raise EmptyDataset(f"no samples of kinds {plan.kinds} for {plan.phase}")

    frozen_before = set(params.frozen)
    params.frozen = {"base", *(g for g in EXT_GROUPS if g not in plan.groups)}
    opt = make_optimizer(plan.optimizer, plan.lr)
    metrics = []
    try:
        for epoch in range(plan.epochs):
            rng = np.random.default_rng([plan.seed, PHASES.index(plan.phase), epoch])
            losses = []
            for step, idx in enumerate(_batches(len(items), plan.batch_size, rng)):
                loss, grads = _batch_step(params, [items[i] for i in idx], plan.groups, step)
                opt.step(params, grads)
                losses.append(loss)
            row = {"phase": plan.phase, "epoch": epoch + 1, "loss": float(np.mean(losses)),
                   "metric": selection_accuracy(params, items, vocab)}
            if gen_probe is not None and plan.phase != P1:
                row["metric"].update(gen_probe(params))
            log.info("%s epoch %d loss %.4f %s", plan.phase, epoch + 1, row["loss"], row["metric"])
            metrics.append(row)
            if on_epoch:
                on_epoch(row)
    finally:
        params.frozen = frozen_before
    if plan.phase not in params.phases_done:
        params.phases_done.append(plan.phase)
    return params, metrics


def write_metrics(rows: Sequence[dict], path, append: bool = True) -> None:
    with open(path, "a" if append else "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps({"format_version": 1, **r}, sort_keys=True) + "\n")
