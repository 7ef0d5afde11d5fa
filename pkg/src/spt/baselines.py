"""Comparison systems: BM25 over schema descriptions and a plain-text prompt pipeline."""
from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyCorpus, InvalidDoc
from .formats import prefix_tokens
from .model import ModelParams, _check_ids, _forward
from .textcore import EOS, Vocabulary


def _terms(text: str) -> list[str]:
    return text.lower().split()


@dataclass(frozen=True)
class Bm25Index:
    names: tuple[str, ...]
    doc_terms: tuple[Counter, ...]
    doc_len: tuple[int, ...]
    df: dict
    avg_len: float
    k1: float = 1.2
    b: float = 0.75

    @property
    def n_docs(self) -> int:
        return len(self.names)

    def idf(self, term: str) -> float:
        df = self.df.get(term, 0)
        n = self.n_docs
        return max(0.0, math.log((n - df + 0.5) / (df + 0.5) + 1.0))


def build_index(docs: Sequence[tuple[str, str]], k1: float = 1.2, b: float = 0.75) -> Bm25Index:
    if not docs:
        raise EmptyCorpus("no documents to index")
    names, terms, lens = [], [], []
    df: Counter = Counter()
    for name, desc in docs:
        toks = _terms(desc)
        if not toks:
            raise ValueError(f"empty description for {name!r}")
        c = Counter(toks)
        names.append(name)
        terms.append(c)
        lens.append(len(toks))
        df.update(c.keys())
    return Bm25Index(tuple(names), tuple(terms), tuple(lens), dict(df),
                     sum(lens) / len(lens), k1, b)


def score(index: Bm25Index, query: str, doc_id: int) -> float:
    if not 0 <= doc_id < index.n_docs:
        raise InvalidDoc(f"doc id {doc_id} outside [0, {index.n_docs})")
    tf = index.doc_terms[doc_id]
    norm = index.k1 * (1 - index.b + index.b * index.doc_len[doc_id] / index.avg_len)
    total = 0.0
    for t in _terms(query):
        f = tf.get(t, 0)
        if f:
            total += index.idf(t) * f * (index.k1 + 1) / (f + norm)
    return total


def topk(index: Bm25Index, query: str, k: int) -> list[str]:
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = [score(index, query, i) for i in range(index.n_docs)]
    order = sorted(range(index.n_docs), key=lambda i: (-scores[i], i))
    return [index.names[i] for i in order[:k]]


def pool_index(pool, **kw) -> Bm25Index:
    return build_index([(s.name, s.description) for s in pool], **kw)


class PromptPipeline:
    """Unconstrained greedy decoding of the plain-text output with the base model.

    Schema names, the rejection word and every JSON literal are produced
    token by token; extension rows are excluded from the argmax.
    """

    def __init__(self, params: ModelParams, vocab: Vocabulary, max_tokens: int = 160):
        self.params, self.vocab = params, vocab
        self.max_tokens = max_tokens
        self.eos = vocab.id(EOS)

    def run(self, query: str) -> tuple[list[str], float]:
        ctx = [self.vocab.id(t) for t in prefix_tokens(query)]
        out = []
        head = self.params.head
        t0 = time.perf_counter()
        limit = self.params.config.max_seq_len
        while len(out) < self.max_tokens and len(ctx) < limit:
            ids = np.asarray(ctx, dtype=np.int64)[None]
            _check_ids(self.params, ids)
            h, _ = _forward(self.params, ids)
            tok = int(np.argmax(head @ h[0, -1]))
            out.append(self.vocab.token(tok))
            ctx.append(tok)
            if tok == self.eos:
                break
        return out, time.perf_counter() - t0
