"""Prompt and output layouts shared by training and decoding.

A document is a flat token list:

    <bos> PROMPT <sep> QUERY <sep> selected function : \\n
    NAME1 , NAME2 \\n                                   (selection line)
    extraction results : \\n {json1} \\n {json2} \\n <eos>

A rejected query writes ``none`` on the selection line. If a new schema is
proposed, a header follows before the results:

    none \\n based on the query , i should extract using schema : \\n
    {"name": "new", "arguments": {"Role": "", ...}} \\n extraction results : ...

In plain-text documents (base pretraining, prompt baseline) schema names are
ordinary words and ``new`` marks the generated schema. In SPT sequences the
selection decisions are supervised with extension-token targets and every
``new`` position carries the ``<Gen>`` soft prompt.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .datagen import CLOSED, OPEN, SCHEMA_FREE, Sample
from .errors import LabelMismatch
from .registry import SchemaPool, check_role_name
from .textcore import (BOS, COLON, COMMA, EOS, LBRACE, NEWLINE, QUOTE, RBRACE, REJ,
                       SEP, Vocabulary, detokenize, schema_surface, tokenize)

PROMPT = tokenize("select functions to extract structured information")
CUE = tokenize("selected function :")
REJ_WORD = "none"
GEN_WORD = "new"
GEN_INTRO = tokenize("based on the query , i should extract using schema :")
RESULTS = tokenize("extraction results :")


def prefix_tokens(query: str) -> list[str]:
    """Everything up to and including the newline after the selection cue."""
    return [BOS, *PROMPT, SEP, *tokenize(query), SEP, *CUE, NEWLINE]


def json_open(name_tok: str) -> list[str]:
    return [LBRACE, QUOTE, "name", QUOTE, COLON, QUOTE, name_tok, QUOTE, COMMA,
            QUOTE, "arguments", QUOTE, COLON, LBRACE]


def role_key(role: str, first: bool) -> list[str]:
    """Tokens from the separator up to the opening quote of the value."""
    return ([] if first else [COMMA]) + [QUOTE, *tokenize(role), QUOTE, COLON, QUOTE]


def json_tokens(name_tok: str, roles: Sequence[str], values: Sequence[str] | None = None):
    """Token list of a filled template plus the index span of each value.

    Spans are ``(start, end)`` with ``end`` the index of the closing quote.
    """
    values = values if values is not None else [""] * len(roles)
    toks = json_open(name_tok)
    spans = []
    for j, (r, v) in enumerate(zip(roles, values)):
        check_role_name(r)
        toks += role_key(r, j == 0)
        start = len(toks)
        toks += tokenize(v)
        spans.append((start, len(toks)))
        toks.append(QUOTE)
    toks += [RBRACE, RBRACE]
    return toks, spans


@dataclass
class Doc:
    """A rendered sample.

    ``decisions`` maps a position to the extension token it must predict
    (the selection choice at the cue or after a separator, in query order);
    ``choices`` gives the full set of correct tokens there (every gold
    schema not yet listed), since the selection is a set. ``sep_decisions``
    are name positions followed by the list separator and ``end_decision``
    is the name position followed by the end of the list. ``gen_span`` and
    ``fill_span`` list token indices whose *own* identity is supervised in
    SPT mode.
    """
    tokens: list[str]
    decisions: list[tuple[int, str]] = field(default_factory=list)
    choices: dict[int, list[str]] = field(default_factory=dict)
    sep_decisions: list[int] = field(default_factory=list)
    end_decision: int | None = None
    gen_positions: list[int] = field(default_factory=list)
    gen_span: list[int] = field(default_factory=list)
    fill_span: list[int] = field(default_factory=list)

    @property
    def text(self) -> str:
        return detokenize(self.tokens)


def render(sample: Sample, pool: SchemaPool | None = None,
           order: Sequence[int] | None = None) -> Doc:
    """Render a sample as a full plain-text document with SPT annotations.

    ``order`` permutes the gold schemas (selection line and results alike);
    by default they appear in query order.
    """
    toks = prefix_tokens(sample.query)
    doc = Doc(toks)
    cue = len(toks) - 1
    if sample.kind == CLOSED:
        if not sample.gold_schemas:
            raise LabelMismatch("closed sample without gold schemas")
        names = list(pool.names) if pool is not None else None
        gold = list(sample.gold_schemas)
        if order is not None:
            gold = [gold[i] for i in order]
        prev = cue
        for j, name in enumerate(gold):
            if names is not None and name not in names:
                raise LabelMismatch(f"gold schema {name!r} not in pool")
            if j:
                # continue-or-stop is decided on the name, the schema after the separator
                doc.sep_decisions.append(prev)
                toks.append(COMMA)
                prev = len(toks) - 1
            doc.decisions.append((prev, schema_surface(name)))
            doc.choices[prev] = [schema_surface(n) for n in gold[j:]]
            toks.append(name)
            prev = len(toks) - 1
        doc.end_decision = prev
        toks += [NEWLINE, *RESULTS, NEWLINE]
        for name in gold:
            roles = pool.get(name).roles if pool is not None else tuple(sample.gold_fills[name])
            fills = sample.gold_fills.get(name, {})
            _append_filled(doc, name, roles, [fills.get(r, "") for r in roles])
        toks.append(EOS)
        return doc

    if sample.gold_schemas:
        raise LabelMismatch(f"{sample.kind} sample carries gold schemas")
    doc.decisions.append((cue, REJ))
    doc.choices[cue] = [REJ]
    toks += [REJ_WORD, NEWLINE]
    if sample.kind == OPEN:
        schema = sample.gold_open_schema
        toks += [*GEN_INTRO, NEWLINE]
        head, _ = json_tokens(GEN_WORD, schema.roles)
        base = len(toks)
        doc.gen_positions.append(base + 6)
        # the role list starts after the arguments brace
        doc.gen_span.extend(range(base + 14, base + len(head)))
        toks += head
        toks += [NEWLINE, *RESULTS, NEWLINE]
        fills = sample.gold_fills.get(schema.name, {})
        _append_filled(doc, GEN_WORD, schema.roles, [fills.get(r, "") for r in schema.roles],
                       gen=True)
    elif sample.kind != SCHEMA_FREE:
        raise LabelMismatch(f"unknown sample kind {sample.kind!r}")
    toks.append(EOS)
    return doc


def _append_filled(doc: Doc, name_tok: str, roles, values, gen: bool = False) -> None:
    body, spans = json_tokens(name_tok, roles, values)
    base = len(doc.tokens)
    if gen:
        doc.gen_positions.append(base + 6)
        for s, e in spans:
            doc.fill_span.extend(range(base + s, base + e + 1))
    doc.tokens.extend(body)
    doc.tokens.append(NEWLINE)


def plain_ids(vocab: Vocabulary, doc: Doc) -> tuple[np.ndarray, np.ndarray]:
    """Next-token language-model pair over the whole document."""
    ids = np.array([vocab.id(t) for t in doc.tokens], dtype=np.int64)
    targets = np.full(len(ids), -1, dtype=np.int64)
    targets[:-1] = ids[1:]
    return ids, targets


def spt_ids(vocab: Vocabulary, doc: Doc, generation: bool = True,
            truncate: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Input ids and sparse targets for extension-row training.

    Selection positions are always supervised; with ``generation`` the
    header role list and the value spans of an open sample are supervised
    too, conditioned on the ``<Gen>`` soft prompt.
    """
    ids = np.array([vocab.id(t) for t in doc.tokens], dtype=np.int64)
    for p in doc.gen_positions:
        ids[p] = vocab.gen_id
    targets = np.full(len(ids), -1, dtype=np.int64)
    for p, tok in doc.decisions:
        targets[p] = vocab.id(tok)
    for p in doc.sep_decisions:
        targets[p] = vocab.id(COMMA)
    if doc.end_decision is not None:
        targets[doc.end_decision] = vocab.id(NEWLINE)
    if generation:
        for j in doc.gen_span + doc.fill_span:
            targets[j - 1] = ids[j]
    if truncate:
        last = int(np.flatnonzero(targets >= 0).max()) + 1
        ids, targets = ids[:last], targets[:last]
    return ids, targets


def build_training_sequences(sample: Sample, pool: SchemaPool, vocab: Vocabulary,
                             generation: bool = True):
    """SPT input ids and targets (``-1`` = unsupervised) for one sample."""
    return spt_ids(vocab, render(sample, pool), generation=generation)


def pretrain_docs(samples: Sequence[Sample], pool: SchemaPool, seed: int = 7) -> list[Doc]:
    """Plain-text documents for the base model.

    Gold schemas are listed in a random order per document so the base
    treats the selection line as a set rather than a sequence.
    """
    docs = []
    for i, s in enumerate(samples):
        order = None
        if len(s.gold_schemas) > 1:
            order = np.random.default_rng([seed, 5, i]).permutation(len(s.gold_schemas))
        docs.append(render(s, pool, order))
    return docs


def corpus_texts(samples: Sequence[Sample], pool: SchemaPool) -> list[str]:
    return [render(s, pool).text for s in samples]
