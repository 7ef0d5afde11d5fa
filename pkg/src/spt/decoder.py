"""Dual-mode constrained decoding: select → (reject → generate) → infill.

All choices are greedy argmaxes over an explicit allowed-id set; tokens the
grammar fixes are appended without consulting the model. Schema tokens are
expanded to their plain names before they re-enter the context; the generated
schema's name position carries the ``<Gen>`` soft prompt.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GrammarError, TruncatedGeneration
from .formats import (GEN_INTRO, GEN_WORD, REJ_WORD, RESULTS, json_open, prefix_tokens,
                      role_key)
from .model import ModelParams, _check_ids, _forward, full_head
from .registry import SchemaDef, SchemaPool
from .textcore import (COLON, COMMA, EOS, GEN, LBRACE, NEWLINE, QUOTE, RBRACE, REJ,
                       STRUCTURAL_TOKENS, Vocabulary, detokenize, schema_surface, tokenize)

SELECTING, GENERATING, INFILLING, DONE = "Selecting", "Generating", "Infilling", "Done"


@dataclass
class TraceStep:
    position: int
    mode: str
    token: str
    prob: float

    def to_json(self):
        return {"position": self.position, "mode": self.mode, "token": self.token,
                "prob": round(float(self.prob), 6)}


@dataclass
class DecodeTrace:
    query: str
    selected: list[str] = field(default_factory=list)
    rejected: bool = False
    generated: SchemaDef | None = None
    fills: list[dict] = field(default_factory=list)
    modes: list[str] = field(default_factory=list)
    steps: list[TraceStep] = field(default_factory=list)
    output: list[str] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def n_generated(self) -> int:
        """Tokens chosen by the model (forced template tokens excluded)."""
        return len(self.steps)

    def to_json(self) -> dict:
        gen = None
        if self.generated is not None:
            gen = {"name": self.generated.name, "roles": list(self.generated.roles)}
        return {
            "query": self.query,
            "selected": [schema_surface(n) for n in self.selected] or ([REJ] if self.rejected else []),
            "generated": gen,
            "fills": self.fills,
            "modes": self.modes,
            "output": detokenize(self.output),
            "trace": [s.to_json() for s in self.steps],
        }

    def dumps(self, **kw) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False, **kw)


class Decoder:
    """Greedy grammar-constrained decoder over a trained checkpoint.

    ``logit_bias`` maps token ids to additive offsets (``inf`` forces a
    token whenever it is allowed); ``logit_hook(mode, step, logits)`` may
    rewrite the logits before masking.
    """

    def __init__(self, params: ModelParams, vocab: Vocabulary, pool: SchemaPool,
                 copy_constraint: bool = True, max_gen_tokens: int = 48,
                 max_value_tokens: int = 12, logit_bias: dict | None = None,
                 logit_hook: Callable | None = None):
        if vocab.n_schemas != len(pool) or params.n_schemas != len(pool):
            raise ValueError("vocabulary, params and pool disagree on the schema count")
        self.params, self.vocab, self.pool = params, vocab, pool
        self.copy_constraint = copy_constraint
        self.max_gen_tokens = max_gen_tokens
        self.max_value_tokens = max_value_tokens
        self.logit_bias = dict(logit_bias or {})
        self.logit_hook = logit_hook
        self._W = full_head(params)
        v = vocab
        self.schema_ids = np.arange(v.n_base, v.n_base + v.n_schemas)
        self.nl, self.comma, self.quote = v.id(NEWLINE), v.id(COMMA), v.id(QUOTE)
        self.rbrace = v.id(RBRACE)
        self.word_ids = np.array(v.word_ids(), dtype=np.int64)
        self._value_free = np.append(self.word_ids, self.quote)

    # ---------------------------------------------------------- internals
    def _ids(self, toks: Sequence[str]) -> list[int]:
        return [self.vocab.id(t) for t in toks]

    def logits(self, ctx: Sequence[int]) -> np.ndarray:
        if len(ctx) > self.params.config.max_seq_len:
            raise TruncatedGeneration(f"context reached max_seq_len={self.params.config.max_seq_len}")
        ids = np.asarray(ctx, dtype=np.int64)[None]
        _check_ids(self.params, ids)
        h, _ = _forward(self.params, ids)
        return (self._W @ h[0, -1]).astype(np.float64)

    def _choose(self, ctx, allowed, mode: str, trace: DecodeTrace | None, step: int = 0):
        z = self.logits(ctx)
        if self.logit_hook is not None:
            z = np.asarray(self.logit_hook(mode, step, z), dtype=np.float64)
        for tid, b in self.logit_bias.items():
            z[tid] += b
        allowed = np.asarray(allowed, dtype=np.int64)
        if allowed.size == 0:
            raise GrammarError(f"empty output mask in mode {mode}")
        za = z[allowed]
        tok = int(allowed[int(np.argmax(za))])
        if trace is not None:
            trace.steps.append(TraceStep(len(ctx) - 1, mode, self.vocab.token(tok),
                                         _prob(z, tok)))
        return tok, z

    # ----------------------------------------------------------- selection
    def rank_schemas(self, query: str) -> list[int]:
        """Schema indices by descending score at the first selection position."""
        z = self.logits(self._ids(prefix_tokens(query)))
        scores = z[self.schema_ids]
        return [int(k) for k in np.lexsort((np.arange(len(scores)), -scores))]

    def _select(self, ctx: list[int], trace: DecodeTrace) -> None:
        """Schema list ``S1 , S2 , ...``: after each schema the separator competes
        with end-of-selection; after a separator only unlisted schemas remain."""
        v = self.vocab
        trace.modes.append(SELECTING)
        first = np.append(self.schema_ids, v.rej_id)
        tok, _ = self._choose(ctx, first, SELECTING, trace)
        if tok == v.rej_id:
            trace.rejected = True
            return
        chosen = [v.schema_index(tok)]
        step = 1
        while True:
            name = self.pool[chosen[-1]].name
            ctx.append(v.id(name))
            trace.output.append(name)
            rest = [i for i in self.schema_ids if v.schema_index(int(i)) not in chosen]
            tok, _ = self._choose(ctx, [self.comma, self.nl] if rest else [self.nl],
                                  SELECTING, trace, step)
            step += 1
            if tok == self.nl:
                break
            ctx.append(self.comma)
            trace.output.append(COMMA)
            tok, _ = self._choose(ctx, rest, SELECTING, trace, step)
            step += 1
            chosen.append(v.schema_index(tok))
        trace.selected = [self.pool[k].name for k in chosen]

    # ---------------------------------------------------------- generation
    def _generate(self, ctx: list[int], trace: DecodeTrace) -> SchemaDef:
        """Decode a role list; ``ctx`` ends just after the arguments brace."""
        v = self.vocab
        trace.modes.append(GENERATING)
        roles: list[str] = []
        budget = self.max_gen_tokens
        while True:
            self._force(ctx, [QUOTE], trace)
            words: list[int] = []
            while True:
                if budget <= 0:
                    raise TruncatedGeneration("role list exceeded the generation budget")
                allowed = self.word_ids
                if words and detokenize(v.token(i) for i in words) not in roles:
                    allowed = np.append(self.word_ids, self.quote)
                tok, _ = self._choose(ctx, allowed, GENERATING, trace)
                budget -= 1
                ctx.append(tok)
                trace.output.append(v.token(tok))
                if tok == self.quote:
                    break
                words.append(tok)
            roles.append(detokenize(v.token(i) for i in words))
            self._force(ctx, [COLON, QUOTE, QUOTE], trace)
            if budget <= 0:
                raise TruncatedGeneration("role list exceeded the generation budget")
            tok, _ = self._choose(ctx, [self.comma, self.rbrace], GENERATING, trace)
            budget -= 1
            ctx.append(tok)
            trace.output.append(v.token(tok))
            if tok == self.rbrace:
                self._force(ctx, [RBRACE], trace)
                break
        return SchemaDef(GEN, tuple(roles), task_kind="ODIE-like")

    def _force(self, ctx: list[int], toks: Sequence[str], trace: DecodeTrace | None) -> None:
        ids = self._ids(toks)
        ctx += ids
        if trace is not None:
            trace.output += list(toks)

    # ----------------------------------------------------------- infilling
    def _infill(self, ctx: list[int], name_id: int, roles: Sequence[str], query_ids: list[int],
                trace: DecodeTrace) -> dict[str, str]:
        v = self.vocab
        open_toks = json_open(GEN_WORD)
        ids = self._ids(open_toks)
        ids[6] = name_id
        ctx += ids
        trace.output += open_toks[:6] + [v.token(name_id)] + open_toks[7:]
        out = {}
        for j, role in enumerate(roles):
            self._force(ctx, role_key(role, j == 0), trace)
            value = self._value(ctx, query_ids, trace)
            out[role] = detokenize(v.token(i) for i in value)
        self._force(ctx, [RBRACE, RBRACE], trace)
        return out

    def _value(self, ctx: list[int], query_ids: list[int], trace: DecodeTrace) -> list[int]:
        value: list[int] = []
        starts = list(range(len(query_ids)))
        while True:
            if self.copy_constraint:
                nxt = {query_ids[i + len(value)] for i in starts if i + len(value) < len(query_ids)}
                nxt.discard(self.quote)
                allowed = np.array(sorted(nxt) + [self.quote], dtype=np.int64)
            else:
                allowed = self._value_free
            if len(value) >= self.max_value_tokens:
                allowed = np.array([self.quote], dtype=np.int64)
            tok, _ = self._choose(ctx, allowed, INFILLING, trace)
            ctx.append(tok)
            trace.output.append(self.vocab.token(tok))
            if tok == self.quote:
                return value
            starts = [i for i in starts if i + len(value) < len(query_ids)
                      and query_ids[i + len(value)] == tok]
            value.append(tok)

    # -------------------------------------------------------------- public
    def extract(self, query: str) -> DecodeTrace:
        """Full decode; a :class:`TruncatedGeneration` carries the partial trace."""
        trace = DecodeTrace(query)
        t0 = time.perf_counter()
        try:
            self._extract(query, trace)
        except TruncatedGeneration as exc:
            exc.trace = trace
            raise
        finally:
            trace.seconds = time.perf_counter() - t0
        return trace

    def _extract(self, query: str, trace: DecodeTrace) -> None:
        v = self.vocab
        q_ids = self._ids(tokenize(query))
        ctx = self._ids(prefix_tokens(query))
        self._select(ctx, trace)
        if trace.rejected:
            self._force(ctx, [REJ_WORD, NEWLINE, *GEN_INTRO, NEWLINE], trace)
            head = json_open(GEN_WORD)
            ids = self._ids(head)
            ids[6] = v.gen_id
            ctx += ids
            trace.output += head[:6] + [GEN] + head[7:]
            schema = self._generate(ctx, trace)
            trace.generated = schema
            self._force(ctx, [NEWLINE, *RESULTS, NEWLINE], trace)
            trace.modes.append(INFILLING)
            fill = self._infill(ctx, v.gen_id, schema.roles, q_ids, trace)
            trace.fills.append({"schema": GEN, "arguments": fill})
            self._force(ctx, [NEWLINE], trace)
        else:
            self._force(ctx, [NEWLINE, *RESULTS, NEWLINE], trace)
            trace.modes.append(INFILLING)
            for name in trace.selected:
                s = self.pool.get(name)
                fill = self._infill(ctx, v.id(name), s.roles, q_ids, trace)
                trace.fills.append({"schema": name, "arguments": fill})
                self._force(ctx, [NEWLINE], trace)
        self._force(ctx, [EOS], trace)
        trace.modes.append(DONE)

    def select(self, query: str):
        """Selected schema names, or ``None`` for a rejection."""
        trace = DecodeTrace(query)
        self._select(self._ids(prefix_tokens(query)), trace)
        return None if trace.rejected else trace.selected

    def generate_schema(self, query: str) -> SchemaDef:
        trace = DecodeTrace(query)
        ctx = self._ids(prefix_tokens(query) + [REJ_WORD, NEWLINE, *GEN_INTRO, NEWLINE])
        ids = self._ids(json_open(GEN_WORD))
        ids[6] = self.vocab.gen_id
        return self._generate(ctx + ids, trace)

    def infill(self, query: str, schemas: SchemaDef | Sequence[SchemaDef]) -> list[dict[str, str]]:
        """Fill pool schemas given as known (gold) selections, in order."""
        schemas = [schemas] if isinstance(schemas, SchemaDef) else list(schemas)
        v = self.vocab
        trace = DecodeTrace(query)
        line = []
        for j, s in enumerate(schemas):
            line += ([COMMA] if j else []) + [s.name]
        ctx = self._ids(prefix_tokens(query) + line + [NEWLINE, *RESULTS, NEWLINE])
        q_ids = self._ids(tokenize(query))
        out = []
        for s in schemas:
            out.append(self._infill(ctx, v.id(s.name), s.roles, q_ids, trace))
            ctx.append(self.nl)
        return out


def _prob(z: np.ndarray, tok: int) -> float:
    """Softmax probability of ``tok`` under the full (unmasked) row."""
    inf = np.isposinf(z)
    if inf.any():
        return float(inf[tok]) / float(inf.sum())
    m = z.max()
    e = np.exp(z - m)
    return float(e[tok] / e.sum())


# ----------------------------------------------------------- module API

def select_schemas(params, query, pool, vocab, **kw):
    return Decoder(params, vocab, pool, **kw).select(query)


def generate_schema(params, query, pool, vocab, **kw) -> SchemaDef:
    return Decoder(params, vocab, pool, **kw).generate_schema(query)


def infill(params, query, schema, pool, vocab, copy_constraint: bool = True, **kw):
    return Decoder(params, vocab, pool, copy_constraint=copy_constraint, **kw).infill(query, schema)[0]


def extract(params, query, pool, vocab, **kw) -> DecodeTrace:
    return Decoder(params, vocab, pool, **kw).extract(query)


# ------------------------------------------------------- output grammar

class _Tokens:
    def __init__(self, toks):
        self.toks = list(toks)
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, expect=None):
        tok = self.peek()
        if tok is None:
            raise GrammarError(f"unexpected end of output, wanted {expect!r}")
        if expect is not None and tok != expect:
            raise GrammarError(f"token {self.i}: expected {expect!r}, got {tok!r}")
        self.i += 1
        return tok

    def seq(self, toks):
        for t in toks:
            self.take(t)


def _parse_string(ts: _Tokens, allow_empty: bool) -> str:
    ts.take(QUOTE)
    words = []
    while ts.peek() != QUOTE:
        tok = ts.take()
        if tok in (LBRACE, RBRACE, NEWLINE) or tok in STRUCTURAL_TOKENS[:4]:
            raise GrammarError(f"structural token {tok!r} inside a string")
        words.append(tok)
    ts.take(QUOTE)
    if not words and not allow_empty:
        raise GrammarError("empty string where a name is required")
    return detokenize(words)


def _parse_object(ts: _Tokens, empty_values: bool) -> tuple[str, list[str], list[str]]:
    ts.seq([LBRACE, QUOTE, "name", QUOTE, COLON])
    name = _parse_string(ts, allow_empty=False)
    ts.seq([COMMA, QUOTE, "arguments", QUOTE, COLON, LBRACE])
    roles, values = [], []
    while True:
        roles.append(_parse_string(ts, allow_empty=False))
        ts.take(COLON)
        values.append(_parse_string(ts, allow_empty=True))
        if empty_values and values[-1]:
            raise GrammarError("schema header values must be empty")
        if ts.peek() == COMMA:
            ts.take(COMMA)
            continue
        ts.take(RBRACE)
        break
    ts.take(RBRACE)
    if len(set(roles)) != len(roles):
        raise GrammarError("duplicate role in template")
    return name, roles, values


def parse_template(tokens: Sequence[str]) -> SchemaDef:
    """Parse a generated schema header ``{"name": ..., "arguments": {...}}``."""
    ts = _Tokens(tokens)
    name, roles, _ = _parse_object(ts, empty_values=True)
    if ts.peek() is not None:
        raise GrammarError("trailing tokens after template")
    return SchemaDef(name, tuple(roles), task_kind="ODIE-like")


def parse_output(tokens: Sequence[str] | str, pool: SchemaPool | None = None) -> dict:
    """Validate a decoder output (everything after the prompt prefix).

    Returns ``{"selected", "rejected", "generated", "fills"}``; raises GrammarError.
    """
    if isinstance(tokens, str):
        tokens = tokenize(tokens)
    ts = _Tokens(tokens)
    names = set(pool.names) if pool is not None else None
    out = {"selected": [], "rejected": False, "generated": None, "fills": []}
    if ts.peek() in (REJ_WORD, REJ):
        ts.take()
        out["rejected"] = True
        ts.take(NEWLINE)
        ts.seq(GEN_INTRO + [NEWLINE])
        start = ts.i
        _parse_object(ts, empty_values=True)
        out["generated"] = parse_template(tokens[start:ts.i])
        ts.take(NEWLINE)
        expected = 1
    else:
        while True:
            name = ts.take()
            if names is not None and name not in names:
                raise GrammarError(f"unknown schema {name!r} in selection")
            if name in out["selected"]:
                raise GrammarError(f"schema {name!r} selected twice")
            out["selected"].append(name)
            if ts.peek() == COMMA:
                ts.take()
                continue
            ts.take(NEWLINE)
            break
        expected = len(out["selected"])
    ts.seq(RESULTS + [NEWLINE])
    for j in range(expected):
        name, roles, values = _parse_object(ts, empty_values=False)
        want = out["selected"][j] if out["generated"] is None else None
        if want is not None and name != want:
            raise GrammarError(f"fill {j} names {name!r}, expected {want!r}")
        if want is not None and pool is not None and tuple(roles) != pool.get(want).roles:
            raise GrammarError(f"fill {j} roles do not match schema {want!r}")
        if out["generated"] is not None and tuple(roles) != out["generated"].roles:
            raise GrammarError("fill roles do not match the generated header")
        out["fills"].append({"schema": name, "arguments": dict(zip(roles, values))})
        ts.take(NEWLINE)
    ts.take(EOS)
    if ts.peek() is not None:
        raise GrammarError("trailing tokens after <eos>")
    return out
