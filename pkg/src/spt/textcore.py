"""Word-level tokenizer and vocabulary with an extension region.

Base ids occupy ``[0, |V|)``. The extension region follows immediately:
one token per schema (``<NAME>``), then ``<Rej>`` and ``<Gen>``.

Tokenization splits on whitespace and additionally isolates the JSON-ish
format literals ``{ } " : ,`` and the newline, so templates such as
``{"name": "X"}`` tokenize into structural pieces plus words. A period
that ends a word ("over.") is split off as its own token.
"""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DuplicateSchema, InvalidTokenId

BOS, EOS, UNK, SEP = "<bos>", "<eos>", "<unk>", "<sep>"
LBRACE, RBRACE, QUOTE, COLON, COMMA, NEWLINE = "{", "}", '"', ":", ",", "\n"
REJ, GEN = "<Rej>", "<Gen>"

SPECIAL_TOKENS = (BOS, EOS, UNK, SEP)
FORMAT_LITERALS = (LBRACE, RBRACE, QUOTE, COLON, COMMA, NEWLINE)
STRUCTURAL_TOKENS = SPECIAL_TOKENS + FORMAT_LITERALS

_TOKEN_RE = re.compile(r'[{}":,\n]|[^\s{}":,]+')
_FINAL_DOT = re.compile(r'(?<=[^\s.])\.(?=\s|$)')

# Spacing table used by decode: no space is written after these tokens ...
_NO_SPACE_AFTER = {LBRACE, NEWLINE}
# ... and none before these.
_NO_SPACE_BEFORE = {RBRACE, COLON, COMMA, NEWLINE, "."}


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(_FINAL_DOT.sub(" .", text))


def schema_surface(name: str) -> str:
    """Surface form of a schema token, e.g. ``<CRISIS>``."""
    return f"<{name}>"


@dataclass(frozen=True)
class Vocabulary:
    base_tokens: tuple[str, ...]
    extension_tokens: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        index = {}
        for i, tok in enumerate(self.base_tokens + self.extension_tokens):
            if tok in index:
                raise ValueError(f"duplicate token {tok!r}")
            index[tok] = i
        object.__setattr__(self, "_index", index)

    @property
    def n_base(self) -> int:
        return len(self.base_tokens)

    @property
    def n_schemas(self) -> int:
        return len(self.extension_tokens) - 2

    def __len__(self) -> int:
        return len(self.base_tokens) + len(self.extension_tokens)

    @property
    def rej_id(self) -> int:
        return self.n_base + self.n_schemas

    @property
    def gen_id(self) -> int:
        return self.n_base + self.n_schemas + 1

    def schema_id(self, k: int) -> int:
        """Token id of the k-th schema in pool order."""
        if not 0 <= k < self.n_schemas:
            raise IndexError(k)
        return self.n_base + k

    def schema_index(self, token_id: int) -> int | None:
        k = token_id - self.n_base
        return k if 0 <= k < self.n_schemas else None

    def is_extension(self, token_id: int) -> bool:
        return token_id >= self.n_base

    def id(self, token: str) -> int:
        return self._index.get(token, self._index[UNK])

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def token(self, token_id: int) -> str:
        if not 0 <= token_id < len(self):
            raise InvalidTokenId(f"token id {token_id} outside [0, {len(self)})")
        if token_id < self.n_base:
            return self.base_tokens[token_id]
        return self.extension_tokens[token_id - self.n_base]

    def word_ids(self) -> list[int]:
        """Ids of ordinary (non-structural) base words."""
        structural = set(STRUCTURAL_TOKENS)
        return [i for i, t in enumerate(self.base_tokens) if t not in structural]

    def to_json(self) -> dict:
        return {"base": list(self.base_tokens), "extension": list(self.extension_tokens)}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        return cls(tuple(obj["base"]), tuple(obj["extension"]))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False)


def build_vocabulary(corpus: Sequence[str], schema_names: Sequence[str]) -> Vocabulary:
    """Build a deterministic vocabulary from a corpus and a schema list.

    Word types are ordered by descending frequency, then lexicographically.
    Structural tokens always come first, in a fixed order.
    """
    if not corpus:
        raise ValueError("corpus must be nonempty")
    seen = set()
    for name in schema_names:
        if name in seen:
            raise DuplicateSchema(f"duplicate schema name {name!r}")
        seen.add(name)

    counts = Counter()
    for text in corpus:
        counts.update(tokenize(text))
    extension = tuple(schema_surface(n) for n in schema_names) + (REJ, GEN)
    reserved = set(STRUCTURAL_TOKENS) | set(extension)
    words = sorted((w for w in counts if w not in reserved), key=lambda w: (-counts[w], w))
    return Vocabulary(STRUCTURAL_TOKENS + tuple(words), extension)


def encode(v: Vocabulary, text: str) -> list[int]:
    return [v.id(t) for t in tokenize(text)]


def detokenize(tokens: Iterable[str]) -> str:
    """Join tokens using the canonical spacing table.

    Quotes alternate between opening (space before, none after) and closing
    (no space before).
    """
    out = []
    prev = None
    quote_open = False
    for tok in tokens:
        closing = False
        if tok == QUOTE:
            closing = quote_open
            quote_open = not quote_open
        if prev is not None:
            glue = (prev in _NO_SPACE_AFTER or prev == "open-quote"
                    or tok in _NO_SPACE_BEFORE or closing)
            if not glue:
                out.append(" ")
        out.append(tok)
        prev = "open-quote" if tok == QUOTE and not closing else tok
    return "".join(out)


def decode(v: Vocabulary, seq: Iterable[int]) -> str:
    """Inverse of :func:`encode` for text in canonical spacing."""
    return detokenize(v.token(int(t)) for t in seq)
