"""Deterministic synthetic corpus with exact gold labels.

Closed samples join one to four schema fragments; schema-free samples come
from unrelated topics; open samples instantiate schemas that are not in the
pool (the references for generation mode).
"""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ParseError, SpecError
from .lexicon import (
    CONNECTORS, DESCRIPTION_FRAME, FREE_SLOTS, FREE_TEMPLATES, OPEN_FAMILIES, POOL_FAMILIES,
    POOLS, Family,
)
from .registry import SchemaDef, SchemaPool, validate_pool
from .textcore import detokenize, tokenize

CLOSED, SCHEMA_FREE, OPEN = "Closed", "SchemaFree", "Open"
KINDS = (CLOSED, SCHEMA_FREE, OPEN)
_SLOT_RE = re.compile(r"\{([^{}]+)\}")
_SPLIT_CODES = {"train": 1, "test": 2}


@dataclass
class Sample:
    query: str
    kind: str
    gold_schemas: list[str] = field(default_factory=list)
    gold_fills: dict[str, dict[str, str]] = field(default_factory=dict)
    gold_open_schema: SchemaDef | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sample kind {self.kind!r}")

    def to_json(self) -> dict:
        return {
            "gold_fills": self.gold_fills,
            "gold_open_schema": None if self.gold_open_schema is None else self.gold_open_schema.to_json(),
            "gold_schemas": self.gold_schemas,
            "kind": self.kind,
            "query": self.query,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Sample":
        open_schema = obj.get("gold_open_schema")
        return cls(
            query=obj["query"],
            kind=obj["kind"],
            gold_schemas=list(obj.get("gold_schemas", [])),
            gold_fills={k: dict(v) for k, v in obj.get("gold_fills", {}).items()},
            gold_open_schema=None if open_schema is None else SchemaDef.from_json(open_schema),
        )


@dataclass
class GenSpec:
    n_schemas: int = 26
    n_train: int = 6000
    n_test: int = 600
    schema_free_ratio: float = 0.30
    open_ratio: float = 0.10
    test_schema_free_ratio: float | None = None
    test_open_ratio: float | None = None
    avg_schemas_per_sample: float = 2.2
    contextual_cue_strength: float = 1.0
    # share of multi-schema queries whose fragments all come from one domain
    same_domain_ratio: float = 0.5
    # share of queries closed with a sentence-final period
    period_ratio: float = 0.5
    seed: int = 7

    def validate(self) -> None:
        for name in ("schema_free_ratio", "open_ratio", "contextual_cue_strength", "period_ratio",
                     "same_domain_ratio"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SpecError(f"{name} must lie in [0, 1]")
        for name in ("test_schema_free_ratio", "test_open_ratio"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise SpecError(f"{name} must lie in [0, 1]")
        if self.schema_free_ratio + self.open_ratio > 1.0:
            raise SpecError("schema_free_ratio + open_ratio exceeds 1")
        if self.n_train <= 0 or self.n_test <= 0 or self.n_schemas <= 0:
            raise SpecError("counts must be positive")
        if self.n_schemas > len(POOL_FAMILIES):
            raise SpecError(f"at most {len(POOL_FAMILIES)} schema families are available, "
                            f"got n_schemas={self.n_schemas}")
        if not 1.0 <= self.avg_schemas_per_sample <= 4.0:
            raise SpecError("avg_schemas_per_sample must lie in [1, 4]")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "GenSpec":
        return cls(**obj)


def build_pool(n_schemas: int = 26) -> SchemaPool:
    schemas = []
    for fam in POOL_FAMILIES[:n_schemas]:
        desc = " ".join(DESCRIPTION_FRAME + fam.description)
        schemas.append(SchemaDef(fam.name, fam.role_names, desc, fam.task_kind))
    return SchemaPool(tuple(schemas))


def _fill_template(template: str, values: dict[str, str]) -> list[str]:
    return tokenize(_SLOT_RE.sub(lambda m: values[m.group(1)], template))


def _fragment(fam: Family, rng: np.random.Generator, cue_strength: float):
    trigger = str(rng.choice(fam.triggers))
    values: dict[str, str] = {"T": trigger}
    fills: dict[str, str] = {}
    used: set[str] = set()
    for role, pool_key in fam.roles:
        if pool_key == "TRIGGER":
            value = trigger
        else:
            choices = [v for v in POOLS[pool_key] if v not in used]
            value = str(rng.choice(choices))
        used.add(value)
        values[role] = value
        fills[role] = value
    tokens = _fill_template(str(rng.choice(fam.templates)), values)
    if fam.description and rng.random() >= cue_strength:
        tokens = [str(rng.choice(fam.description))] + tokens
    return tokens, fills


def _n_fragments(rng: np.random.Generator, avg: float) -> int:
    return 1 + int(rng.binomial(3, (avg - 1.0) / 3.0))


def _closed_sample(families, rng, spec: GenSpec) -> Sample:
    k = _n_fragments(rng, spec.avg_schemas_per_sample)
    first = int(rng.integers(len(families)))
    others = [j for j in range(len(families)) if j != first]
    if rng.random() < spec.same_domain_ratio:
        others = [j for j in others if families[j].task_kind == families[first].task_kind]
    k = min(k, len(others) + 1)
    picks = [first, *rng.choice(others, size=k - 1, replace=False)]
    tokens: list[str] = []
    names, fills = [], {}
    for j, idx in enumerate(picks):
        fam = families[int(idx)]
        frag, frag_fills = _fragment(fam, rng, spec.contextual_cue_strength)
        if j:
            tokens += tokenize(str(rng.choice(CONNECTORS)))
        tokens += frag
        names.append(fam.name)
        fills[fam.name] = frag_fills
    return Sample(detokenize(tokens), CLOSED, names, fills)


def _free_sample(rng) -> Sample:
    template = str(rng.choice(FREE_TEMPLATES))
    text = _SLOT_RE.sub(lambda m: str(rng.choice(FREE_SLOTS[m.group(1)])), template)
    return Sample(detokenize(tokenize(text)), SCHEMA_FREE)


def _open_sample(rng) -> Sample:
    fam = OPEN_FAMILIES[int(rng.integers(len(OPEN_FAMILIES)))]
    tokens, fills = _fragment(fam, rng, 1.0)
    schema = SchemaDef(fam.name, fam.role_names, "", fam.task_kind)
    return Sample(detokenize(tokens), OPEN, [], {fam.name: fills}, schema)


def _kind_plan(n: int, free_ratio: float, open_ratio: float, rng) -> list[str]:
    n_free = int(round(free_ratio * n))
    n_open = int(round(open_ratio * n))
    kinds = [SCHEMA_FREE] * n_free + [OPEN] * n_open + [CLOSED] * (n - n_free - n_open)
    order = rng.permutation(n)
    return [kinds[i] for i in order]


def _make_split(spec: GenSpec, split: str, n: int, free_ratio: float, open_ratio: float,
                exclude: set[str]) -> list[Sample]:
    code = _SPLIT_CODES[split]
    families = POOL_FAMILIES[:spec.n_schemas]
    plan = _kind_plan(n, free_ratio, open_ratio, np.random.default_rng([spec.seed, code, 0]))
    out = []
    for i, kind in enumerate(plan):
        period = np.random.default_rng([spec.seed, code, 2, i]).random() < spec.period_ratio
        for attempt in range(1000):
            rng = np.random.default_rng([spec.seed, code, 1, i, attempt])
            if kind == CLOSED:
                sample = _closed_sample(families, rng, spec)
            elif kind == SCHEMA_FREE:
                sample = _free_sample(rng)
            else:
                sample = _open_sample(rng)
            if period:
                sample.query += "."
            # closed/open test queries must be unseen instantiations
            if kind == SCHEMA_FREE or sample.query.rstrip(".") not in exclude:
                break
        else:  # pragma: no cover
            raise SpecError(f"could not draw an unseen {kind} sample")
        out.append(sample)
    return out


def check_sample(sample: Sample) -> None:
    """Raise AssertionError if a sample violates its label invariants."""
    qtok = tokenize(sample.query)
    if sample.kind == CLOSED:
        assert sample.gold_schemas, "closed sample without gold schemas"
    if sample.kind == SCHEMA_FREE:
        assert not sample.gold_schemas and not sample.gold_fills
    if sample.kind == OPEN:
        assert sample.gold_open_schema is not None and sample.gold_open_schema.roles
    for fills in sample.gold_fills.values():
        for span in fills.values():
            assert span in sample.query, f"span {span!r} not in query"
            st = tokenize(span)
            assert any(qtok[i:i + len(st)] == st for i in range(len(qtok) - len(st) + 1))


def description_overlap(pool: SchemaPool, sample: Sample) -> set[str]:
    words = set(tokenize(sample.query))
    out = set()
    for name in sample.gold_schemas:
        out |= words & set(tokenize(pool.get(name).description))
    return out


def generate(spec: GenSpec) -> tuple[SchemaPool, list[Sample], list[Sample]]:
    spec.validate()
    pool = build_pool(spec.n_schemas)
    violations = validate_pool(pool, strict=True)
    if violations:  # pragma: no cover - lexicon bug
        raise SpecError("; ".join(violations))
    train = _make_split(spec, "train", spec.n_train, spec.schema_free_ratio, spec.open_ratio, set())
    seen = {s.query.rstrip(".") for s in train}
    test_free = spec.schema_free_ratio if spec.test_schema_free_ratio is None else spec.test_schema_free_ratio
    test_open = spec.open_ratio if spec.test_open_ratio is None else spec.test_open_ratio
    test = _make_split(spec, "test", spec.n_test, test_free, test_open, seen)
    for s in train + test:
        check_sample(s)
    return pool, train, test


def dataset_stats(samples: list[Sample]) -> dict:
    n = len(samples)
    counts = {k: sum(s.kind == k for s in samples) for k in KINDS}
    closed = [s for s in samples if s.kind == CLOSED]
    mean_k = float(np.mean([len(s.gold_schemas) for s in closed])) if closed else 0.0
    return {
        "n": n,
        "counts": counts,
        "schema_free_ratio": counts[SCHEMA_FREE] / n if n else 0.0,
        "open_ratio": counts[OPEN] / n if n else 0.0,
        "mean_gold_schemas_closed": mean_k,
    }


def write_jsonl(samples: Iterable[Sample], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path) -> list[Sample]:
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for n, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            out.append(Sample.from_json(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(str(exc), line=n) from exc
    return out
