"""Schema pool: definitions, templates and governance checks."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import InvalidRoleName, ParseError
from .textcore import COLON, QUOTE, STRUCTURAL_TOKENS, Vocabulary, encode, tokenize

TASK_KINDS = ("NER", "RE", "EE", "ODIE-like")
FORMAT_VERSION = 1


@dataclass(frozen=True)
class SchemaDef:
    name: str
    roles: tuple[str, ...]
    description: str = ""
    task_kind: str = "EE"

    def __post_init__(self):
        object.__setattr__(self, "roles", tuple(self.roles))
        if not self.name:
            raise ValueError("schema name must be nonempty")
        if not self.roles:
            raise ValueError(f"schema {self.name!r} has no roles")
        if len(set(self.roles)) != len(self.roles):
            raise ValueError(f"schema {self.name!r} has duplicate roles")
        if self.task_kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.task_kind!r}")

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "roles": list(self.roles),
            "task_kind": self.task_kind,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SchemaDef":
        return cls(obj["name"], tuple(obj["roles"]), obj.get("description", ""),
                   obj.get("task_kind", "EE"))


@dataclass(frozen=True)
class SchemaPool:
    schemas: tuple[SchemaDef, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "schemas", tuple(self.schemas))

    def __len__(self):
        return len(self.schemas)

    def __iter__(self):
        return iter(self.schemas)

    def __getitem__(self, k: int) -> SchemaDef:
        return self.schemas[k]

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.schemas]

    def index(self, name: str) -> int:
        for k, s in enumerate(self.schemas):
            if s.name == name:
                return k
        raise KeyError(name)

    def get(self, name: str) -> SchemaDef:
        return self.schemas[self.index(name)]

    def to_json(self) -> dict:
        return {"format_version": FORMAT_VERSION, "schemas": [s.to_json() for s in self.schemas]}

    @classmethod
    def from_json(cls, obj) -> "SchemaPool":
        # A bare array is accepted as well as the versioned wrapper.
        items = obj["schemas"] if isinstance(obj, dict) else obj
        return cls(tuple(SchemaDef.from_json(o) for o in items))

    def save(self, path) -> None:
        text = json.dumps(self.to_json(), ensure_ascii=False, indent=1)
        Path(path).write_text(text + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SchemaPool":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc), line=exc.lineno) from exc
        return cls.from_json(obj)


def validate_pool(pool: SchemaPool, strict: bool = True) -> list[str]:
    """Return governance violations; an empty list means the pool passes.

    Names must always be unique. In strict mode no two schemas may share the
    same (case-insensitive) multiset of role names.
    """
    violations = []
    seen: dict[str, int] = {}
    for k, s in enumerate(pool.schemas):
        if s.name in seen:
            violations.append(f"duplicate name {s.name!r} at positions {seen[s.name]} and {k}")
        else:
            seen[s.name] = k
    if strict:
        by_roles: dict[tuple, int] = {}
        for k, s in enumerate(pool.schemas):
            key = tuple(sorted(Counter(r.lower() for r in s.roles).items()))
            if key in by_roles:
                other = pool.schemas[by_roles[key]].name
                violations.append(f"schemas {other!r} and {s.name!r} share role set {sorted(s.roles)}")
            else:
                by_roles[key] = k
    return violations


def check_role_name(role: str) -> None:
    toks = tokenize(role)
    if not toks or any(t in STRUCTURAL_TOKENS for t in toks):
        raise InvalidRoleName(f"invalid role name {role!r}")


def template_text(name: str, roles: Sequence[str], values: Sequence[str] | None = None) -> str:
    """Canonical text of a schema template, optionally with filled values."""
    for r in roles:
        check_role_name(r)
    values = values if values is not None else [""] * len(roles)
    args = ", ".join(f'"{r}": "{v}"' for r, v in zip(roles, values))
    return f'{{"name": "{name}", "arguments": {{{args}}}}}'


def schema_template(s: SchemaDef, vocab: Vocabulary, name: str | None = None) -> list[int]:
    """Token ids of the empty-slot template for ``s``.

    ``name`` overrides the rendered schema name; by default the plain schema
    name is used since schema tokens never enter the model input.
    """
    return encode(vocab, template_text(s.name if name is None else name, s.roles))


def slot_positions(vocab: Vocabulary, ids: Sequence[int]) -> list[int]:
    """Insertion indices of empty value slots (just after the opening quote)."""
    q, c = vocab.id(QUOTE), vocab.id(COLON)
    return [i + 2 for i in range(len(ids) - 2)
            if ids[i] == c and ids[i + 1] == q and ids[i + 2] == q]

