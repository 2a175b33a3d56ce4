"""Operation sequences in the GQA line format.

One operation per line::

    <kind[ qualifier]>: <argument> [dep, dep]

The trailing bracket group is optional. Which heads are legal, how many
arguments they take and which delimiter separates those arguments comes from
an :class:`OperationRegistry`.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError, ParseError, UnknownOperation, UnsupportedStructure

REGISTRY_VERSION = 1

# Semantic classes understood by the executor.
PATH_SEMANTICS = frozenset({"select", "filter", "relate", "verify_attr", "verify_rel"})
TERMINAL_SEMANTICS = frozenset({"exist", "query", "choose"})
COMBINER_SEMANTICS = frozenset({"and", "or", "same", "different", "common"})
SEMANTICS = PATH_SEMANTICS | TERMINAL_SEMANTICS | COMBINER_SEMANTICS | {"unsupported"}


@dataclass(frozen=True)
class Operation:
    kind: str
    qualifier: str | None = None
    args: tuple[str, ...] = ()
    dependencies: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if self.dependencies is not None:
            object.__setattr__(self, "dependencies", tuple(int(d) for d in self.dependencies))

    @property
    def head(self) -> str:
        return f"{self.kind} {self.qualifier}" if self.qualifier else self.kind

    def without_dependencies(self) -> "Operation":
        return Operation(self.kind, self.qualifier, self.args, None)


@dataclass(frozen=True)
class OpSeq:
    ops: tuple[Operation, ...]
    question_id: str | None = None
    raw_text: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        for i, op in enumerate(self.ops):
            for d in op.dependencies or ():
                if not 0 <= d < i:
                    raise ValueError(f"operation {i} depends on {d}, not an earlier index")

    def __len__(self) -> int:
        return len(self.ops)

    def without_dependencies(self) -> "OpSeq":
        return OpSeq(tuple(op.without_dependencies() for op in self.ops), self.question_id)


@dataclass(frozen=True)
class RegistryEntry:
    name: str
    kind: str
    qualifier: str | None
    semantics: str
    min_args: int
    max_args: int
    delimiter: str | None = None
    enabled: bool = True

    def __post_init__(self):
        if self.semantics not in SEMANTICS:
            raise ConfigError(f"{self.name!r}: unknown semantics {self.semantics!r}")
        if not 0 <= self.min_args <= self.max_args:
            raise ConfigError(f"{self.name!r}: bad arity {self.min_args}..{self.max_args}")
        if self.max_args > 1 and not self.delimiter:
            raise ConfigError(f"{self.name!r}: multi-argument operations need a delimiter")

    @property
    def active_semantics(self) -> str:
        return self.semantics if self.enabled else "unsupported"


class OperationRegistry:
    """Closed set of legal operation heads, loaded from configuration."""

    def __init__(self, entries: Iterable[RegistryEntry], version: int = REGISTRY_VERSION):
        self.version = version
        self.entries: dict[str, RegistryEntry] = {}
        for e in entries:
            if e.name in self.entries:
                raise ConfigError(f"duplicate registry entry {e.name!r}")
            self.entries[e.name] = e

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, head: str) -> bool:
        return head in self.entries

    def __iter__(self):
        return iter(self.entries.values())

    def lookup(self, head: str) -> RegistryEntry:
        return self.entries[head]

    def entry_for(self, op: Operation) -> RegistryEntry:
        try:
            return self.entries[op.head]
        except KeyError:
            raise UnknownOperation(op.head) from None

    def split_head(self, head: str) -> RegistryEntry:
        """Resolve a line head to its entry by longest registered word-prefix.

        A head only resolves when the prefix covers the whole head; the
        prefix search exists so "filter color" binds to the two-word entry
        rather than to "filter".
        """
        words = head.split()
        for k in range(len(words), 0, -1):
            cand = " ".join(words[:k])
            if cand in self.entries:
                if k == len(words):
                    return self.entries[cand]
                break
        raise UnknownOperation(head)

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "operations": [
                {
                    "name": e.name,
                    "kind": e.kind,
                    "qualifier": e.qualifier,
                    "semantics": e.semantics,
                    "min_args": e.min_args,
                    "max_args": e.max_args,
                    "delimiter": e.delimiter,
                    "enabled": e.enabled,
                }
                for e in self.entries.values()
            ],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "OperationRegistry":
        if "version" not in data:
            raise ConfigError("registry file lacks a version field")
        try:
            entries = [RegistryEntry(**op) for op in data["operations"]]
        except TypeError as exc:
            raise ConfigError(f"malformed registry entry: {exc}") from None
        return cls(entries, version=int(data["version"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "OperationRegistry":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


# head -> (semantics, min_args, max_args, delimiter) for heads whose meaning
# does not depend on the attribute categories.
_FIXED = {
    "select": ("select", 1, 1, None),
    "filter": ("filter", 1, 1, None),
    "relate": ("relate", 2, 3, ","),
    "verify": ("verify_attr", 1, 1, None),
    "verify rel": ("verify_rel", 2, 3, ","),
    "exist": ("exist", 0, 1, None),
    "query": ("query", 1, 1, None),
    "and": ("and", 0, 0, None),
    "or": ("or", 0, 0, None),
    "choose": ("choose", 2, 2, "|"),
    "choose name": ("choose", 2, 2, "|"),
    "same": ("same", 0, 1, None),
    "different": ("different", 0, 1, None),
    "common": ("common", 0, 0, None),
}
_PER_CATEGORY = {
    "filter": ("filter", 1, 1, None),
    "verify": ("verify_attr", 1, 1, None),
    "choose": ("choose", 2, 2, "|"),
    "same": ("same", 0, 0, None),
    "different": ("different", 0, 0, None),
}


def infer_entry(head: str, categories: Iterable[str]) -> RegistryEntry:
    """Map an operation head seen in a corpus onto executor semantics.

    Heads that fit no rule are registered disabled, so they still parse but
    raise UnsupportedOperation at execution time.
    """
    cats = set(categories)
    words = head.split()
    kind, qualifier = words[0], " ".join(words[1:]) or None
    if head in _FIXED:
        sem, lo, hi, delim = _FIXED[head]
        return RegistryEntry(head, kind, qualifier, sem, lo, hi, delim)
    if kind in _PER_CATEGORY and qualifier in cats:
        sem, lo, hi, delim = _PER_CATEGORY[kind]
        return RegistryEntry(head, kind, qualifier, sem, lo, hi, delim)
    return RegistryEntry(head, kind, qualifier, "unsupported", 0, 8, ",", enabled=False)


def default_registry(categories: Iterable[str]) -> OperationRegistry:
    cats = list(categories)
    heads = list(_FIXED)
    heads += [f"{k} {c}" for k in _PER_CATEGORY for c in cats]
    return OperationRegistry(infer_entry(h, cats) for h in heads)


def scan_registry(heads: Iterable[str], categories: Iterable[str]) -> OperationRegistry:
    """Build a registry from every operation head observed in a corpus.

    Heads are ordered by descending frequency, then alphabetically.
    """
    counts = Counter(heads)
    cats = list(categories)
    ordered = sorted(counts, key=lambda h: (-counts[h], h))
    return OperationRegistry(infer_entry(h, cats) for h in ordered)


_LINE = re.compile(r"^(?P<head>[^:\[\]]+):(?P<arg>.*?)(?:\s*\[(?P<deps>[\d,\s]*)\])?\s*$")


def parse_line(line: str, registry: OperationRegistry) -> Operation:
    m = _LINE.match(line.strip())
    if not m:
        raise ParseError(line)
    head = " ".join(m.group("head").split())
    if not head:
        raise ParseError(line)
    try:
        entry = registry.split_head(head)
    except UnknownOperation:
        raise UnknownOperation(line) from None
    arg = m.group("arg").strip()
    if not arg:
        args: tuple[str, ...] = ()
    elif entry.delimiter and entry.max_args > 1:
        args = tuple(a.strip() for a in arg.split(entry.delimiter))
    else:
        args = (arg,)
    if not entry.min_args <= len(args) <= entry.max_args:
        raise ParseError(
            line, f"{entry.name!r} takes {entry.min_args}..{entry.max_args} arguments, got {len(args)}"
        )
    deps = m.group("deps")
    dependencies = None
    if deps is not None:
        dependencies = tuple(int(d) for d in deps.replace(",", " ").split())
    return Operation(entry.kind, entry.qualifier, args, dependencies)


def parse_opseq(
    text: str | Sequence[str], registry: OperationRegistry, question_id: str | None = None
) -> OpSeq:
    """Parse newline-separated (or pre-split) operation lines."""
    raw = text if isinstance(text, str) else "\n".join(text)
    lines = [ln for ln in raw.splitlines() if ln.strip()]
    if not lines:
        raise ParseError(raw, "empty operation sequence")
    ops = tuple(parse_line(ln, registry) for ln in lines)
    try:
        return OpSeq(ops, question_id, raw)
    except ValueError as exc:
        raise ParseError(raw, str(exc)) from None


def format_line(op: Operation, registry: OperationRegistry | None = None) -> str:
    if registry is not None and op.head in registry:
        delim = registry.lookup(op.head).delimiter or ","
    else:
        fixed = _FIXED.get(op.head) or _PER_CATEGORY.get(op.kind)
        delim = (fixed[3] if fixed else None) or ","
    line = f"{op.head}:"
    if op.args:
        line += " " + delim.join(op.args)
    if op.dependencies is not None:
        line += " [" + ",".join(str(d) for d in op.dependencies) + "]"
    return line


def serialize_opseq(seq: OpSeq, registry: OperationRegistry | None = None) -> str:
    return "\n".join(format_line(op, registry) for op in seq.ops)


@dataclass(frozen=True)
class BranchPlan:
    branches: tuple[tuple[Operation, ...], ...]
    combiner: Operation | None = None
    indices: tuple[tuple[int, ...], ...] = ()


def split_branches(seq: OpSeq, registry: OperationRegistry) -> BranchPlan:
    """Split a sequence into one or two linear chains plus an optional combiner."""
    ops = seq.ops
    if not ops:
        raise UnsupportedStructure("empty operation sequence")
    sems = [registry.entry_for(op).semantics for op in ops]
    if all(op.dependencies is not None for op in ops):
        idx = _split_by_dependencies(seq)
    else:
        idx = _split_by_roots(sems)
    final = len(ops) - 1
    combiner = None
    if len(idx) == 2:
        combiner = ops[final]
    covered = sorted(i for b in idx for i in b) + ([final] if combiner else [])
    if covered != list(range(len(ops))):
        raise UnsupportedStructure("branches do not partition the operation sequence")
    return BranchPlan(
        tuple(tuple(ops[i] for i in b) for b in idx),
        combiner,
        tuple(tuple(b) for b in idx),
    )


def _split_by_dependencies(seq: OpSeq) -> list[list[int]]:
    ops = seq.ops
    roots = [i for i, op in enumerate(ops) if not op.dependencies]
    if len(roots) > 2:
        raise UnsupportedStructure(f"{len(roots)} root operations")
    final = len(ops) - 1

    def chain(end: int) -> list[int]:
        out = [end]
        while ops[out[-1]].dependencies:
            deps = ops[out[-1]].dependencies
            if len(deps) != 1:
                raise UnsupportedStructure(f"operation {out[-1]} joins several inputs mid-branch")
            out.append(deps[0])
        return out[::-1]

    deps = ops[final].dependencies
    if len(deps) == 2:
        return [chain(deps[0]), chain(deps[1])]
    if len(deps) > 2:
        raise UnsupportedStructure("final operation has more than two inputs")
    return [chain(final)]


def _split_by_roots(sems: list[str]) -> list[list[int]]:
    roots = [i for i, s in enumerate(sems) if s == "select"]
    if len(roots) > 2:
        raise UnsupportedStructure(f"{len(roots)} root operations")
    if not roots or roots[0] != 0:
        raise UnsupportedStructure("sequence does not start with a select")
    n = len(sems)
    if len(roots) == 1:
        return [list(range(n))]
    if roots[1] >= n - 1:
        raise UnsupportedStructure("second branch has no operations before the combiner")
    return [list(range(0, roots[1])), list(range(roots[1], n - 1))]
