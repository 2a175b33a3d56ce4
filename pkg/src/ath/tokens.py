"""Pointer-style tokenization of operation sequences.

A tokenized sequence is what a pointer-generator question parser emits:
each token is either a class from a fixed inventory (operation heads,
frequent argument words, functional symbols), a pointer to a question word,
or the empty token. Detokenizing copies pointed-to question words verbatim,
so an argument that only matched its question word case-insensitively comes
back changed. Such losses are detected and reported, never silent.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    ATHError,
    ConfigError,
    DetokenizeError,
    LossyRoundTrip,
    ParseError,
    UnknownOperation,
    UntokenizableArgument,
)
from .opseq import OperationRegistry, OpSeq, parse_opseq

INVENTORY_VERSION = 1
DEFAULT_BUDGET = 193
DEFAULT_POINTERS = 20
FUNCTIONAL = ("_", ",", "|", "(", ")", "?")

_FUNC_CLASS = re.escape("".join(FUNCTIONAL))
_LEXEME = re.compile(rf"[{_FUNC_CLASS}]|[^\s{_FUNC_CLASS}]+")
_QWORD = re.compile(r"\w+(?:[-']\w+)*|[^\w\s]")


def question_words(text: str) -> list[str]:
    """Split a question into words, punctuation as separate words."""
    return _QWORD.findall(text)


def lex_argument(text: str) -> list[str]:
    return _LEXEME.findall(text)


def join_lexemes(lexemes: Sequence[str]) -> str:
    out = ""
    prev_word = False
    for lx in lexemes:
        is_word = lx not in FUNCTIONAL
        if is_word and prev_word:
            out += " "
        out += lx
        prev_word = is_word
    return out


@dataclass(frozen=True)
class ClassToken:
    id: int


@dataclass(frozen=True)
class PointerToken:
    index: int


@dataclass(frozen=True)
class EmptyToken:
    pass


Token = ClassToken | PointerToken | EmptyToken


@dataclass(frozen=True)
class ClassInventory:
    """Output classes: pointers, the empty class, operation heads, words."""

    operations: tuple[str, ...]
    words: tuple[str, ...]
    n_pointers: int = DEFAULT_POINTERS
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        object.__setattr__(self, "operations", tuple(self.operations))
        object.__setattr__(self, "words", tuple(self.words))
        if len(set(self.operations)) != len(self.operations):
            raise ConfigError("duplicate operation in class inventory")
        if len(set(self.words)) != len(self.words):
            raise ConfigError("duplicate word in class inventory")
        if self.size > self.budget:
            raise ConfigError(f"class inventory has {self.size} classes, budget is {self.budget}")

    @property
    def empty_id(self) -> int:
        return self.n_pointers

    @property
    def size(self) -> int:
        return self.n_pointers + 1 + len(self.operations) + len(self.words)

    def op_id(self, head: str) -> int:
        try:
            return self.n_pointers + 1 + self._op_ids[head]
        except KeyError:
            raise UnknownOperation(head) from None

    def word_id(self, word: str) -> int | None:
        i = self._word_ids.get(word)
        return None if i is None else self.n_pointers + 1 + len(self.operations) + i

    def decode(self, class_id: int) -> tuple[str, str]:
        """Return ("op", head), ("word", text) or ("empty", "")."""
        if class_id == self.empty_id:
            return ("empty", "")
        k = class_id - self.n_pointers - 1
        if 0 <= k < len(self.operations):
            return ("op", self.operations[k])
        k -= len(self.operations)
        if 0 <= k < len(self.words):
            return ("word", self.words[k])
        raise DetokenizeError(f"class id {class_id} outside the inventory")

    @cached_property
    def _op_ids(self) -> dict[str, int]:
        return {h: i for i, h in enumerate(self.operations)}

    @cached_property
    def _word_ids(self) -> dict[str, int]:
        return {w: i for i, w in enumerate(self.words)}

    @cached_property
    def multiwords(self) -> list[tuple[str, ...]]:
        out = [tuple(w.split(" ")) for w in self.words if " " in w]
        return sorted(out, key=len, reverse=True)

    def to_json(self) -> dict:
        return {
            "version": INVENTORY_VERSION,
            "budget": self.budget,
            "n_pointers": self.n_pointers,
            "operations": list(self.operations),
            "words": list(self.words),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "ClassInventory":
        if "version" not in data:
            raise ConfigError("class inventory file lacks a version field")
        return cls(
            operations=tuple(data["operations"]),
            words=tuple(data["words"]),
            n_pointers=int(data.get("n_pointers", DEFAULT_POINTERS)),
            budget=int(data.get("budget", DEFAULT_BUDGET)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ClassInventory":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def build_inventory(
    registry: OperationRegistry,
    corpus: Iterable[tuple[OpSeq, Sequence[str]]],
    budget: int = DEFAULT_BUDGET,
    n_pointers: int = DEFAULT_POINTERS,
) -> ClassInventory:
    """Fill the class budget with the argument words pointers cannot cover.

    ``corpus`` pairs each gold sequence with its question words. Candidates
    are whole multi-word arguments and single lexemes that do not occur in
    their question; they are ranked by frequency, ties alphabetical.
    """
    ops = tuple(e.name for e in registry)
    fixed = n_pointers + 1 + len(ops) + len(FUNCTIONAL)
    if fixed > budget:
        raise ConfigError(f"{len(ops)} operations leave no room in a budget of {budget}")
    counts: Counter[str] = Counter()
    for seq, words in corpus:
        lowered = {w.lower() for w in words}
        for op in seq.ops:
            for arg in op.args:
                lexemes = [lx for lx in lex_argument(arg) if lx not in FUNCTIONAL]
                if len(lexemes) > 1 and " ".join(lexemes) == arg:
                    if any(lx.lower() not in lowered for lx in lexemes):
                        counts[arg] += 1
                        continue
                for lx in lexemes:
                    if lx.lower() not in lowered:
                        counts[lx] += 1
    ranked = sorted(counts, key=lambda w: (-counts[w], w))
    words = FUNCTIONAL + tuple(w for w in ranked if w not in FUNCTIONAL)[: budget - fixed]
    return ClassInventory(ops, words, n_pointers=n_pointers, budget=budget)


@dataclass(frozen=True)
class TokenizedOpSeq:
    tokens: tuple[Token, ...]
    question_id: str | None = None
    conflicts: tuple[str, ...] = ()
    lossy: tuple[str, ...] = field(default=(), compare=False)

    def __len__(self) -> int:
        return len(self.tokens)


def tokenize(
    seq: OpSeq,
    question: Sequence[str],
    inventory: ClassInventory,
    registry: OperationRegistry,
) -> TokenizedOpSeq:
    """Tokenize a sequence against its question.

    Per argument lexeme the order of preference is: registered multi-word,
    pointer to a question word (case-insensitive, first occurrence),
    registered single word. Dependencies are not representable and are
    dropped.
    """
    if len(question) > inventory.n_pointers:
        raise UntokenizableArgument(
            f"question has {len(question)} words, pointers cover {inventory.n_pointers}"
        )
    positions: dict[str, list[int]] = {}
    for i, w in enumerate(question):
        positions.setdefault(w.lower(), []).append(i)
    multiwords = inventory.multiwords
    tokens: list[Token] = []
    conflicts: list[str] = []
    lossy: list[str] = []
    for op in seq.ops:
        tokens.append(ClassToken(inventory.op_id(op.head)))
        entry = registry.entry_for(op)
        delim = entry.delimiter or ","
        text = delim.join(op.args)
        lexemes = lex_argument(text)
        if join_lexemes(lexemes) != text:
            lossy.append(f"{op.head}: spacing in {text!r} is not reproducible")
        p = 0
        while p < len(lexemes):
            for mw in multiwords:
                if tuple(lexemes[p : p + len(mw)]) == mw:
                    tokens.append(ClassToken(inventory.word_id(" ".join(mw))))
                    p += len(mw)
                    break
            else:
                lx = lexemes[p]
                hits = positions.get(lx.lower()) if lx not in FUNCTIONAL else None
                wid = inventory.word_id(lx)
                if hits:
                    idx = hits[0]
                    tokens.append(PointerToken(idx))
                    if len(hits) > 1:
                        conflicts.append(f"{lx!r} matches question words {hits}; used {idx}")
                    if question[idx] != lx:
                        lossy.append(f"{lx!r} points at question word {question[idx]!r}")
                elif wid is not None:
                    tokens.append(ClassToken(wid))
                else:
                    raise UntokenizableArgument(
                        f"{lx!r} in {op.head!r} is neither a question word nor an inventory class"
                    )
                p += 1
    return TokenizedOpSeq(tuple(tokens), seq.question_id, tuple(conflicts), tuple(lossy))


def detokenize(
    tok: TokenizedOpSeq,
    question: Sequence[str],
    inventory: ClassInventory,
    registry: OperationRegistry,
) -> OpSeq:
    lines: list[str] = []
    head: str | None = None
    lexemes: list[str] = []

    def flush():
        if head is not None:
            lines.append(f"{head}: {join_lexemes(lexemes)}" if lexemes else f"{head}:")

    for t in tok.tokens:
        if isinstance(t, EmptyToken):
            continue
        if isinstance(t, PointerToken):
            if not 0 <= t.index < len(question):
                raise DetokenizeError(f"pointer {t.index} outside a {len(question)}-word question")
            if head is None:
                raise DetokenizeError("argument token before any operation")
            lexemes.append(question[t.index])
            continue
        kind, text = inventory.decode(t.id)
        if kind == "empty":
            continue
        if kind == "op":
            flush()
            head, lexemes = text, []
        else:
            if head is None:
                raise DetokenizeError("argument token before any operation")
            lexemes.extend(text.split(" ") if " " in text else [text])
    flush()
    if not lines:
        return OpSeq((), tok.question_id)
    try:
        return parse_opseq("\n".join(lines), registry, tok.question_id)
    except ParseError as exc:
        raise DetokenizeError(str(exc)) from None


@dataclass(frozen=True)
class RoundTrip:
    """Outcome of tokenize followed by detokenize on one sequence."""

    result: OpSeq | None
    identical: bool
    predicted_lossy: bool
    conflicts: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()
    error: ATHError | None = None

    @property
    def lossy(self) -> bool:
        return not self.identical


def round_trip(
    seq: OpSeq,
    question: Sequence[str],
    inventory: ClassInventory,
    registry: OperationRegistry,
    strict: bool = False,
) -> RoundTrip:
    """Run a gold sequence through tokenization and back.

    Identity is judged on the dependency-free sequence. With ``strict`` a
    lossy result raises LossyRoundTrip instead of being returned flagged.
    """
    target = seq.without_dependencies()
    try:
        tok = tokenize(seq, question, inventory, registry)
        result = detokenize(tok, question, inventory, registry)
    except (UntokenizableArgument, DetokenizeError, UnknownOperation) as exc:
        if strict:
            raise LossyRoundTrip(str(exc)) from exc
        return RoundTrip(None, False, True, notes=(str(exc),), error=exc)
    identical = result == target
    if strict and not identical:
        raise LossyRoundTrip("; ".join(tok.lossy) or "round trip changed the sequence")
    return RoundTrip(result, identical, bool(tok.lossy), tok.conflicts, tok.lossy)


def format_tokens(tok: TokenizedOpSeq, inventory: ClassInventory) -> str:
    out = []
    for t in tok.tokens:
        if isinstance(t, PointerToken):
            out.append(f"<p{t.index}>")
        elif isinstance(t, EmptyToken):
            out.append("<empty>")
        else:
            kind, text = inventory.decode(t.id)
            out.append(f"[{text}]" if kind == "op" else text or "<empty>")
    return " ".join(out)


__all__ = [
    "ClassInventory",
    "ClassToken",
    "EmptyToken",
    "PointerToken",
    "RoundTrip",
    "TokenizedOpSeq",
    "build_inventory",
    "detokenize",
    "format_tokens",
    "lex_argument",
    "question_words",
    "round_trip",
    "tokenize",
]
