"""CoNLL-2009 reading and writing.

The format is tab-separated, one token per row, blank line between
sentences. The first 14 columns are fixed::

    ID FORM LEMMA PLEMMA POS PPOS FEAT PFEAT HEAD PHEAD DEPREL PDEPREL
    FILLPRED PRED

followed by one APRED column per predicate in the sentence: the cell in
APRED_k of row j holds the role of the arc from the k-th predicate to
token j ("_" or empty means no arc). Rows with FILLPRED == "Y" are
predicates and must carry their sense in PRED.

Parsing is strict: inconsistent column counts, non-contiguous IDs,
APRED/predicate count mismatches and self-referential arcs all raise
:class:`ConllParseError` with the offending line number rather than
guessing at intent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Literal

FIXED_COLUMNS = 14
EMPTY = "_"

ReadMode = Literal["gold_predicates", "raw"]


class ConllParseError(ValueError):
    """Malformed input file; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ConllWriteError(ValueError):
    """A graph that cannot be expressed in the column format."""


@dataclass(frozen=True)
class Token:
    """One input token; ``apred_cells`` has one entry per sentence predicate."""

    index: int
    form: str
    lemma: str
    is_predicate: bool = False
    pred_sense: str | None = None
    apred_cells: tuple[str | None, ...] = ()

    def __post_init__(self):
        if self.is_predicate != (self.pred_sense is not None):
            raise ValueError(f"token {self.index}: pred_sense must be present iff is_predicate")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    predicates: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        preds = tuple(t.index for t in self.tokens if t.is_predicate)
        if any(p < 1 or p > len(self.tokens) for p in preds):
            raise ValueError("predicate index out of range")
        if list(preds) != sorted(set(preds)):
            raise ValueError("predicate indices must be strictly increasing")
        object.__setattr__(self, "predicates", preds)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]

    @property
    def lemmas(self) -> list[str]:
        return [t.lemma for t in self.tokens]


class SemanticGraph:
    """Labeled predicate-to-argument arcs over one sentence.

    Arcs are (head, dep) pairs of 1-based token indices; every arc has
    exactly one role label and self-loops are rejected.
    """

    __slots__ = ("sentence_len", "labels")

    def __init__(self, sentence_len: int, labels: dict[tuple[int, int], str]):
        for (head, dep), role in labels.items():
            if head == dep:
                raise ValueError(f"self-loop arc {head}->{dep}")
            if not (1 <= head <= sentence_len and 1 <= dep <= sentence_len):
                raise ValueError(f"arc {head}->{dep} outside sentence of length {sentence_len}")
            if not role:
                raise ValueError(f"arc {head}->{dep} has an empty role label")
        self.sentence_len = sentence_len
        self.labels = dict(labels)

    @property
    def arcs(self) -> set[tuple[int, int]]:
        return set(self.labels)

    @property
    def heads(self) -> set[int]:
        return {head for head, _ in self.labels}

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SemanticGraph)
            and self.sentence_len == other.sentence_len
            and self.labels == other.labels
        )

    def __len__(self) -> int:
        return len(self.labels)

    def __repr__(self) -> str:
        return f"SemanticGraph(n={self.sentence_len}, arcs={len(self.labels)})"


def _cell(value: str) -> str | None:
    return None if value in ("", EMPTY) else value


def _sentences_with_lines(lines: Iterable[str]) -> Iterator[list[tuple[int, list[str]]]]:
    block: list[tuple[int, list[str]]] = []
    for line_no, line in enumerate(lines, start=1):
        stripped = line.rstrip("\n").rstrip("\r")
        if not stripped.strip():
            if block:
                yield block
                block = []
            continue
        block.append((line_no, stripped.split("\t")))
    if block:
        yield block


def _parse_sentence(block: list[tuple[int, list[str]]], mode: ReadMode) -> tuple[Sentence, SemanticGraph]:
    first_line = block[0][0]
    width = len(block[0][1])
    if width < FIXED_COLUMNS:
        raise ConllParseError(first_line, f"expected at least {FIXED_COLUMNS} columns, got {width}")
    for line_no, cols in block:
        if len(cols) != width:
            raise ConllParseError(line_no, f"column count {len(cols)} differs from sentence's first row ({width})")
    for offset, (line_no, cols) in enumerate(block, start=1):
        try:
            token_id = int(cols[0])
        except ValueError:
            raise ConllParseError(line_no, f"non-numeric token ID {cols[0]!r}") from None
        if token_id != offset:
            raise ConllParseError(line_no, f"non-contiguous token ID {token_id} (expected {offset})")

    n = len(block)
    pred_rows = []
    for line_no, cols in block:
        fillpred, pred = cols[12], cols[13]
        if fillpred == "Y":
            if _cell(pred) is None:
                raise ConllParseError(line_no, "FILLPRED is Y but PRED is empty")
            pred_rows.append(int(cols[0]))
        elif _cell(pred) is not None:
            raise ConllParseError(line_no, f"PRED {pred!r} set without FILLPRED == Y")

    n_apred = width - FIXED_COLUMNS
    if n_apred != len(pred_rows):
        raise ConllParseError(
            first_line,
            f"{n_apred} APRED column(s) for {len(pred_rows)} predicate(s)",
        )

    if mode == "raw":
        tokens = tuple(
            Token(index=int(cols[0]), form=cols[1], lemma=_pick_lemma(cols))
            for _, cols in block
        )
        return Sentence(tokens), SemanticGraph(n, {})

    labels: dict[tuple[int, int], str] = {}
    for k, head in enumerate(pred_rows):
        for line_no, cols in block:
            role = _cell(cols[FIXED_COLUMNS + k])
            if role is None:
                continue
            dep = int(cols[0])
            if head == dep:
                raise ConllParseError(line_no, f"predicate {head} is marked as its own argument")
            labels[(head, dep)] = role

    tokens = []
    for _, cols in block:
        idx = int(cols[0])
        is_pred = idx in pred_rows
        tokens.append(
            Token(
                index=idx,
                form=cols[1],
                lemma=_pick_lemma(cols),
                is_predicate=is_pred,
                pred_sense=cols[13] if is_pred else None,
                apred_cells=tuple(_cell(cols[FIXED_COLUMNS + k]) for k in range(n_apred)),
            )
        )
    return Sentence(tuple(tokens)), SemanticGraph(n, labels)


def _pick_lemma(cols: list[str]) -> str:
    # Prefer the predicted lemma column, fall back to the gold one.
    return cols[3] if _cell(cols[3]) is not None else cols[2]


def read_conll09(path, mode: ReadMode = "gold_predicates") -> list[tuple[Sentence, SemanticGraph]]:
    """Parse a file into (sentence, graph) pairs.

    ``mode="raw"`` drops all predicate, sense and arc information, which is
    the input view of the pipeline that has to find predicates itself.
    """
    if mode not in ("gold_predicates", "raw"):
        raise ValueError(f"unknown read mode {mode!r}")
    with open(path, "r", encoding="utf-8") as fh:
        return [_parse_sentence(block, mode) for block in _sentences_with_lines(fh)]


def write_conll09(items: Iterable[tuple[Sentence, SemanticGraph]], path) -> None:
    """Serialize (sentence, graph) pairs; unknown columns are written as "_".

    Raises :class:`ConllWriteError` if a graph has an arc whose head is not
    flagged as a predicate in its sentence.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for sentence, graph in items:
            preds = sentence.predicates
            bad_heads = graph.heads - set(preds)
            if bad_heads:
                raise ConllWriteError(
                    f"arc head(s) {sorted(bad_heads)} not flagged as predicates {list(preds)}"
                )
            if graph.sentence_len != len(sentence):
                raise ConllWriteError(
                    f"graph over {graph.sentence_len} tokens paired with a {len(sentence)}-token sentence"
                )
            col_of = {head: k for k, head in enumerate(preds)}
            for token in sentence.tokens:
                apreds = [EMPTY] * len(preds)
                for (head, dep), role in graph.labels.items():
                    if dep == token.index:
                        apreds[col_of[head]] = role
                row = [
                    str(token.index),
                    token.form,
                    token.lemma,
                    token.lemma,
                    EMPTY, EMPTY, EMPTY, EMPTY, EMPTY, EMPTY, EMPTY, EMPTY,
                    "Y" if token.is_predicate else EMPTY,
                    token.pred_sense if token.is_predicate else EMPTY,
                ]
                fh.write("\t".join(row + apreds) + "\n")
            fh.write("\n")


def gold_arc_items(sentence: Sentence, graph: SemanticGraph) -> list[tuple[int, int, str]]:
    """The labeled arcs of a graph as (head, dep, role) triples."""
    return [(head, dep, role) for (head, dep), role in sorted(graph.labels.items())]
