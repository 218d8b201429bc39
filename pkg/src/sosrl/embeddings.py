"""Pretrained word vectors and precomputed contextual feature files."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from sosrl.conll09 import Sentence


class EmbeddingLoadError(ValueError):
    """Malformed embedding text file; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class FeatureFileError(ValueError):
    """Corrupt feature container or missing sidecar."""


class AlignmentError(ValueError):
    """Feature records do not line up with the corpus sentences."""


class WordEmbeddings:
    """Word -> vector map loaded from the usual "word v1 ... v_dim" format.

    Lookups try the exact form first, then the lowercased form; anything
    else maps to the all-zero unknown vector.
    """

    def __init__(self, dim: int, vectors: dict[str, np.ndarray]):
        self.dim = dim
        self._vectors = vectors
        self.unknown = np.zeros(dim, dtype=np.float64)

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, word: str) -> bool:
        return word in self._vectors

    def lookup(self, word: str) -> np.ndarray | None:
        vec = self._vectors.get(word)
        if vec is None:
            vec = self._vectors.get(word.lower())
        return vec

    def get(self, word: str) -> np.ndarray:
        vec = self.lookup(word)
        return self.unknown if vec is None else vec


def load_embeddings(path, dim: int) -> WordEmbeddings:
    vectors: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                raise EmbeddingLoadError(line_no, "expected 'word v1 ... v_dim'")
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise EmbeddingLoadError(line_no, f"expected {dim} values, got {len(values)}")
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError:
                raise EmbeddingLoadError(line_no, "non-numeric vector component") from None
            vectors[word] = vec
    return WordEmbeddings(dim, vectors)


@dataclass
class FeatureFile:
    """Per-sentence, per-token dense feature vectors of one fixed dimension."""

    dim: int
    sentences: list[np.ndarray]

    def __len__(self) -> int:
        return len(self.sentences)

    def align(self, corpus: Sequence[Sentence]) -> None:
        """Check 1:1 sentence and token alignment against a parsed corpus."""
        if len(self.sentences) != len(corpus):
            raise AlignmentError(
                f"feature file has {len(self.sentences)} sentence record(s), corpus has {len(corpus)}"
            )
        for idx, (feats, sentence) in enumerate(zip(self.sentences, corpus)):
            if feats.shape[0] != len(sentence):
                raise AlignmentError(
                    f"sentence {idx}: {feats.shape[0]} feature row(s) for {len(sentence)} token(s)"
                )


def _sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def write_features(path, sentences: Sequence[np.ndarray]) -> None:
    """Write one length-prefixed float32 record per sentence plus a sidecar."""
    sentences = [np.asarray(s, dtype=np.float32) for s in sentences]
    if sentences:
        dim = sentences[0].shape[1]
        if any(s.ndim != 2 or s.shape[1] != dim for s in sentences):
            raise FeatureFileError("all sentences must be 2-d with one shared feature dimension")
    else:
        dim = 0
    with open(path, "wb") as fh:
        for s in sentences:
            fh.write(struct.pack("<I", s.shape[0]))
            fh.write(s.astype("<f4").tobytes())
    _sidecar_path(path).write_text(
        json.dumps({"version": 1, "dim": dim, "sentences": len(sentences)}), encoding="utf-8"
    )


def load_features(path) -> FeatureFile:
    sidecar = _sidecar_path(path)
    if not sidecar.exists():
        raise FeatureFileError(f"missing sidecar {sidecar}")
    meta = json.loads(sidecar.read_text(encoding="utf-8"))
    dim = int(meta["dim"])
    expected = int(meta["sentences"])
    blob = Path(path).read_bytes()
    sentences: list[np.ndarray] = []
    pos = 0
    while pos < len(blob):
        if pos + 4 > len(blob):
            raise FeatureFileError(f"{path}: truncated record header at byte {pos}")
        (count,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        nbytes = count * dim * 4
        if pos + nbytes > len(blob):
            raise FeatureFileError(f"{path}: truncated record for sentence {len(sentences)}")
        arr = np.frombuffer(blob, dtype="<f4", count=count * dim, offset=pos).reshape(count, dim)
        sentences.append(arr.astype(np.float32))
        pos += nbytes
    if len(sentences) != expected:
        raise FeatureFileError(f"{path}: sidecar promises {expected} sentence(s), found {len(sentences)}")
    return FeatureFile(dim=dim, sentences=sentences)
