"""Character- and word-level edit operations on prompts."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from ..datasets import LEXICON
from ..errors import DomainError
from ..models.vocab import DEFAULT_ALPHABET
from ..rng import generator

NEIGHBOR_FILE = "word_neighbors.json"
# list members play the role of objects, so they embed around the same point
SHARED_CENTROID = {"item": "object"}


@dataclass(frozen=True)
class EditOp:
    level: str  # "character" | "word"
    kind: str  # "insert" | "delete" | "substitute"
    position: int
    replacement: str = ""


def edit_distance(a, b) -> int:
    """Levenshtein distance between two sequences (strings or word lists)."""
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def in_alphabet(text, alphabet) -> bool:
    return all(ch in alphabet for ch in text)


class CharEditor:
    level = "character"

    def __init__(self, alphabet=DEFAULT_ALPHABET):
        self.alphabet = alphabet

    def candidates(self, text):
        ops = []
        for i in range(len(text) + 1):
            ops += [EditOp("character", "insert", i, ch) for ch in self.alphabet]
        for i, cur in enumerate(text):
            ops.append(EditOp("character", "delete", i))
            ops += [EditOp("character", "substitute", i, ch) for ch in self.alphabet if ch != cur]
        return ops

    def apply(self, text, op: EditOp):
        i = op.position
        if op.kind == "insert":
            return text[:i] + op.replacement + text[i:]
        if op.kind == "delete":
            return text[:i] + text[i + 1:]
        return text[:i] + op.replacement + text[i + 1:]

    def distance(self, a, b):
        return edit_distance(a, b)


class WordEditor:
    """Edits whole words, drawing replacements from an embedding-neighbour table.

    Substitutions swap a word for one of its neighbours; insertions place a
    neighbour of the adjacent word into a gap; deletions drop a word.
    """

    level = "word"

    def __init__(self, neighbors=None, alphabet=DEFAULT_ALPHABET):
        self.neighbors = load_neighbor_table() if neighbors is None else neighbors
        self.alphabet = alphabet

    def _pool(self, word):
        return self.neighbors.get(word, ())

    def candidates(self, text):
        words = text.split(" ")
        ops = []
        for g in range(len(words) + 1):
            anchor = words[g] if g < len(words) else words[-1]
            ops += [EditOp("word", "insert", g, w) for w in self._pool(anchor)]
        for i, cur in enumerate(words):
            if len(words) > 1:
                ops.append(EditOp("word", "delete", i))
            ops += [EditOp("word", "substitute", i, w) for w in self._pool(cur) if w != cur]
        return ops

    def apply(self, text, op: EditOp):
        words = text.split(" ")
        i = op.position
        if op.kind == "insert":
            words = words[:i] + [op.replacement] + words[i:]
        elif op.kind == "delete":
            words = words[:i] + words[i + 1:]
        else:
            words = words[:i] + [op.replacement] + words[i + 1:]
        return " ".join(words)

    def distance(self, a, b):
        return edit_distance(a.split(" "), b.split(" "))


def editor_for(level, alphabet=DEFAULT_ALPHABET):
    if level == "character":
        return CharEditor(alphabet)
    if level == "word":
        return WordEditor(alphabet=alphabet)
    raise DomainError(f"unknown edit level {level!r}")


def build_neighbor_table(seed=0, k=6, dim=8, spread=0.8) -> dict:
    """Synthetic word embeddings (class centroid + noise) and their k nearest
    neighbours by cosine similarity. This regenerates the bundled table."""
    rng = generator(seed, "word-embeddings")
    centroids = {cls: rng.standard_normal(dim) for cls in LEXICON if cls not in SHARED_CENTROID}
    words, vecs = [], []
    for cls, members in LEXICON.items():
        centroid = centroids[SHARED_CENTROID.get(cls, cls)]
        for w in members:
            words.append(w)
            vecs.append(centroid + spread * rng.standard_normal(dim))
    V = np.array(vecs)
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    sims = V @ V.T
    table = {}
    for i, w in enumerate(words):
        order = sorted((j for j in range(len(words)) if j != i), key=lambda j: (-sims[i, j], j))
        table[w] = [words[j] for j in order[:k]]
    return table


@lru_cache(maxsize=1)
def _bundled():
    text = resources.files("effattack.attacks").joinpath("data", NEIGHBOR_FILE).read_text()
    return json.loads(text)


def load_neighbor_table() -> dict:
    return {w: list(ns) for w, ns in _bundled().items()}
