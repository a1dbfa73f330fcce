"""Seeded synthetic datasets for the toy models.

``gauss-blobs``
    Two isotropic unit-variance Gaussian classes whose means sit at
    distance ``separation`` either side of the origin along the all-ones
    diagonal (for ``dim=1`` the means are exactly +/-2 by default).
``token-corpus``
    Sentences from a small stochastic grammar over the character alphabet,
    each ending in ``.`` and EOS. Word classes use disjoint letter sets so a
    short context window identifies where in the sentence the generator is.
``scene-vectors``
    One intensity per grid cell with 1-4 bright "objects" planted on a dim
    background; labels are the planted cell indices.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import UsageError
from .models.vocab import EOS_ID, Vocab
from .rng import generator

DATASET_KINDS = ("gauss-blobs", "token-corpus", "scene-vectors")

LEXICON = {
    "subject": ("cobd", "fob", "bdoc", "dfco", "bof", "cdfob"),
    "verb": ("hgsk", "jks", "ghs", "skjh", "kgj", "hjsg"),
    "object": ("plym", "nyl", "mypl", "lyn", "ynmp", "pml"),
    "adverb": ("qet", "rve", "tqe", "evr"),
    "conj": ("wix", "xwi"),
    # list members only ever appear after a conjunction
    "item": ("zua", "uza", "azu"),
}
CONJ_PROB = 0.3
LIST_PROB = 0.3
LIST_CONTINUE = 0.8
LIST_MAX = 6


@dataclass(frozen=True)
class LabeledDataset:
    kind: str
    inputs: tuple
    labels: tuple
    seed: int
    options: dict = field(default_factory=dict)
    # per-sample target distributions; None means use the hard label
    soft_targets: tuple | None = None

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise UsageError("inputs and labels differ in length")
        if self.soft_targets is not None and len(self.soft_targets) != len(self.inputs):
            raise UsageError("soft_targets and inputs differ in length")

    def __len__(self):
        return len(self.inputs)

    def subset(self, idx):
        idx = list(idx)
        soft = None if self.soft_targets is None else tuple(self.soft_targets[i] for i in idx)
        return replace(self, inputs=tuple(self.inputs[i] for i in idx),
                       labels=tuple(self.labels[i] for i in idx), soft_targets=soft)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.kind, self.seed, sorted(self.options.items()))).encode())
        for x, y in zip(self.inputs, self.labels):
            h.update(np.asarray(x, dtype=np.float64).tobytes())
            h.update(repr(y).encode())
        if self.soft_targets is not None:
            for t in self.soft_targets:
                h.update(b"-" if t is None else np.asarray(t, dtype=np.float64).tobytes())
        return h.hexdigest()


def synth_dataset(kind: str, n: int, seed: int, **options) -> LabeledDataset:
    if kind not in DATASET_KINDS:
        raise UsageError(f"unknown dataset kind {kind!r}; expected one of {DATASET_KINDS}")
    if n < 1:
        raise UsageError(f"dataset size must be >= 1, got {n}")
    builder = {"gauss-blobs": _gauss_blobs, "token-corpus": _token_corpus, "scene-vectors": _scene_vectors}[kind]
    inputs, labels, opts = builder(int(n), generator(seed, kind), **options)
    return LabeledDataset(kind, tuple(inputs), tuple(labels), int(seed), opts)


def _gauss_blobs(n, rng, dim=8, separation=2.0):
    labels = rng.integers(0, 2, size=n)
    direction = np.ones(dim) / np.sqrt(dim)
    noise = rng.standard_normal((n, dim))
    inputs = [(2 * y - 1) * separation * direction + z for y, z in zip(labels, noise)]
    return inputs, [int(y) for y in labels], {"dim": dim, "separation": float(separation)}


def _zipf_choice(rng, words):
    w = 1.0 / np.arange(1, len(words) + 1)
    return words[int(rng.choice(len(words), p=w / w.sum()))]


def _list(rng) -> list:
    items = [_zipf_choice(rng, LEXICON["item"])]
    while len(items) < LIST_MAX and rng.random() < LIST_CONTINUE:
        items.append(_zipf_choice(rng, LEXICON["item"]))
    return items


def sentence(rng) -> list:
    """subject verb object [conj subject verb (object | item-list)] adverb"""
    words = [_zipf_choice(rng, LEXICON[c]) for c in ("subject", "verb", "object")]
    if rng.random() < CONJ_PROB:
        words += [_zipf_choice(rng, LEXICON[c]) for c in ("conj", "subject", "verb")]
        words += _list(rng) if rng.random() < LIST_PROB else [_zipf_choice(rng, LEXICON["object"])]
    words.append(_zipf_choice(rng, LEXICON["adverb"]))
    return words


def _token_corpus(n, rng, alphabet=None):
    vocab = Vocab() if alphabet is None else Vocab(alphabet)
    inputs, labels = [], []
    for _ in range(n):
        toks = vocab.encode(" ".join(sentence(rng)) + ".") + [EOS_ID]
        inputs.append(tuple(toks))
        labels.append(tuple(toks[1:]))
    return inputs, labels, {"alphabet": vocab.alphabet}


def _scene_vectors(n, rng, grid=64, background=0.1, foreground=0.8, noise=0.05):
    inputs, labels = [], []
    for _ in range(n):
        k = int(rng.integers(1, 5))
        cells = np.sort(rng.choice(grid, size=k, replace=False))
        x = background + noise * rng.standard_normal(grid)
        x[cells] = foreground + noise * rng.standard_normal(k)
        inputs.append(np.clip(x, 0.0, 1.0))
        labels.append(tuple(int(c) for c in cells))
    return inputs, labels, {"grid": grid}


def prompt_of(tokens, vocab: Vocab | None = None) -> str:
    """The first clause (subject verb object) of a corpus sentence, used as a prompt."""
    vocab = vocab or Vocab()
    words = vocab.decode([t for t in tokens if t != EOS_ID]).rstrip(".").split(" ")
    return " ".join(words[:3])
