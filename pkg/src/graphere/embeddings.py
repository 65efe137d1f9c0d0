"""Token and mention embedding providers.

Two interchangeable backends produce per-window token embeddings; event and
timex embeddings are the mean over the mention's token span. The trainable
lookup participates in autodiff; the frozen-file backend serves precomputed
vectors (32-bit on disk, upcast to 64-bit).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import Document

UNK_ROW = 0


def hashed_unit_vector(text: str, dim: int) -> np.ndarray:
    """Deterministic pseudo-embedding for an arbitrary string: unit-norm
    Gaussian seeded by a stable hash of the text."""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    seed = int.from_bytes(digest, "little")
    v = np.random.default_rng(seed).standard_normal(dim)
    return v / np.linalg.norm(v)


class TrainableLookup:
    """Learnable per-token embedding table with a shared UNK row at index 0."""

    kind = "lookup"

    def __init__(self, vocab: list[str], dim: int, seed: int = 0):
        self.dim = dim
        self.vocab = {tok: i + 1 for i, tok in enumerate(vocab)}
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(dim)
        table = rng.uniform(-bound, bound, size=(len(vocab) + 1, dim))
        self.table = Tensor(table, requires_grad=True)
        self._text_cache: dict[str, np.ndarray] = {}

    @classmethod
    def from_documents(cls, docs: list[Document], dim: int, seed: int = 0) -> "TrainableLookup":
        vocab = sorted({tok for doc in docs for tok in doc.tokens})
        return cls(vocab, dim, seed=seed)

    def parameters(self) -> dict[str, Tensor]:
        return {"embed.table": self.table}

    def token_ids(self, tokens: list[str]) -> np.ndarray:
        return np.array([self.vocab.get(tok, UNK_ROW) for tok in tokens], dtype=np.int64)

    def embed_window(self, doc: Document, window: tuple[int, int]) -> Tensor:
        s, e = window
        return ad.gather_rows(self.table, self.token_ids(doc.tokens[s:e]))

    def embed_text_tokens(self, tokens: list[str]) -> Tensor:
        if not tokens:
            raise ValueError("cannot embed an empty token list")
        return ad.mean_rows(ad.gather_rows(self.table, self.token_ids(tokens)))


class FrozenFileBackend:
    """Read-only per-document token vectors from a manifest + binary bundle.

    Out-of-document strings (static-graph node surfaces) get deterministic
    hashed unit vectors so graph nodes still carry identity.
    """

    kind = "frozen"

    def __init__(self, directory):
        self.directory = Path(directory)
        manifest = json.loads((self.directory / "manifest.json").read_text())
        self.entries: dict[str, dict] = {}
        dims = set()
        for entry in manifest["docs"]:
            self.entries[entry["doc_id"]] = entry
            dims.add(entry["dim"])
        if len(dims) > 1:
            raise ValueError(f"frozen embeddings mix dimensions: {sorted(dims)}")
        self.dim = dims.pop() if dims else int(manifest.get("dim", 0))
        if not self.dim:
            raise ValueError("frozen embedding manifest does not define a dimension")
        self._doc_cache: dict[str, np.ndarray] = {}
        self._text_cache: dict[str, np.ndarray] = {}

    def parameters(self) -> dict[str, Tensor]:
        return {}

    def _doc_vectors(self, doc: Document) -> np.ndarray:
        if doc.doc_id not in self._doc_cache:
            if doc.doc_id not in self.entries:
                raise KeyError(f"no frozen embeddings for document '{doc.doc_id}'")
            entry = self.entries[doc.doc_id]
            raw = np.fromfile(self.directory / f"{doc.doc_id}.bin", dtype="<f4")
            expected = entry["n_tokens"] * entry["dim"]
            if raw.size != expected:
                raise ValueError(
                    f"embedding file for '{doc.doc_id}' holds {raw.size} floats, expected {expected}"
                )
            if entry["n_tokens"] != doc.n_tokens:
                raise ValueError(
                    f"document '{doc.doc_id}' has {doc.n_tokens} tokens but embeddings "
                    f"cover {entry['n_tokens']}"
                )
            self._doc_cache[doc.doc_id] = raw.astype(np.float64).reshape(
                entry["n_tokens"], entry["dim"])
        return self._doc_cache[doc.doc_id]

    def embed_window(self, doc: Document, window: tuple[int, int]) -> Tensor:
        s, e = window
        return Tensor(self._doc_vectors(doc)[s:e].copy())

    def embed_text_tokens(self, tokens: list[str]) -> Tensor:
        # scaled to unit per-coordinate variance, matching typical embeddings
        if not tokens:
            raise ValueError("cannot embed an empty token list")
        rows = []
        for tok in tokens:
            if tok not in self._text_cache:
                self._text_cache[tok] = hashed_unit_vector(tok, self.dim) * np.sqrt(self.dim)
            rows.append(self._text_cache[tok])
        return Tensor(np.mean(rows, axis=0, keepdims=True))


def write_frozen_embeddings(directory, vectors: dict[str, np.ndarray]) -> None:
    """Write a frozen-embedding bundle: manifest.json plus one little-endian
    float32 binary per document."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for doc_id, arr in vectors.items():
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise ValueError(f"vectors for '{doc_id}' must be 2-D, got {arr.shape}")
        arr.astype("<f4").tofile(directory / f"{doc_id}.bin")
        entries.append({"doc_id": doc_id, "n_tokens": int(arr.shape[0]),
                        "dim": int(arr.shape[1])})
    manifest = {"format_version": 1, "docs": entries}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1))


def mention_embedding(token_embeds: Tensor, span: tuple[int, int]) -> Tensor:
    """Mean of the token vectors in [start, stop), as a (1, d) tensor."""
    s, e = span
    if e <= s:
        raise ValueError(f"empty mention span [{s}, {e})")
    return ad.mean_rows(ad.slice_rows(token_embeds, s, e))


@dataclass
class MentionEmbeddings:
    """Stacked mention vectors: events first (document order), then timexes."""

    matrix: Tensor  # (p + q, d)
    event_rows: list[Tensor]  # p tensors of shape (1, d), same graph nodes
    n_events: int
    n_timexes: int
    mention_ids: list[str]


def collect_mentions(doc: Document, windows: list[tuple[int, int]], backend,
                     include_timexes: bool = True) -> MentionEmbeddings:
    """Embed every window once and average each mention's span.

    Every mention must sit fully inside exactly one window.
    """
    embedded = [(w, backend.embed_window(doc, w)) for w in windows]

    def vector_for(start: int, end: int) -> Tensor:
        for (ws, we), emb in embedded:
            if ws <= start and end <= we:
                return mention_embedding(emb, (start - ws, end - ws))
        raise ValueError(
            f"document '{doc.doc_id}': mention span [{start}, {end}) not inside any window"
        )

    rows, ids = [], []
    for m in doc.events:
        rows.append(vector_for(m.start, m.end))
        ids.append(m.mention_id)
    event_rows = list(rows)
    q = 0
    if include_timexes:
        for m in doc.timexes:
            rows.append(vector_for(m.start, m.end))
            ids.append(m.mention_id)
        q = len(doc.timexes)
    if rows:
        matrix = ad.concat_rows(rows)
    else:
        matrix = Tensor(np.zeros((0, backend.dim)))
    return MentionEmbeddings(matrix=matrix, event_rows=event_rows,
                             n_events=len(doc.events), n_timexes=q, mention_ids=ids)
