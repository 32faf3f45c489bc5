"""Batch sentence-embedding export for JSONL corpora.

Reads a corpus of ``{"id": ..., "text": ..., ...}`` lines, encodes each text
with a pinned sentence encoder, and writes the same lines back with a
``features`` array added. Everything else about each line passes through
untouched, and output order matches input order regardless of how batches
are scheduled.

The encoder is injectable: any object with an ``encode(list[str]) ->
(n, dim) array`` method and a ``dim`` attribute works. ``HashEncoder`` is a
deterministic offline stand-in used by the test suite and available from the
CLI as model id ``debug-hash``.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

DEFAULT_MODEL = "sentence-transformers/paraphrase-MiniLM-L6-v2"
EXPECTED_DIM = 384


class ExportError(Exception):
    """Unrecoverable export failure (bad input, wrong encoder, load error)."""


@dataclass
class ExportJob:
    input_path: str
    output_path: str
    model_id: str = DEFAULT_MODEL
    batch_size: int = 64
    revision: Optional[str] = None
    expected_dim: int = EXPECTED_DIM

    def __post_init__(self):
        if self.batch_size < 1:
            raise ExportError(f"batch size must be >= 1, got {self.batch_size}")
        if self.expected_dim < 1:
            raise ExportError(f"expected dim must be >= 1, got {self.expected_dim}")


class HashEncoder:
    """Deterministic text-hash embeddings; no model download required.

    Each text seeds a generator from its SHA-256 digest, so identical texts
    always map to identical vectors on any machine.
    """

    def __init__(self, dim: int = EXPECTED_DIM):
        self.dim = dim

    def encode(self, texts) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            seed = int.from_bytes(digest[:8], "little")
            rng = np.random.default_rng(seed)
            out[i] = rng.standard_normal(self.dim, dtype=np.float32)
        return out


class SentenceEncoder:
    """Wrapper around a pinned sentence-transformers checkpoint.

    Runs in inference mode; embeddings are raw encoder output, not
    normalized (downstream transforms own all normalization).
    """

    def __init__(self, model_id: str = DEFAULT_MODEL,
                 revision: Optional[str] = None):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as err:
            raise ExportError(f"sentence-transformers is not installed: {err}")
        try:
            self.model = SentenceTransformer(model_id, revision=revision)
        except Exception as err:
            raise ExportError(f"failed to load model {model_id!r}: {err}")
        self.model.eval()
        self.dim = int(self.model.get_sentence_embedding_dimension())

    def encode(self, texts) -> np.ndarray:
        return np.asarray(self.model.encode(
            list(texts),
            convert_to_numpy=True,
            normalize_embeddings=False,
            show_progress_bar=False,
        ))


def make_encoder(model_id: str, revision: Optional[str] = None,
                 dim: int = EXPECTED_DIM):
    if model_id == "debug-hash":
        return HashEncoder(dim=dim)
    return SentenceEncoder(model_id, revision=revision)


def _atomic_write(path, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_export(job: ExportJob, encoder=None) -> dict:
    """Encode every text in the input corpus and write the augmented copy.

    Returns a summary dict with line and empty-text counts. Lines with a
    missing or empty text get a zero vector and a warning rather than
    aborting the whole job.
    """
    if encoder is None:
        encoder = make_encoder(job.model_id, revision=job.revision,
                               dim=job.expected_dim)
    if encoder.dim != job.expected_dim:
        raise ExportError(
            f"encoder {job.model_id!r} produces {encoder.dim}-dim vectors, "
            f"expected {job.expected_dim}"
        )

    records = []
    with open(job.input_path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise ExportError(
                    f"{job.input_path}:{lineno}: malformed JSON ({err})")
            records.append((lineno, obj))
    if not records:
        raise ExportError(f"{job.input_path}: empty corpus")

    texts = [(i, rec[1]["text"]) for i, rec in enumerate(records)
             if rec[1].get("text")]
    vectors = np.zeros((len(records), job.expected_dim), dtype=np.float32)
    for start in range(0, len(texts), job.batch_size):
        batch = texts[start:start + job.batch_size]
        encoded = encoder.encode([t for _, t in batch])
        if encoded.shape != (len(batch), job.expected_dim):
            raise ExportError(
                f"encoder returned shape {encoded.shape}, expected "
                f"({len(batch)}, {job.expected_dim})"
            )
        for (row, _), vec in zip(batch, encoded):
            vectors[row] = vec

    n_empty = 0
    with_text = {i for i, _ in texts}
    lines = []
    for row, (lineno, obj) in enumerate(records):
        if row not in with_text:
            n_empty += 1
            warnings.warn(
                f"{job.input_path}:{lineno}: empty text, writing a zero vector"
            )
        out = dict(obj)
        out["features"] = [float(v) for v in vectors[row]]
        lines.append(json.dumps(out))
    _atomic_write(job.output_path, "\n".join(lines) + "\n")
    return {"lines": len(records), "empty_texts": n_empty,
            "model": job.model_id, "dim": job.expected_dim}
