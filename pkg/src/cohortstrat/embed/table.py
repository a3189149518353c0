"""Embedding tables and the word2vec-style ``.emb`` text format."""

from __future__ import annotations

import numpy as np

from .. import DataError
from ..textio import escape_token, format_float, unescape_token


class EmbeddingTable:
    def __init__(self, tokens, vectors, context=None):
        vectors = np.asarray(vectors, dtype=float)
        if vectors.ndim != 2 or vectors.shape[0] != len(tokens):
            raise ValueError("vectors must be (len(tokens), dim)")
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens")
        self.vectors = vectors
        self.context = context
        self.history = []  # mean loss per epoch, filled by training

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __getitem__(self, token) -> np.ndarray:
        return self.vectors[self.index[token]]

    def get(self, token, default=None):
        i = self.index.get(token)
        return default if i is None else self.vectors[i]


def write_emb(table: EmbeddingTable, path) -> None:
    if len(table) == 0:
        raise ValueError("cannot write an empty embedding table")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for tok, vec in zip(table.tokens, table.vectors):
            fh.write(escape_token(tok) + " " + " ".join(format_float(x) for x in vec) + "\n")


def read_emb(path) -> EmbeddingTable:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        try:
            n, d = int(header[0]), int(header[1])
            if len(header) != 2 or n < 1 or d < 1:
                raise ValueError
        except (IndexError, ValueError):
            raise DataError(f"{path}:1: header must be '<node_count> <dim>' with both >= 1") from None
        tokens, rows = [], []
        for lineno, line in enumerate(fh, 2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split(" ")
            if len(parts) != d + 1:
                raise DataError(f"{path}:{lineno}: expected {d} values, got {len(parts) - 1}")
            try:
                rows.append([float(x) for x in parts[1:]])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value") from None
            tokens.append(unescape_token(parts[0]))
    if len(tokens) != n:
        raise DataError(f"{path}: header declares {n} rows, found {len(tokens)}")
    vec = np.array(rows, dtype=float)
    if not np.isfinite(vec).all():
        raise DataError(f"{path}: non-finite values")
    return EmbeddingTable(tokens, vec)
