"""Text formats: MAT1 matrices, model checkpoints and labelled datasets.

MAT1 is ``rows cols`` on the first line followed by ``rows * cols``
whitespace-separated decimals in row-major order. A checkpoint is a one-line
JSON header followed by a MAT1 block per weight and per bias (as ``1 x out``).
A dataset file is a single MAT1 block whose last column holds integer labels.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import MatrixFormatError
from .linalg import as_matrix
from .mlp import Dataset, MlpModel

CHECKPOINT_FORMAT = "srnkit-checkpoint"
SCHEMA_VERSION = "srnkit/1"


def atomic_write(path, text: str) -> None:
    """Write via a temp file in the target directory and rename into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_mat1(W) -> str:
    A = as_matrix(W)
    lines = [f"{A.shape[0]} {A.shape[1]}"]
    lines += [" ".join(format(float(x), ".17g") for x in row) for row in A]
    return "\n".join(lines) + "\n"


def _take_block(tokens: list[str], pos: int) -> tuple[np.ndarray, int]:
    if pos + 2 > len(tokens):
        raise MatrixFormatError("missing MAT1 header")
    try:
        rows, cols = int(tokens[pos]), int(tokens[pos + 1])
    except ValueError as exc:
        raise MatrixFormatError(f"bad MAT1 header: {tokens[pos:pos + 2]}") from exc
    if rows < 1 or cols < 1:
        raise MatrixFormatError(f"MAT1 dimensions must be positive, got {rows} x {cols}")
    start, stop = pos + 2, pos + 2 + rows * cols
    if stop > len(tokens):
        raise MatrixFormatError(f"MAT1 block expects {rows * cols} values, found {len(tokens) - start}")
    try:
        data = np.array([float(t) for t in tokens[start:stop]])
    except ValueError as exc:
        raise MatrixFormatError(f"non-numeric MAT1 value: {exc}") from exc
    if not np.all(np.isfinite(data)):
        raise MatrixFormatError("MAT1 values must be finite")
    return data.reshape(rows, cols), stop


def parse_mat1(text: str) -> np.ndarray:
    tokens = text.split()
    A, stop = _take_block(tokens, 0)
    if stop != len(tokens):
        raise MatrixFormatError(f"MAT1 block has {len(tokens) - stop} values beyond rows*cols")
    return A


def read_mat1(path) -> np.ndarray:
    return parse_mat1(Path(path).read_text())


def write_mat1(path, W) -> None:
    atomic_write(path, format_mat1(W))


def format_checkpoint(model: MlpModel) -> str:
    header = {
        "schema": SCHEMA_VERSION,
        "format": CHECKPOINT_FORMAT,
        "layers": [{"shape": list(W.shape), "activation": act}
                   for W, act in zip(model.weights, model.activations)],
        "normalizer": model.normalizer,
        "srank_ratio": model.srank_ratio,
    }
    parts = [json.dumps(header, sort_keys=True) + "\n"]
    for W, b in zip(model.weights, model.biases):
        parts.append(format_mat1(W))
        parts.append(format_mat1(b.reshape(1, -1)))
    return "".join(parts)


def parse_checkpoint(text: str) -> MlpModel:
    first, _, rest = text.partition("\n")
    try:
        header = json.loads(first)
    except json.JSONDecodeError as exc:
        raise MatrixFormatError(f"checkpoint header is not JSON: {exc}") from exc
    if header.get("format") != CHECKPOINT_FORMAT:
        raise MatrixFormatError("not an srnkit checkpoint")
    tokens = rest.split()
    pos = 0
    weights, biases, acts = [], [], []
    for layer in header["layers"]:
        W, pos = _take_block(tokens, pos)
        b, pos = _take_block(tokens, pos)
        if list(W.shape) != list(layer["shape"]) or b.shape != (1, W.shape[0]):
            raise MatrixFormatError("checkpoint block shapes disagree with header")
        weights.append(W)
        biases.append(b[0])
        acts.append(layer["activation"])
    if pos != len(tokens):
        raise MatrixFormatError("trailing data after checkpoint blocks")
    return MlpModel(weights, biases, acts, header.get("normalizer", "none"), header.get("srank_ratio"))


def read_checkpoint(path) -> MlpModel:
    return parse_checkpoint(Path(path).read_text())


def write_checkpoint(path, model: MlpModel) -> None:
    atomic_write(path, format_checkpoint(model))


def read_dataset(path, n_classes: int | None = None) -> Dataset:
    A = read_mat1(path)
    if A.shape[1] < 2:
        raise MatrixFormatError("dataset needs at least one feature column and a label column")
    labels = A[:, -1]
    if np.any(labels != np.round(labels)) or labels.min() < 0:
        raise MatrixFormatError("label column must hold non-negative integers")
    labels = labels.astype(np.int64)
    k = int(labels.max()) + 1 if n_classes is None else n_classes
    return Dataset(A[:, :-1], labels, k)


def write_dataset(path, ds: Dataset) -> None:
    write_mat1(path, np.column_stack([ds.inputs, ds.labels.astype(np.float64)]))
