"""Matrix Market array-format I/O (real general / real symmetric)."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np
import scipy.io

from .errors import InputError
from .matcore import as_mat

# 17 significant digits round-trip every double exactly
PRECISION = 17


def read_matrix(path) -> np.ndarray:
    try:
        data = scipy.io.mmread(str(path))
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read Matrix Market file {path}: {exc}") from exc
    if hasattr(data, "toarray"):
        data = data.toarray()
    if np.iscomplexobj(data):
        raise InputError(f"{path}: complex matrices are not supported")
    return as_mat(data, str(path))


def write_matrix(path, X, symmetric: bool | None = None, comment: str = "") -> Path:
    """Write ``X`` atomically (temporary file then rename)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if symmetric is None:
        symmetric = X.shape[0] == X.shape[1] and X.shape[0] > 1 and np.array_equal(X, X.T)
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".mtx")
    try:
        with os.fdopen(fd, "wb") as fh:
            scipy.io.mmwrite(
                fh,
                X,
                comment=comment,
                field="real",
                precision=PRECISION,
                symmetry="symmetric" if symmetric else "general",
            )
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_text_atomic(path, text: str) -> Path:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path
