"""Shared T x N dictionary with forward / adjoint application."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RngStream
from .errors import DimensionError

__all__ = ["Dictionary", "build", "forward", "adjoint", "dump", "load"]

_KIND_CODES = {"gaussian": 0, "subsampled_dft": 1, "explicit": 2}
_MAGIC = b"BSPD"
_HEADER = struct.Struct("<4sBxxxQQQ")


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Unit-norm-column sensing matrix ``A``.

    ``rows`` holds the sampled DFT row indices for ``subsampled_dft``;
    it enables the FFT path in :func:`forward` / :func:`adjoint`.
    ``abs2`` caches ``|a_tn|^2`` for the variance recursions.
    """

    kind: str
    matrix: np.ndarray
    column_norms: np.ndarray
    seed: int = 0
    rows: np.ndarray | None = None
    abs2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "abs2", np.abs(self.matrix) ** 2)
        self.matrix.setflags(write=False)

    @property
    def T(self) -> int:
        return self.matrix.shape[0]

    @property
    def N(self) -> int:
        return self.matrix.shape[1]

    @property
    def shape(self):
        return self.matrix.shape

    @classmethod
    def from_matrix(cls, matrix, normalize: bool = True) -> "Dictionary":
        """Wrap an explicit matrix (test fixtures, externally designed frames)."""
        A = np.array(matrix, dtype=complex)
        if A.ndim != 2:
            raise DimensionError("dictionary matrix must be 2-D")
        norms = np.linalg.norm(A, axis=0)
        if normalize:
            if np.any(norms == 0):
                raise DimensionError("dictionary has an all-zero column")
            A = A / norms
            norms = np.linalg.norm(A, axis=0)
        return cls("explicit", A, norms)


def build(kind: str, T: int, N: int, rng: RngStream) -> Dictionary:
    """Construct a seeded dictionary with unit-norm columns.

    ``gaussian``: i.i.d. CN(0, 1/T) entries, columns rescaled to unit norm.
    ``subsampled_dft``: ``T`` distinct rows of the ``N``-point DFT drawn
    uniformly without replacement, scaled by ``1/sqrt(T)``.
    """
    if T < 1 or N < 1:
        raise DimensionError(f"T and N must be >= 1, got T={T}, N={N}")
    if kind == "gaussian":
        A = rng.complex_normal((T, N), var=1.0 / T)
        norms = np.linalg.norm(A, axis=0)
        A = A / norms
        rows = None
    elif kind == "subsampled_dft":
        if T > N:
            raise DimensionError(f"subsampled_dft needs T <= N, got T={T}, N={N}")
        rows = np.sort(rng.choice(N, size=T, replace=False))
        A = np.exp(-2j * np.pi * np.outer(rows, np.arange(N)) / N) / np.sqrt(T)
    else:
        raise DimensionError(f"unknown dictionary kind {kind!r}")
    return Dictionary(kind, A, np.linalg.norm(A, axis=0), seed=rng.seed, rows=rows)


def _as_2d(X):
    X = np.asarray(X)
    return (X[:, None], True) if X.ndim == 1 else (X, False)


def forward(A: Dictionary, X) -> np.ndarray:
    """``A @ X`` for ``X`` of shape ``(N,)`` or ``(N, M)``."""
    X, vec = _as_2d(X)
    if X.shape[0] != A.N:
        raise DimensionError(f"forward: X has {X.shape[0]} rows, dictionary has N={A.N}")
    if A.rows is not None:
        out = np.fft.fft(X, axis=0)[A.rows] / np.sqrt(A.T)
    else:
        out = A.matrix @ X
    return out[:, 0] if vec else out


def adjoint(A: Dictionary, Y) -> np.ndarray:
    """``A^H @ Y`` for ``Y`` of shape ``(T,)`` or ``(T, M)``."""
    Y, vec = _as_2d(Y)
    if Y.shape[0] != A.T:
        raise DimensionError(f"adjoint: Y has {Y.shape[0]} rows, dictionary has T={A.T}")
    if A.rows is not None:
        full = np.zeros((A.N, Y.shape[1]), dtype=complex)
        full[A.rows] = Y
        out = np.fft.ifft(full, axis=0) * (A.N / np.sqrt(A.T))
    else:
        out = A.matrix.conj().T @ Y
    return out[:, 0] if vec else out


def dump(A: Dictionary, path: str | Path) -> None:
    """Binary dump: header then little-endian interleaved re/im doubles (row-major)."""
    header = _HEADER.pack(_MAGIC, _KIND_CODES[A.kind], A.T, A.N, A.seed)
    body = np.ascontiguousarray(A.matrix, dtype="<c16").view("<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        if A.rows is not None:
            fh.write(np.asarray(A.rows, dtype="<i8").tobytes())
        fh.write(body.tobytes())


def load(path: str | Path) -> Dictionary:
    raw = Path(path).read_bytes()
    magic, code, T, N, seed = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a dictionary dump")
    kind = {v: k for k, v in _KIND_CODES.items()}[code]
    offset = _HEADER.size
    rows = None
    if kind == "subsampled_dft":
        rows = np.frombuffer(raw, dtype="<i8", count=T, offset=offset).astype(np.int64)
        offset += 8 * T
    vals = np.frombuffer(raw, dtype="<f8", count=2 * T * N, offset=offset)
    A = vals.view("<c16").reshape(T, N).astype(complex)
    return Dictionary(kind, A, np.linalg.norm(A, axis=0), seed=seed, rows=rows)
