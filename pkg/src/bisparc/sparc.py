"""Inner SPARC code: bits <-> one-hot section supports <-> transmit signals.

Bit order inside an ``m``-bit chunk is big-endian: the first bit of the
chunk is the most significant bit of the section index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dictionary import Dictionary, forward
from .errors import DegenerateError, DimensionError, LengthError

__all__ = [
    "SupportVector",
    "encode_sections",
    "decode_sections",
    "modulate",
    "hard_decision",
    "support_matrix",
    "section_bits",
]


@dataclass(frozen=True, eq=False)
class SupportVector:
    """One user's SPARC support: one active index per section."""

    sections: np.ndarray
    Q: int

    def __post_init__(self):
        s = np.asarray(self.sections, dtype=np.int64).reshape(-1)
        if s.size and (s.min() < 0 or s.max() >= self.Q):
            raise DimensionError(f"section indices must lie in [0, {self.Q})")
        object.__setattr__(self, "sections", s)

    @property
    def L(self) -> int:
        return self.sections.size

    @property
    def N(self) -> int:
        return self.L * self.Q

    @property
    def positions(self) -> np.ndarray:
        """Flat indices of the active columns, ``l*Q + section[l]``."""
        return np.arange(self.L) * self.Q + self.sections

    def dense(self) -> np.ndarray:
        c = np.zeros(self.N)
        c[self.positions] = 1.0
        return c

    @classmethod
    def from_dense(cls, c, Q: int) -> "SupportVector":
        c = np.asarray(c).reshape(-1, Q)
        if not (np.all((c == 0) | (c == 1)) and np.all(c.sum(axis=1) == 1)):
            raise DimensionError("dense support must be one-hot in every section")
        return cls(np.argmax(c, axis=1), Q)

    def __eq__(self, other):
        if not isinstance(other, SupportVector):
            return NotImplemented
        return self.Q == other.Q and np.array_equal(self.sections, other.sections)

    def __hash__(self):
        return hash((self.Q, self.sections.tobytes()))


def section_bits(m: int) -> np.ndarray:
    """``(2**m, m)`` table: row ``q`` is the big-endian bit pattern of ``q``."""
    q = np.arange(2**m)[:, None]
    shifts = np.arange(m - 1, -1, -1)[None, :]
    return ((q >> shifts) & 1).astype(np.uint8)


def encode_sections(codeword_bits, m: int) -> SupportVector:
    """Split ``L*m`` bits into ``L`` chunks and one-hot each chunk."""
    bits = np.asarray(codeword_bits, dtype=np.int64).reshape(-1)
    if m < 1 or bits.size == 0 or bits.size % m:
        raise LengthError(f"bit vector of length {bits.size} is not a positive multiple of m={m}")
    weights = 1 << np.arange(m - 1, -1, -1)
    return SupportVector(bits.reshape(-1, m) @ weights, 1 << m)


def decode_sections(v: SupportVector) -> np.ndarray:
    m = v.Q.bit_length() - 1
    return section_bits(m)[v.sections].reshape(-1)


def modulate(A: Dictionary, v: SupportVector, P: float, return_alpha: bool = False):
    """``s = sqrt(alpha) * A c`` with ``alpha = P / ||A c||^2`` so that ``||s||^2 = P``."""
    if v.N != A.N:
        raise DimensionError(f"support length {v.N} does not match dictionary N={A.N}")
    base = A.matrix[:, v.positions].sum(axis=1) if A.rows is None else forward(A, v.dense())
    energy = float(np.vdot(base, base).real)
    if energy == 0.0:
        raise DegenerateError("||A c|| = 0; cannot meet the power budget")
    alpha = P / energy
    s = np.sqrt(alpha) * base
    return (s, alpha) if return_alpha else s


def hard_decision(post) -> SupportVector:
    """Per-section argmax of an ``(L, Q)`` probability table (ties -> smallest index)."""
    post = np.asarray(post)
    return SupportVector(np.argmax(post, axis=1), post.shape[1])


def support_matrix(supports) -> np.ndarray:
    """Stack supports into the dense ``N x K`` matrix ``C``."""
    supports = list(supports)
    if not supports:
        return np.zeros((0, 0))
    return np.stack([v.dense() for v in supports], axis=1)
