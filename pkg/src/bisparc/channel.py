"""Quasi-static Rayleigh block-fading multiple-access channel and the PUPE metric.

Channels are stored ``K x M`` (row ``k`` is user ``k``'s antenna vector),
i.e. the transpose of the ``M x K`` matrix ``H`` in ``Y = A C H^T + W``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import RngStream
from .dictionary import Dictionary
from .errors import DimensionError, EmptyTruthError
from .sparc import SupportVector, modulate

__all__ = ["Observation", "draw_channels", "synthesize", "pupe", "false_alarms"]


@dataclass
class Observation:
    """Received block plus the ground truth that produced it."""

    Y: np.ndarray
    supports: list[SupportVector]
    H: np.ndarray
    signals: np.ndarray
    alphas: np.ndarray
    messages: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.supports)


def draw_channels(K: int, M: int, rng: RngStream) -> np.ndarray:
    """i.i.d. CN(0, 1) fading coefficients, shape ``(K, M)``."""
    if K < 0 or M < 1:
        raise DimensionError(f"need K >= 0 and M >= 1, got K={K}, M={M}")
    return rng.complex_normal((K, M))


def synthesize(A: Dictionary, supports, H, sigma2: float, P: float, rng: RngStream) -> Observation:
    """``Y = sum_k s_k h_k^T + W`` with ``s_k = sqrt(alpha_k) A c_k`` and ``W ~ CN(0, sigma2)``."""
    supports = list(supports)
    H = np.asarray(H, dtype=complex)
    if H.ndim == 1 and len(supports) == 1:
        H = H[None, :]
    if H.ndim != 2 or H.shape[0] != len(supports):
        raise DimensionError(f"H must be K x M with K={len(supports)}, got shape {H.shape}")
    M = H.shape[1]
    if M < 1:
        raise DimensionError("need at least one receive antenna")
    if supports:
        pairs = [modulate(A, v, P, return_alpha=True) for v in supports]
        S = np.stack([s for s, _ in pairs], axis=1)
        alphas = np.array([a for _, a in pairs])
        clean = S @ H
    else:
        S = np.zeros((A.T, 0), dtype=complex)
        alphas = np.zeros(0)
        clean = np.zeros((A.T, M), dtype=complex)
    noise = rng.complex_normal((A.T, M), var=sigma2) if sigma2 > 0 else 0.0
    return Observation(clean + noise, supports, H, S, alphas)


def pupe(truth, decoded) -> float:
    """Fraction of transmitted messages missing from the decoded list."""
    truth = set(truth)
    if not truth:
        raise EmptyTruthError("PUPE is undefined for an empty transmitted list")
    return len(truth - set(decoded)) / len(truth)


def false_alarms(truth, decoded) -> int:
    """``|decoded \\ truth|`` (not part of PUPE, reported for diagnostics)."""
    return len(set(decoded) - set(truth))
