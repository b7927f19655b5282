"""Iterative detection, decoding and successive interference cancellation.

One receiver round runs the detector on the current residual, decodes
every user slot with the outer code, and keeps the slots whose hard
decision satisfies all parity checks. Slots that fail hand their
extrinsic bit beliefs back to the detector as section priors for up to
``config.t_max_inner`` detector/decoder passes. Accepted messages are
re-encoded and subtracted from the residual, and the next round starts
with uniform priors and fewer user slots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import detector
from .config import RngStream, SystemConfig
from .dictionary import Dictionary
from .errors import DimensionError, NumericalError
from .outer import (
    LLR_CLAMP,
    LdpcCode,
    bit_llrs_to_section_priors,
    encode,
    message_bits,
    sections_to_bit_llrs,
    siso_decode,
)
from .sparc import SupportVector, encode_sections, modulate

__all__ = [
    "DecodedEntry",
    "DecodedSet",
    "RoundTrace",
    "TurboOutcome",
    "ReceiverResult",
    "bits_to_int",
    "int_to_bits",
    "reencode",
    "turbo_round",
    "sic_subtract",
    "run_receiver",
]


def bits_to_int(bits) -> int:
    """Big-endian bit vector -> Python int (messages are kept as ints)."""
    out = 0
    for b in np.asarray(bits, dtype=np.uint8).reshape(-1):
        out = (out << 1) | int(b)
    return out


def int_to_bits(value: int, width: int) -> np.ndarray:
    if value < 0 or value >> width:
        raise DimensionError(f"message {value} does not fit in {width} bits")
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


@dataclass
class DecodedEntry:
    message: int
    support: SupportVector
    channel: np.ndarray  # (M,) estimate of h_k in the received-signal scale
    slot: int = -1


@dataclass
class DecodedSet:
    entries: list = field(default_factory=list)
    round: int = 0

    def __len__(self):
        return len(self.entries)

    @property
    def messages(self) -> list:
        return [e.message for e in self.entries]

    def add(self, entry: DecodedEntry) -> bool:
        """Append unless the message is already present; returns whether it was added."""
        if entry.message in self.messages:
            return False
        self.entries.append(entry)
        return True


@dataclass
class RoundTrace:
    round: int
    decoded: int
    residual_energy: float
    K_current: int
    detector_iters: int


@dataclass
class TurboOutcome:
    valid: DecodedSet
    posteriors: np.ndarray
    mu_h: np.ndarray
    detector_iters: int
    inner_rounds: int
    diagnostics: list = field(default_factory=list)


@dataclass
class ReceiverResult:
    decoded: list
    counts: list
    rounds: int
    residual_energies: list
    trace: list
    detector_iters: int = 0
    abort_reason: str | None = None
    diagnostics: list = field(default_factory=list)  # detector diagnostics, one list per round


def reencode(message: int, code: LdpcCode, config: SystemConfig) -> SupportVector:
    """Message int -> padded outer codeword -> SPARC support."""
    word = encode(int_to_bits(message, code.k_out), code, config.L * config.m)
    return encode_sections(word, config.m)


def _tail_known_zero(llrs: np.ndarray, total: int) -> np.ndarray:
    # padding bits beyond the outer codeword are always zero
    if llrs.shape[-1] >= total:
        return llrs
    pad = np.full(llrs.shape[:-1] + (total - llrs.shape[-1],), LLR_CLAMP)
    return np.concatenate([llrs, pad], axis=-1)


def turbo_round(Y_res, A: Dictionary, config: SystemConfig, K_current: int, code: LdpcCode,
                listed=(), rng: RngStream | None = None, priors=None) -> TurboOutcome:
    """Detector/decoder passes on one residual.

    Stops at the first pass that yields at least one new valid message,
    or after ``config.t_max_inner`` passes. ``listed`` holds messages
    already decoded in earlier rounds; they are not reported again.
    """
    if K_current < 1:
        raise DimensionError(f"K_current must be >= 1, got {K_current}")
    slots = max(K_current, math.ceil(config.slot_factor * K_current))
    L, Q, m = config.L, config.Q, config.m
    total_bits = L * m
    if priors is None:
        priors = detector.uniform_priors(slots, L, Q)
    listed = set(listed)
    valid = DecodedSet()
    out = None
    iters = 0
    inner = 0
    diagnostics = []
    for inner in range(1, config.t_max_inner + 1):
        sub = rng.child(inner) if rng is not None else None
        out = detector.run(Y_res, A, config, priors=priors, K_current=slots, rng=sub)
        iters += out.iterations
        diagnostics.extend(out.diagnostics)
        llrs = sections_to_bit_llrs(out.posteriors)
        dec = siso_decode(llrs[:, : code.n_out], code, config.max_bp_iters)
        scale = detector.signal_scale(config)
        for k in np.flatnonzero(dec.valid):
            msg = bits_to_int(message_bits(dec.hard[k], code))
            if msg in listed or msg in valid.messages:
                continue
            support = reencode(msg, code, config)
            _, alpha = modulate(A, support, config.P, return_alpha=True)
            # detector channels live in the Y / sqrt(P/L) domain
            h = out.mu_h[k] * scale / math.sqrt(alpha)
            valid.add(DecodedEntry(msg, support, h, int(k)))
        if len(valid) or inner == config.t_max_inner:
            break
        ext = _tail_known_zero(dec.extrinsic, total_bits)
        priors = bit_llrs_to_section_priors(ext, m, L)
    return TurboOutcome(valid, out.posteriors, out.mu_h, iters, inner, diagnostics)


def _least_squares_channels(Y_res, signals: np.ndarray) -> np.ndarray:
    # joint LS fit of the decoded signals to the current residual
    sol, *_ = np.linalg.lstsq(signals, Y_res, rcond=None)
    return sol


def sic_subtract(Y_res, A: Dictionary, decoded: DecodedSet, P: float, refine: bool = False):
    """Remove ``sum_k s_k h_k^T`` for every decoded entry from the residual.

    With ``refine`` the channel rows are first re-fitted by least squares
    against the residual (the stored estimates are updated in place).
    """
    Y_res = np.asarray(Y_res)
    if not len(decoded):
        return Y_res.copy()
    S = np.stack([modulate(A, e.support, P) for e in decoded.entries], axis=1)
    H = np.stack([np.asarray(e.channel, dtype=complex).reshape(-1) for e in decoded.entries])
    if S.shape[0] != Y_res.shape[0] or H.shape[1] != Y_res.shape[1]:
        raise DimensionError(
            f"decoded signals {S.shape} / channels {H.shape} do not fit residual {Y_res.shape}")
    if refine:
        H = _least_squares_channels(Y_res, S)
        for e, h in zip(decoded.entries, H):
            e.channel = h
    return Y_res - S @ H


def run_receiver(Y, A: Dictionary, config: SystemConfig, code: LdpcCode,
                 rng: RngStream | None = None) -> ReceiverResult:
    """Rounds of :func:`turbo_round` and :func:`sic_subtract` until nothing new decodes.

    Also stops when every expected user has been removed or after
    ``config.t_max_turbo`` rounds. A detector divergence ends the loop
    and is reported in ``abort_reason``; messages decoded before it are kept.
    """
    Y_res = np.asarray(Y, dtype=complex).copy()
    K_current = config.K_active
    decoded: list[int] = []
    counts, energies, trace = [], [], []
    total_iters = 0
    diagnostics = []
    abort = None
    rounds = 0
    for r in range(config.t_max_turbo):
        if K_current <= 0:
            break
        sub = rng.child(r) if rng is not None else None
        try:
            outcome = turbo_round(Y_res, A, config, K_current, code, listed=decoded, rng=sub)
        except NumericalError as exc:
            abort = f"round {r}: {exc}"
            rounds += 1
            break
        rounds += 1
        total_iters += outcome.detector_iters
        diagnostics.append(outcome.diagnostics)
        found = outcome.valid
        found.round = r
        if not len(found):
            counts.append(0)
            energies.append(float(np.vdot(Y_res, Y_res).real))
            trace.append(RoundTrace(r, 0, energies[-1], K_current, outcome.detector_iters))
            break
        Y_res = sic_subtract(Y_res, A, found, config.P, refine=config.ls_refine)
        decoded.extend(found.messages)
        K_current -= len(found)
        counts.append(len(found))
        energies.append(float(np.vdot(Y_res, Y_res).real))
        trace.append(RoundTrace(r, len(found), energies[-1], K_current, outcome.detector_iters))
    return ReceiverResult(decoded, counts, rounds, energies, trace, total_iters, abort, diagnostics)
