"""Outer LDPC code: construction, systematic encoding, flooding sum-product
SISO decoding and the Q-ary <-> binary belief bridges.

LLR sign convention: positive means bit 0 is more likely. All emitted
LLRs are clamped to ``[-LLR_CLAMP, LLR_CLAMP]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RngStream
from .errors import DimensionError, LengthError
from .sparc import section_bits

__all__ = [
    "LLR_CLAMP",
    "PROB_FLOOR",
    "LdpcCode",
    "DecodeResult",
    "regular_code",
    "gf2_rank",
    "encode",
    "message_bits",
    "syndrome",
    "check_validity",
    "siso_decode",
    "sections_to_bit_llrs",
    "bit_llrs_to_section_priors",
    "read_alist",
    "write_alist",
]

LLR_CLAMP = 40.0
PROB_FLOOR = 1e-30
_TANH_CLIP = 1.0 - 1e-15


def _rref_gf2(H):
    """Reduced row echelon form over GF(2). Returns (R, pivot_columns)."""
    R = np.array(H, dtype=np.uint8) % 2
    rows, cols = R.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hits = np.nonzero(R[r:, c])[0]
        if hits.size == 0:
            continue
        p = r + hits[0]
        if p != r:
            R[[r, p]] = R[[p, r]]
        others = np.nonzero(R[:, c])[0]
        others = others[others != r]
        R[others] ^= R[r]
        pivots.append(c)
        r += 1
    return R[:r], np.array(pivots, dtype=np.int64)


def gf2_rank(H) -> int:
    return len(_rref_gf2(H)[1])


@dataclass(frozen=True, eq=False)
class LdpcCode:
    """Binary LDPC code with a systematic encoder derived from ``parity``.

    ``info_positions`` are the codeword coordinates that carry the
    message bits verbatim; ``parity_map`` gives the remaining
    coordinates as GF(2) combinations of the message.
    """

    parity: np.ndarray
    max_bp_iters: int = 50
    n_out: int = field(init=False)
    k_out: int = field(init=False)
    info_positions: np.ndarray = field(init=False, repr=False)
    check_positions: np.ndarray = field(init=False, repr=False)
    parity_map: np.ndarray = field(init=False, repr=False)
    _edges: tuple = field(init=False, repr=False)

    def __post_init__(self):
        Hm = np.asarray(self.parity, dtype=np.uint8) % 2
        if Hm.ndim != 2:
            raise DimensionError("parity matrix must be 2-D")
        object.__setattr__(self, "parity", Hm)
        R, pivots = _rref_gf2(Hm)
        n = Hm.shape[1]
        info = np.setdiff1d(np.arange(n), pivots)
        object.__setattr__(self, "n_out", n)
        object.__setattr__(self, "k_out", n - len(pivots))
        object.__setattr__(self, "info_positions", info)
        object.__setattr__(self, "check_positions", pivots)
        object.__setattr__(self, "parity_map", R[:, info])
        object.__setattr__(self, "_edges", _edge_tables(Hm))

    @property
    def rate(self) -> float:
        return self.k_out / self.n_out

    @property
    def column_weights(self):
        return self.parity.sum(axis=0)

    @property
    def row_weights(self):
        return self.parity.sum(axis=1)


def _edge_tables(H):
    r_idx, c_idx = np.nonzero(H)  # row-major, sorted by row
    E = r_idx.size
    m, n = H.shape

    def padded(owner, count):
        deg = np.bincount(owner, minlength=count)
        width = max(int(deg.max()) if deg.size else 0, 1)
        table = np.full((count, width), E, dtype=np.int64)
        order = np.argsort(owner, kind="stable")
        starts = np.concatenate(([0], np.cumsum(deg)[:-1]))
        slot = np.arange(E) - np.repeat(starts, deg)
        table[owner[order], slot] = order
        return table

    return r_idx, c_idx, padded(r_idx, m), padded(c_idx, n)


def regular_code(n_out: int, k_out: int, rng: RngStream, column_weight: int = 3,
                 max_bp_iters: int = 50, attempts: int = 200) -> LdpcCode:
    """Seeded column-weight-``dv`` LDPC code with balanced row weights.

    Columns are filled one at a time, each edge going to the least-loaded
    check that does not close a 4-cycle with the column's other checks
    (a progressive-edge-growth style variant of Gallager's random
    construction). Rank-deficient draws are rejected so the code has
    exactly ``k_out`` message bits. With ``n_out = 2*k_out`` and
    ``dv = 3`` the result is (3,6)-regular.
    """
    m = n_out - k_out
    if not 0 < k_out < n_out:
        raise DimensionError(f"need 0 < k_out < n_out, got ({n_out}, {k_out})")
    dv = min(column_weight, m)
    cap = -(-n_out * dv // m)
    for attempt in range(attempts):
        gen = rng.child(attempt).generator
        H = np.zeros((m, n_out), dtype=np.uint8)
        deg = np.zeros(m, dtype=np.int64)
        for col in gen.permutation(n_out):
            chosen = []
            for _ in range(dv):
                tiebreak = gen.random(m)
                order = np.lexsort((tiebreak, deg))
                pick = None
                for strict in (True, False):
                    for r in order:
                        if r in chosen or deg[r] >= cap:
                            continue
                        if strict and any((H[r] & H[c]).any() for c in chosen):
                            continue
                        pick = r
                        break
                    if pick is not None:
                        break
                if pick is None:
                    pick = next(r for r in order if r not in chosen)
                chosen.append(pick)
                deg[pick] += 1
            H[chosen, col] = 1
        if gf2_rank(H) == m:
            return LdpcCode(H, max_bp_iters=max_bp_iters)
    raise DimensionError(f"could not build a full-rank ({n_out}, {k_out}) code in {attempts} attempts")


def encode(message, code: LdpcCode, total_bits: int | None = None) -> np.ndarray:
    """Systematic encoding, zero-padded at the tail to ``total_bits``."""
    msg = np.asarray(message, dtype=np.uint8).reshape(-1)
    if msg.size != code.k_out:
        raise LengthError(f"message has {msg.size} bits, code expects k_out={code.k_out}")
    total = code.n_out if total_bits is None else total_bits
    if total < code.n_out:
        raise LengthError(f"cannot pad a length-{code.n_out} codeword to {total} bits")
    word = np.zeros(total, dtype=np.uint8)
    word[code.info_positions] = msg
    word[code.check_positions] = (code.parity_map.astype(np.int64) @ msg) % 2
    return word


def message_bits(word, code: LdpcCode) -> np.ndarray:
    """Recover the message from a (possibly padded) codeword."""
    return np.asarray(word, dtype=np.uint8)[..., code.info_positions]


def syndrome(word, code: LdpcCode) -> np.ndarray:
    w = np.asarray(word, dtype=np.int64)[..., : code.n_out]
    return (w @ code.parity.T.astype(np.int64)) % 2


def check_validity(hard, code: LdpcCode) -> bool:
    """True iff the first ``n_out`` bits satisfy every parity check."""
    return not syndrome(hard, code).any()


@dataclass
class DecodeResult:
    posterior: np.ndarray
    extrinsic: np.ndarray
    hard: np.ndarray
    valid: np.ndarray | bool
    iterations: np.ndarray | int


def siso_decode(llrs, code: LdpcCode, max_iters: int | None = None) -> DecodeResult:
    """Flooding-schedule sum-product decoding (tanh rule).

    ``llrs`` may be a single word ``(n,)`` or a batch ``(B, n)``; inputs
    longer than ``n_out`` are truncated (padding is not decoded). Each
    word runs at least one iteration and stops as soon as its hard
    decision has zero syndrome.
    """
    max_iters = code.max_bp_iters if max_iters is None else max_iters
    L0 = np.asarray(llrs, dtype=float)
    single = L0.ndim == 1
    L0 = np.atleast_2d(L0)[:, : code.n_out]
    if L0.shape[1] != code.n_out:
        raise LengthError(f"need at least n_out={code.n_out} LLRs, got {L0.shape[1]}")
    if not np.all(np.isfinite(L0)):
        raise ValueError("siso_decode: non-finite input LLRs")
    L0 = np.clip(L0, -LLR_CLAMP, LLR_CLAMP)
    r_idx, c_idx, chk, var = code._edges
    E = r_idx.size
    nb = L0.shape[0]

    total = L0.copy()
    iters = np.zeros(nb, dtype=np.int64)
    active = np.arange(nb)
    v2c = L0[:, c_idx]
    for it in range(1, max(max_iters, 1) + 1):
        la = L0[active]
        t = np.ones((active.size, E + 1))
        t[:, :E] = np.clip(np.tanh(0.5 * v2c), -_TANH_CLIP, _TANH_CLIP)
        tc = t[:, chk]  # (b, m, dc)
        ones = np.ones(tc.shape[:2] + (1,))
        prefix = np.cumprod(np.concatenate([ones, tc[:, :, :-1]], axis=2), axis=2)
        suffix = np.cumprod(np.concatenate([ones, tc[:, :, :0:-1]], axis=2), axis=2)[:, :, ::-1]
        excl = np.clip(prefix * suffix, -_TANH_CLIP, _TANH_CLIP)
        c2v = np.zeros((active.size, E + 1))
        c2v[:, chk] = 2.0 * np.arctanh(excl)
        c2v[:, E] = 0.0
        tot = la + c2v[:, var].sum(axis=2)
        total[active] = tot
        iters[active] = it
        hard = (tot < 0).astype(np.int64)
        hx = np.zeros((active.size, E + 1), dtype=np.int64)
        hx[:, :E] = hard[:, c_idx]
        synd = hx[:, chk].sum(axis=2) % 2
        keep = synd.any(axis=1)
        if not keep.any():
            break
        v2c = np.clip(tot[:, c_idx] - c2v[:, :E], -LLR_CLAMP, LLR_CLAMP)[keep]
        active = active[keep]

    posterior = np.clip(total, -LLR_CLAMP, LLR_CLAMP)
    extrinsic = np.clip(posterior - L0, -LLR_CLAMP, LLR_CLAMP)
    hard = (posterior < 0).astype(np.uint8)
    valid = ~syndrome(hard, code).any(axis=1)
    if single:
        return DecodeResult(posterior[0], extrinsic[0], hard[0], bool(valid[0]), int(iters[0]))
    return DecodeResult(posterior, extrinsic, hard, valid, iters)


def sections_to_bit_llrs(post, n_bits: int | None = None) -> np.ndarray:
    """Marginalise ``(..., L, Q)`` section probabilities to ``L*m`` bit LLRs.

    ``LLR_j = log sum_{q: bit_j(q)=0} p(q) - log sum_{q: bit_j(q)=1} p(q)``.
    """
    post = np.asarray(post, dtype=float)
    Q = post.shape[-1]
    m = Q.bit_length() - 1
    table = section_bits(m).astype(float)  # (Q, m)
    p1 = post @ table
    p0 = post @ (1.0 - table)
    llr = np.log(np.maximum(p0, PROB_FLOOR)) - np.log(np.maximum(p1, PROB_FLOOR))
    llr = np.clip(llr, -LLR_CLAMP, LLR_CLAMP).reshape(post.shape[:-2] + (-1,))
    return llr if n_bits is None else llr[..., :n_bits]


def bit_llrs_to_section_priors(llrs, m: int, L: int | None = None) -> np.ndarray:
    """Section priors ``p(q) ∝ prod_j Pr(bit_j = bit_j(q))`` from bit LLRs.

    ``llrs`` shorter than ``L*m`` are padded with zeros (uninformative).
    """
    llrs = np.clip(np.asarray(llrs, dtype=float), -LLR_CLAMP, LLR_CLAMP)
    if L is None:
        L = -(-llrs.shape[-1] // m)
    pad = L * m - llrs.shape[-1]
    if pad < 0:
        raise LengthError(f"{llrs.shape[-1]} LLRs exceed L*m={L * m}")
    if pad:
        llrs = np.concatenate([llrs, np.zeros(llrs.shape[:-1] + (pad,))], axis=-1)
    llrs = llrs.reshape(llrs.shape[:-1] + (L, m))
    log_p0 = -np.logaddexp(0.0, -llrs)
    log_p1 = -np.logaddexp(0.0, llrs)
    table = section_bits(m).astype(float)  # (Q, m)
    logp = log_p0 @ (1.0 - table).T + log_p1 @ table.T  # (..., L, Q)
    logp -= logp.max(axis=-1, keepdims=True)
    p = np.exp(logp)
    return p / p.sum(axis=-1, keepdims=True)


def write_alist(code: LdpcCode, path: str | Path) -> None:
    H = code.parity
    m, n = H.shape
    cols = [np.nonzero(H[:, j])[0] + 1 for j in range(n)]
    rows = [np.nonzero(H[i])[0] + 1 for i in range(m)]
    dv = max(len(c) for c in cols)
    dc = max(len(r) for r in rows)

    def line(vals, width):
        vals = list(vals) + [0] * (width - len(vals))
        return " ".join(str(int(v)) for v in vals)

    out = [f"{n} {m}", f"{dv} {dc}", line([len(c) for c in cols], n), line([len(r) for r in rows], m)]
    out += [line(c, dv) for c in cols]
    out += [line(r, dc) for r in rows]
    Path(path).write_text("\n".join(out) + "\n")


def read_alist(path: str | Path, max_bp_iters: int = 50) -> LdpcCode:
    tokens = [int(t) for t in Path(path).read_text().split()]
    it = iter(tokens)
    n, m = next(it), next(it)
    dv, dc = next(it), next(it)
    col_deg = [next(it) for _ in range(n)]
    [next(it) for _ in range(m)]  # row degrees, implied by the column lists
    H = np.zeros((m, n), dtype=np.uint8)
    for j in range(n):
        entries = [next(it) for _ in range(dv)]
        for r in entries[: col_deg[j]]:
            H[r - 1, j] = 1
    return LdpcCode(H, max_bp_iters=max_bp_iters)
