"""Fast built-in invariant checks behind ``bisparc selftest``.

Each check returns ``(name, ok, detail)``. The whole suite runs in a few
seconds and needs no test framework.
"""

from __future__ import annotations

import itertools
import tempfile
from pathlib import Path

import numpy as np

from . import detector
from . import dictionary as dictionary_mod
from .channel import draw_channels, synthesize
from .config import RngStream, SystemConfig, validate
from .outer import check_validity, encode, read_alist, regular_code, write_alist
from .receiver import DecodedEntry, DecodedSet, sic_subtract
from .sparc import SupportVector, decode_sections, encode_sections, modulate

__all__ = ["run_checks"]


def _codec_bijection():
    bad = 0
    for m, L in ((1, 4), (2, 3), (3, 4), (4, 3)):
        for bits in itertools.product((0, 1), repeat=L * m):
            if tuple(decode_sections(encode_sections(bits, m))) != bits:
                bad += 1
    return bad == 0, f"{bad} round-trip mismatches"


def _power(seed):
    rng = RngStream(seed, 10)
    A = dictionary_mod.build("gaussian", 32, 64, rng.child(0))
    worst = 0.0
    for _ in range(200):
        v = SupportVector(rng.integers(0, 16, 4), 16)
        s = modulate(A, v, 2.5)
        worst = max(worst, abs(np.vdot(s, s).real / 2.5 - 1.0))
    return worst < 1e-10, f"max relative power error {worst:.2e}"


def _mmse_channel(seed):
    rng = RngStream(seed, 11)
    mu_r = rng.complex_normal(1000, 4.0).reshape(100, 10)
    nu_r = rng.uniform(1e-3, 10.0, (100, 10))
    state = detector.DetectorState.__new__(detector.DetectorState)
    state.mu_r, state.nu_r = mu_r, nu_r
    detector.mmse_channel_step(state)
    err = max(np.abs(state.mu_h - mu_r / (nu_r + 1)).max(), np.abs(state.nu_h - nu_r / (nu_r + 1)).max())
    return err < 1e-12, f"max deviation {err:.1e}"


def _support_bayes(seed):
    rng = RngStream(seed, 12)
    worst = 0.0
    for Q in (2, 4, 8):
        mu_q = rng.complex_normal((Q * 5, 1), 1.0)
        nu_q = rng.uniform(0.05, 3.0, (Q * 5, 1))
        state = detector.DetectorState.__new__(detector.DetectorState)
        state.L, state.Q, state.mu_q, state.nu_q = 5, Q, mu_q, nu_q
        detector.mmse_support_step(state)
        for l in range(5):
            sl = slice(l * Q, (l + 1) * Q)
            mq, vq = mu_q[sl, 0], nu_q[sl, 0]
            # candidate j: entry j is 1, the rest 0, under CN(q; c, nu_q)
            logs = [
                -sum(abs(mq[i] - (1.0 if i == j else 0.0)) ** 2 / vq[i] for i in range(Q))
                for j in range(Q)
            ]
            logs = np.array(logs) - max(logs)
            post = np.exp(logs) / np.exp(logs).sum()
            worst = max(worst, np.abs(post - state.mu_c[sl, 0]).max())
    return worst < 1e-10, f"max deviation {worst:.1e}"


def _genie_sic(seed):
    cfg = validate(SystemConfig(K_active=3, M=16, T=256, L=4, Q=16, B=8))
    rng = RngStream(seed, 13)
    A = dictionary_mod.build("gaussian", cfg.T, cfg.N, rng.child(0))
    supports = [SupportVector(rng.integers(0, cfg.Q, cfg.L), cfg.Q) for _ in range(3)]
    H = draw_channels(3, cfg.M, rng.child(1))
    obs = synthesize(A, supports, H, 0.0, cfg.P, rng.child(2))
    decoded = DecodedSet([DecodedEntry(i, v, h) for i, (v, h) in enumerate(zip(supports, H))])
    resid = np.linalg.norm(sic_subtract(obs.Y, A, decoded, cfg.P))
    return resid < 1e-9, f"noiseless residual norm {resid:.1e}"


def _ldpc(seed):
    code = regular_code(32, 16, RngStream(seed, 14))
    rng = RngStream(seed, 15)
    ok = all(check_validity(encode(rng.bits(16), code), code) for _ in range(100))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "code.alist"
        write_alist(code, path)
        same = np.array_equal(read_alist(path).parity, code.parity)
    return ok and same, f"codewords valid={ok}, alist round trip={same}"


def _dictionary_io(seed):
    with tempfile.TemporaryDirectory() as tmp:
        good = True
        for kind in ("gaussian", "subsampled_dft"):
            A = dictionary_mod.build(kind, 16, 32, RngStream(seed, 16))
            path = Path(tmp) / f"{kind}.bin"
            dictionary_mod.dump(A, path)
            B = dictionary_mod.load(path)
            good &= np.array_equal(A.matrix, B.matrix) and B.kind == A.kind
    return bool(good), f"dump/load identical={bool(good)}"


def _rng(seed):
    a = RngStream(seed, (3, 1)).complex_normal(1000)
    b = RngStream(seed, (3, 1)).complex_normal(1000)
    c = RngStream(seed, (3, 2)).complex_normal(1000)
    ok = np.array_equal(a, b) and not np.array_equal(a, c)
    return ok, "equal ids repeat, distinct ids differ" if ok else "stream mismatch"


CHECKS = {
    "codec bijection": lambda s: _codec_bijection(),
    "power invariant": _power,
    "channel MMSE closed form": _mmse_channel,
    "support step vs Bayes enumeration": _support_bayes,
    "noiseless genie SIC": _genie_sic,
    "LDPC encode / alist": _ldpc,
    "dictionary dump / load": _dictionary_io,
    "RNG stream determinism": _rng,
}


def run_checks(seed: int = 0):
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn(seed)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        yield name, bool(ok), detail
