"""Acceptance suite: one test per criterion, tolerances fixed up front.

Criteria 5 and 7 share one DS-1 desk run (module fixture). Every
detector call in that run carries an invariant monitor that raises on
the first violation, so a clean run is the proof of criterion 5.
"""

import itertools
import time

import numpy as np
import pytest

from bisparc import channel as ch
from bisparc import detector as det
from bisparc import dictionary as D
from bisparc import harness as hs
from bisparc.config import DS1_GRID, RngStream, SystemConfig, ds1_config, validate, with_eb_n0_db
from bisparc.outer import encode, regular_code, siso_decode, syndrome
from bisparc.receiver import DecodedEntry, DecodedSet, sic_subtract
from bisparc.sparc import SupportVector, decode_sections, encode_sections, modulate

from conftest import orthonormal_dictionary

# threshold measured on the first full DS-1 run; later runs may move one grid step
DS1_THRESHOLD_DB = 25.2
DS1_TRIALS = 200


def grid_step():
    return DS1_GRID[1] - DS1_GRID[0]


def diff_ci(a, b):
    """95% half-width of the difference of two independent PUPE estimates."""
    return float(np.hypot(a.pupe_ci95, b.pupe_ci95))


# --- 1 ---------------------------------------------------------------------------

def test_criterion_1_codec_exactness():
    start = time.perf_counter()
    mismatches = 0
    for m in range(1, 13):
        for L in range(1, 12 // m + 1):
            for bits in itertools.product((0, 1), repeat=L * m):
                mismatches += tuple(decode_sections(encode_sections(bits, m))) != bits
    rng = RngStream(101, 0)
    A = D.build("gaussian", 64, 128, rng.child(0))
    worst = 0.0
    for _ in range(1000):
        P = float(rng.uniform(0.1, 10.0))
        s = modulate(A, SupportVector(rng.integers(0, 16, 8), 16), P)
        worst = max(worst, abs(np.vdot(s, s).real / P - 1.0))
    assert mismatches == 0
    assert worst <= 1e-10
    assert time.perf_counter() - start < 5.0


# --- 2 ---------------------------------------------------------------------------

def test_criterion_2_mmse_oracles():
    start = time.perf_counter()
    rng = RngStream(102, 0)
    mu_r = rng.complex_normal(10_000, 4.0)[:, None]
    nu_r = rng.uniform(1e-3, 50.0, (10_000, 1))
    state = det.DetectorState.__new__(det.DetectorState)
    state.mu_r, state.nu_r = mu_r, nu_r
    det.mmse_channel_step(state)
    # posterior of CN(0,1) prior times CN(mu_r, nu_r) likelihood, by precision addition
    prec = 1.0 + 1.0 / nu_r
    assert np.abs(state.mu_h - (mu_r / nu_r) / prec).max() <= 1e-12
    assert np.abs(state.nu_h - 1.0 / prec).max() <= 1e-12

    worst = 0.0
    for Q in (2, 4, 8):
        sections = 1000 // 3 + 1
        mu_q = rng.complex_normal((sections * Q, 1), 1.0)
        nu_q = rng.uniform(0.05, 3.0, (sections * Q, 1))
        state.L, state.Q, state.mu_q, state.nu_q = sections, Q, mu_q, nu_q
        det.mmse_support_step(state)
        for l in range(sections):
            rows = slice(l * Q, (l + 1) * Q)
            mq, vq = mu_q[rows, 0], nu_q[rows, 0]
            log_like = np.array([
                -sum(abs(mq[i] - (1.0 if i == j else 0.0)) ** 2 / vq[i] for i in range(Q)) for j in range(Q)
            ])
            post = np.exp(log_like - log_like.max())
            post /= post.sum()
            worst = max(worst, np.abs(post - state.mu_c[rows, 0]).max())
    assert worst <= 1e-10
    assert time.perf_counter() - start < 10.0


# --- 3 ---------------------------------------------------------------------------

def exact_map_support(Y, A, cfg):
    best, best_ll = None, -np.inf
    for sections in itertools.product(range(cfg.Q), repeat=cfg.L):
        s = modulate(A, SupportVector(sections, cfg.Q), cfg.P)
        cov = np.outer(s, s.conj()) + cfg.sigma2 * np.eye(cfg.T)
        _, logdet = np.linalg.slogdet(cov)
        quad = np.einsum("tm,tm->", Y.conj(), np.linalg.solve(cov, Y)).real
        ll = -cfg.M * logdet - quad
        if ll > best_ll:
            best, best_ll = sections, ll
    return best


def test_criterion_3_exact_posterior_agreement():
    start = time.perf_counter()
    # all L*m = 2 support bits count as information bits at 10 dB
    cfg = validate(with_eb_n0_db(SystemConfig(K_active=1, L=2, Q=2, T=8, M=2, B=2, n_out=2), 10.0))
    agree = 0
    for t in range(100):
        rng = RngStream(7, t)
        A = orthonormal_dictionary(cfg.T, cfg.N, rng.child(0))
        v = SupportVector(rng.integers(0, cfg.Q, cfg.L), cfg.Q)
        obs = ch.synthesize(A, [v], ch.draw_channels(1, cfg.M, rng.child(1)), cfg.sigma2, cfg.P, rng.child(2))
        out = det.run(obs.Y, A, cfg, rng=rng.child(3))
        agree += tuple(out.posteriors[0].argmax(axis=1)) == exact_map_support(obs.Y, A, cfg)
    assert agree >= 90
    assert time.perf_counter() - start < 60.0


# --- 4 ---------------------------------------------------------------------------

def test_criterion_4_genie_sic_residual():
    start = time.perf_counter()
    cfg = validate(SystemConfig(K_active=4, M=8, T=512, L=8, Q=16, B=16, n_out=32, sigma2=0.25))
    assert cfg.T * cfg.M >= 4096
    A = D.build("gaussian", cfg.T, cfg.N, RngStream(104, 0))
    per_sample, noiseless = [], []
    for t in range(100):
        rng = RngStream(104, (1, t))
        supports = [SupportVector(rng.integers(0, cfg.Q, cfg.L), cfg.Q) for _ in range(cfg.K_active)]
        H = ch.draw_channels(cfg.K_active, cfg.M, rng.child(0))
        genie = DecodedSet([DecodedEntry(k, v, h) for k, (v, h) in enumerate(zip(supports, H))])
        noisy = ch.synthesize(A, supports, H, cfg.sigma2, cfg.P, rng.child(1))
        clean = ch.synthesize(A, supports, H, 0.0, cfg.P, rng.child(1))
        per_sample.append(np.linalg.norm(sic_subtract(noisy.Y, A, genie, cfg.P)) ** 2 / (cfg.T * cfg.M))
        noiseless.append(np.linalg.norm(sic_subtract(clean.Y, A, genie, cfg.P)))
    assert all(abs(p / cfg.sigma2 - 1.0) <= 0.10 for p in per_sample)
    assert max(noiseless) < 1e-9
    assert time.perf_counter() - start < 30.0


# --- 5 and 7 share one DS-1 run ----------------------------------------------------

class InvariantViolation(AssertionError):
    pass


def check_invariants(state, stage):
    for name, v in state.variances().items():
        if not (np.all(v >= det.VAR_FLOOR) and np.all(v <= det.VAR_CAP)):
            raise InvariantViolation(f"{name} left [{det.VAR_FLOOR}, {det.VAR_CAP}] after {stage}")
    if stage == "mmse":
        err = np.abs(state.section_mass() - 1.0).max()
        if err > 1e-9:
            raise InvariantViolation(f"section mass off by {err:.2e}")


@pytest.fixture(scope="module")
def ds1_run():
    original = det.run
    calls = {"n": 0}

    def monitored(*args, **kw):
        calls["n"] += 1
        return original(*args, monitor=check_invariants, **{k: v for k, v in kw.items() if k != "monitor"})

    det.run = monitored
    start = time.perf_counter()
    try:
        base = ds1_config()
        threshold, sweep = hs.find_required_ebn0(base, grid=DS1_GRID, trials=DS1_TRIALS, workers=1,
                                                 timing=False, scenario_id="DS-1")
        middle = DS1_GRID[len(DS1_GRID) // 2]
        wide = hs.run_point(with_eb_n0_db(base.replace(M=16), middle), DS1_TRIALS, workers=1, timing=False)
    finally:
        det.run = original
    return dict(threshold=threshold, sweep=sweep, wide=wide, middle=middle,
                detector_calls=calls["n"], seconds=time.perf_counter() - start)


def test_criterion_5_invariants_over_desk_run(ds1_run):
    # the monitor raises on the first violation, so reaching here means none occurred
    assert ds1_run["detector_calls"] >= len(DS1_GRID) * DS1_TRIALS
    assert sum(p.diverged_trials for p in ds1_run["sweep"].points) == 0


def test_criterion_6_outer_code_desk_check():
    start = time.perf_counter()
    code = regular_code(128, 64, RngStream(1, 0))
    assert set(code.column_weights) == {3} and set(code.row_weights) == {6}
    rng = RngStream(2, 0)
    sigma2 = 1.0 / (2 * code.rate * 10 ** 0.3)
    words = np.stack([encode(m, code) for m in rng.bits((10_000, code.k_out))])
    y = 1.0 - 2.0 * words + np.sqrt(sigma2) * rng.standard_normal(words.shape)
    ber = np.mean(siso_decode(2.0 * y / sigma2, code).hard != words)
    random_words = RngStream(3, 0).bits((10_000, code.n_out))
    false_accept = np.mean(~syndrome(random_words, code).any(axis=1))
    assert ber < 1e-2
    assert false_accept <= 2.0 * 2.0 ** -(code.n_out - code.k_out)
    assert time.perf_counter() - start < 60.0


def test_criterion_7_ds1_trend(ds1_run):
    pts = ds1_run["sweep"].points
    assert len(pts) == 6 and DS1_GRID[-1] - DS1_GRID[0] == pytest.approx(12.0)
    cfg = pts[0].config
    assert (cfg.K_active, cfg.M, cfg.T, cfg.L, cfg.Q, cfg.N, cfg.outer_length) == (8, 8, 256, 8, 16, 128, 32)
    assert all(p.trials == DS1_TRIALS for p in pts)
    # (a) non-increasing within 95% confidence
    for lo, hi in zip(pts, pts[1:]):
        assert hi.pupe_mean <= lo.pupe_mean + diff_ci(lo, hi), (lo.axis_value, hi.axis_value)
    # (b) some grid point reaches the target
    assert ds1_run["threshold"] is not None
    # (c) more antennas do not hurt at the middle point
    narrow = next(p for p in pts if p.axis_value == ds1_run["middle"])
    assert ds1_run["wide"].pupe_mean <= narrow.pupe_mean + diff_ci(narrow, ds1_run["wide"])
    # frozen regression baseline
    assert abs(ds1_run["threshold"] - DS1_THRESHOLD_DB) <= grid_step() + 1e-9
    assert ds1_run["seconds"] < 30 * 60


# --- 8 ---------------------------------------------------------------------------

def test_criterion_8_determinism(tmp_path):
    start = time.perf_counter()
    cfg = with_eb_n0_db(ds1_config(), DS1_GRID[len(DS1_GRID) // 2])
    paths = []
    for workers in (1, 2):
        point = hs.run_point(cfg, DS1_TRIALS, workers=workers, timing=False)
        path = tmp_path / f"w{workers}.csv"
        hs.write_csv([point], path, "DS-1")
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert time.perf_counter() - start < 3 * 60
