# %% [markdown]
# # The bilinear detector on a problem small enough to check by hand
#
# One user, two sections of two columns each, so there are only four
# possible supports. The exact posterior can be found by enumerating them,
# and the detector's section posteriors can be compared against it.

# %%
import itertools

import numpy as np

from bisparc import channel as ch
from bisparc import detector as det
from bisparc.config import RngStream, SystemConfig, validate, with_eb_n0_db
from bisparc.dictionary import Dictionary
from bisparc.sparc import SupportVector, modulate

cfg = validate(with_eb_n0_db(SystemConfig(K_active=1, L=2, Q=2, T=8, M=2, B=2, n_out=2), 10.0))
print("noise variance %.3f" % cfg.sigma2)


def orthonormal(T, N, rng):
    q, _ = np.linalg.qr(rng.complex_normal((T, N)))
    return Dictionary.from_matrix(q)


def exact_posterior(Y, A):
    """Posterior over every support, integrating out the Gaussian channel."""
    logs = {}
    for sec in itertools.product(range(cfg.Q), repeat=cfg.L):
        s = modulate(A, SupportVector(sec, cfg.Q), cfg.P)
        cov = np.outer(s, s.conj()) + cfg.sigma2 * np.eye(cfg.T)
        _, logdet = np.linalg.slogdet(cov)
        logs[sec] = -cfg.M * logdet - np.einsum("tm,tm->", Y.conj(), np.linalg.solve(cov, Y)).real
    top = max(logs.values())
    z = sum(np.exp(v - top) for v in logs.values())
    return {k: np.exp(v - top) / z for k, v in logs.items()}


# %% [markdown]
# ## One trial in detail

# %%
rng = RngStream(7, 0)
A = orthonormal(cfg.T, cfg.N, rng.child(0))
truth = SupportVector(rng.integers(0, cfg.Q, cfg.L), cfg.Q)
obs = ch.synthesize(A, [truth], ch.draw_channels(1, cfg.M, rng.child(1)), cfg.sigma2, cfg.P, rng.child(2))
out = det.run(obs.Y, A, cfg, rng=rng.child(3))
print("true support:", truth.sections)
print("detector section posteriors:\n", np.round(out.posteriors[0], 3))
post = exact_posterior(obs.Y, A)
for sec, p in sorted(post.items(), key=lambda kv: -kv[1]):
    print("  exact P(support=%s) = %.3f" % (sec, p))
print("iterations:", out.iterations, " converged:", out.converged)

# %% [markdown]
# ## Agreement over many trials

# %%
agree = 0
for t in range(100):
    rng = RngStream(7, t)
    A = orthonormal(cfg.T, cfg.N, rng.child(0))
    v = SupportVector(rng.integers(0, cfg.Q, cfg.L), cfg.Q)
    obs = ch.synthesize(A, [v], ch.draw_channels(1, cfg.M, rng.child(1)), cfg.sigma2, cfg.P, rng.child(2))
    out = det.run(obs.Y, A, cfg, rng=rng.child(3))
    post = exact_posterior(obs.Y, A)
    agree += tuple(out.posteriors[0].argmax(axis=1)) == max(post, key=post.get)
print("detector picks the exact MAP support in %d / 100 trials" % agree)

# %% [markdown]
# ## Watching the iterations
# A monitor sees the state after every half step. Section masses stay at
# one and every variance stays inside the clamp.

# %%
worst = {"mass": 0.0}


def monitor(state, stage):
    if stage == "mmse":
        worst["mass"] = max(worst["mass"], float(np.abs(state.section_mass() - 1).max()))


det.run(obs.Y, A, cfg, rng=RngStream(7, 999), monitor=monitor)
print("largest section-mass error: %.1e" % worst["mass"])
