"""BiGAMP joint support / channel detector.

The model ``Y = A X + W`` with ``X = C H^T`` is handled in two coupled
layers that exchange Gaussian messages on every ``x_nm``:

* the affine layer runs AMP on ``Y = A X + W``; it produces the
  pseudo-observation ``theta_nm`` (variance ``nu_theta``) and uses the
  bilinear layer's plug-in estimate ``(mu_p, nu_p)`` as the prior on
  ``x_nm``;
* the bilinear layer runs BiGAMP on ``x_nm = c_n^T h_m`` with
  ``CN(theta; x, nu_theta)`` as the per-entry likelihood, producing
  pseudo-likelihoods ``(mu_r, nu_r)`` for the channels and
  ``(mu_q, nu_q)`` for the support entries;
* the MMSE denoisers apply the CN(0, 1) channel prior and the one-hot
  section prior (optionally weighted by outer-decoder feedback).

Internally the detector works on ``Y / sqrt(P/L)`` so that, with
unit-norm dictionary columns, the effective channels keep unit prior
variance; returned channel estimates live in that normalised domain.

Arrays: ``mu_c, nu_c, mu_q, nu_q`` are ``N x K``; ``mu_h, nu_h, mu_r,
nu_r`` are ``K x M``; ``x``/``theta``/``p``/``alpha`` arrays are
``N x M``; ``mu_z, nu_z`` are ``T x M``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .config import RngStream, SystemConfig
from .dictionary import Dictionary, adjoint, forward
from .errors import DimensionError, NumericalError

__all__ = [
    "VAR_FLOOR",
    "VAR_CAP",
    "DetectorState",
    "DetectorOutput",
    "init",
    "plugin_step",
    "affine_half_step",
    "bilinear_half_step",
    "mmse_channel_step",
    "mmse_support_step",
    "damp_estimates",
    "section_likelihoods",
    "uniform_priors",
    "signal_scale",
    "run",
    "write_diagnostics",
]

VAR_FLOOR = 1e-12
VAR_CAP = 1e6


@dataclass
class DetectorState:
    L: int
    Q: int
    mu_x: np.ndarray
    nu_x: np.ndarray
    mu_z: np.ndarray
    nu_z: np.ndarray
    s_hat: np.ndarray
    theta: np.ndarray
    nu_theta: np.ndarray
    mu_p: np.ndarray
    nu_p: np.ndarray
    mu_alpha: np.ndarray
    nu_alpha: np.ndarray
    mu_r: np.ndarray
    nu_r: np.ndarray
    mu_q: np.ndarray
    nu_q: np.ndarray
    mu_h: np.ndarray
    nu_h: np.ndarray
    mu_c: np.ndarray
    nu_c: np.ndarray
    iter: int = 0

    @property
    def K(self) -> int:
        return self.mu_c.shape[1]

    @property
    def N(self) -> int:
        return self.mu_c.shape[0]

    @property
    def M(self) -> int:
        return self.mu_h.shape[1]

    def variances(self):
        return {
            name: getattr(self, name)
            for name in ("nu_x", "nu_z", "nu_theta", "nu_p", "nu_alpha", "nu_r", "nu_q", "nu_h", "nu_c")
        }

    def section_mass(self) -> np.ndarray:
        """``(K, L)`` sums of ``mu_c`` over each section."""
        return self.mu_c.T.reshape(self.K, self.L, self.Q).sum(axis=2)

    def copy(self) -> "DetectorState":
        kw = {k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}
        return DetectorState(**kw)


@dataclass
class DetectorOutput:
    posteriors: np.ndarray  # (K, L, Q) section beliefs handed to the outer decoder
    mu_h: np.ndarray  # (K, M) channel means, normalised domain
    nu_h: np.ndarray
    state: DetectorState
    iterations: int
    converged: bool
    diagnostics: list = field(default_factory=list)


def _clip_var(v):
    return np.clip(v, VAR_FLOOR, VAR_CAP)


def _inv(total):
    # 1/total with "no information" capped rather than infinite
    with np.errstate(divide="ignore"):
        return _clip_var(1.0 / np.maximum(total, 0.0))


def _damp(new, old, old_var, damping):
    # an uninformative (capped) previous message carries no usable mean
    blended = damping * new + (1.0 - damping) * old
    return np.where(old_var >= VAR_CAP, new, blended)


def signal_scale(config: SystemConfig) -> float:
    """Nominal per-column amplitude ``sqrt(P/L)`` folded out of ``Y``."""
    return float(np.sqrt(config.P / config.L))


def uniform_priors(K: int, L: int, Q: int) -> np.ndarray:
    return np.full((K, L, Q), 1.0 / Q)


def _sections(arr, K, L, Q):
    """``N x K`` -> ``K x L x Q``."""
    return arr.T.reshape(K, L, Q)


def _unsections(arr):
    K = arr.shape[0]
    return arr.reshape(K, -1).T


def plugin_step(state: DetectorState) -> DetectorState:
    """Plug-in moments of ``p_nm = sum_k c_nk h_km``.

    ``nu_p`` carries all three variance terms. The mean deflation only
    uses the channel-uncertainty part ``|mu_c|^2 nu_h``; keeping the
    ``nu_c |mu_h|^2`` part as well makes the recursion unstable while the
    supports are still diffuse.
    """
    c2 = np.abs(state.mu_c) ** 2
    h2 = np.abs(state.mu_h) ** 2
    chan_part = c2 @ state.nu_h
    state.nu_p = _clip_var(chan_part + state.nu_c @ h2 + state.nu_c @ state.nu_h)
    state.mu_p = state.mu_c @ state.mu_h - state.mu_alpha * chan_part
    return state


def init(config: SystemConfig, K_current: int, rng: RngStream | None = None,
         Y=None, A: Dictionary | None = None, sigma2: float | None = None,
         perturbation: float | None = None) -> DetectorState:
    """Fresh detector state.

    Support means start at the Bernoulli(1/Q) mean, optionally jittered
    by a seeded perturbation (renormalised per section) to break the
    symmetry between user slots. Channel means start at 0 with prior
    variance 1. When ``Y`` and ``A`` are given the residual arrays are
    initialised from them (``mu_z = Y`` since ``mu_x = 0``).
    """
    if K_current < 1:
        raise DimensionError(f"K_current must be >= 1, got {K_current}")
    L, Q = config.L, config.Q
    N, M, T = L * Q, config.M, config.T
    K = K_current
    eps = config.init_perturbation if perturbation is None else perturbation
    mu_c = np.full((K, L, Q), 1.0 / Q)
    if eps > 0 and rng is not None:
        mu_c = mu_c + eps * rng.uniform(-1.0, 1.0, size=(K, L, Q))
        mu_c = np.clip(mu_c, VAR_FLOOR, None)
        mu_c /= mu_c.sum(axis=2, keepdims=True)
    mu_c = _unsections(mu_c)
    nu_c = _clip_var(mu_c * (1.0 - mu_c))
    zeros_nm = np.zeros((N, M), dtype=complex)
    state = DetectorState(
        L=L, Q=Q,
        mu_x=zeros_nm.copy(), nu_x=np.ones((N, M)),
        mu_z=np.zeros((T, M), dtype=complex), nu_z=np.ones((T, M)),
        s_hat=np.zeros((T, M), dtype=complex),
        theta=zeros_nm.copy(), nu_theta=np.full((N, M), VAR_CAP),
        mu_p=zeros_nm.copy(), nu_p=np.ones((N, M)),
        mu_alpha=zeros_nm.copy(), nu_alpha=np.zeros((N, M)) + VAR_FLOOR,
        mu_r=np.zeros((K, M), dtype=complex), nu_r=np.full((K, M), VAR_CAP),
        mu_q=np.zeros((N, K), dtype=complex), nu_q=np.full((N, K), VAR_CAP),
        mu_h=np.zeros((K, M), dtype=complex), nu_h=np.ones((K, M)),
        mu_c=mu_c, nu_c=nu_c,
    )
    plugin_step(state)
    state.nu_x = state.nu_p.copy()
    if Y is not None and A is not None:
        Y = np.asarray(Y)
        if Y.shape != (A.T, M) or A.N != N:
            raise DimensionError(f"Y {Y.shape} / dictionary {A.shape} inconsistent with T={T}, N={N}, M={M}")
        s2 = config.sigma2 if sigma2 is None else sigma2
        state.mu_z = Y.astype(complex)
        state.nu_z = _clip_var(A.abs2 @ state.nu_x + s2)
    return state


def affine_half_step(state: DetectorState, A: Dictionary, Y, sigma2: float,
                     damping: float = 1.0) -> DetectorState:
    """AMP step on ``Y = A X + W``.

    Residual with Onsager correction, pseudo-observation ``theta``, then the
    Gaussian combination of ``theta`` with the plug-in prior ``(mu_p, nu_p)``.
    Damping blends the new ``mu_z`` and ``mu_x`` with their previous values.
    """
    Y = np.asarray(Y)
    nu_u = A.abs2 @ state.nu_x
    u = forward(A, state.mu_x) - nu_u * state.s_hat
    nu_z = _clip_var(nu_u + sigma2)
    mu_z = Y - u
    if state.iter > 0 and damping < 1.0:
        mu_z = damping * mu_z + (1.0 - damping) * state.mu_z
    s_hat = mu_z / nu_z
    nu_theta = _inv(A.abs2.T @ (1.0 / nu_z))
    theta = state.mu_x + nu_theta * adjoint(A, s_hat)

    nu_x = _clip_var(state.nu_p * nu_theta / (state.nu_p + nu_theta))
    mu_x = nu_x * (state.mu_p / state.nu_p + theta / nu_theta)
    if state.iter > 0 and damping < 1.0:
        mu_x = damping * mu_x + (1.0 - damping) * state.mu_x

    state.mu_z, state.nu_z, state.s_hat = mu_z, nu_z, s_hat
    state.theta, state.nu_theta = theta, nu_theta
    state.mu_x, state.nu_x = mu_x, nu_x
    return state


def bilinear_half_step(state: DetectorState, damping: float = 1.0) -> DetectorState:
    """Scaled residuals ``alpha`` and the channel / support pseudo-likelihoods.

    The pseudo-likelihoods use the fresh ``mu_alpha``; the stored copy,
    which the next plug-in mean subtracts, is damped. Without that the
    plug-in correction integrates the residual and oscillates once the
    supports have settled and the noise is small.
    """
    nu_alpha = _inv(state.nu_p + state.nu_theta)
    mu_alpha = (state.theta - state.mu_p) * nu_alpha

    c2 = np.abs(state.mu_c) ** 2
    nu_r = _inv(c2.T @ nu_alpha)
    mu_r = (state.mu_h * (1.0 - nu_r * (state.nu_c.T @ nu_alpha))
            + nu_r * (state.mu_c.conj().T @ mu_alpha))

    h2 = np.abs(state.mu_h) ** 2
    nu_q = _inv(nu_alpha @ h2.T)
    mu_q = (state.mu_c * (1.0 - nu_q * (nu_alpha @ state.nu_h.T))
            + nu_q * (mu_alpha @ state.mu_h.conj().T))

    if state.iter > 0 and damping < 1.0:
        mu_r = _damp(mu_r, state.mu_r, state.nu_r, damping)
        mu_q = _damp(mu_q, state.mu_q, state.nu_q, damping)
        mu_alpha = damping * mu_alpha + (1.0 - damping) * state.mu_alpha

    state.mu_alpha, state.nu_alpha = mu_alpha, nu_alpha
    state.mu_r, state.nu_r = mu_r, nu_r
    state.mu_q, state.nu_q = mu_q, nu_q
    return state


def mmse_channel_step(state: DetectorState) -> DetectorState:
    """Posterior of ``h ~ CN(0, 1)`` given ``CN(h; mu_r, nu_r)``."""
    state.mu_h = state.mu_r / (state.nu_r + 1.0)
    state.nu_h = _clip_var(state.nu_r / (state.nu_r + 1.0))
    return state


def section_likelihoods(mu_q, nu_q, L: int, Q: int) -> np.ndarray:
    """Per-section log-evidence ``(2 Re mu_q - 1) / nu_q`` as ``(K, L, Q)``."""
    K = mu_q.shape[1]
    return _sections((2.0 * np.real(mu_q) - 1.0) / nu_q, K, L, Q)


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=-1, keepdims=True)


def mmse_support_step(state: DetectorState, priors=None) -> DetectorState:
    """One-hot section posterior, computed as a log-domain softmax.

    ``mu_c`` over section ``l`` of user ``k`` is
    ``softmax_q[log eps_q + (2 Re mu_q - 1)/nu_q]``; ``priors`` (``K x L x Q``)
    are the outer decoder's section priors, uniform when ``None``.
    ``nu_c`` is the marginal Bernoulli variance ``mu_c (1 - mu_c)``.
    """
    logits = section_likelihoods(state.mu_q, state.nu_q, state.L, state.Q)
    if priors is not None:
        priors = np.asarray(priors, dtype=float)
        if priors.shape != logits.shape:
            raise DimensionError(f"priors shape {priors.shape} != {logits.shape}")
        logits = logits + np.log(np.maximum(priors, 1e-300))
    mu_c = _unsections(_softmax(logits))
    state.mu_c = mu_c
    state.nu_c = _clip_var(mu_c * (1.0 - mu_c))
    return state


def damp_estimates(state: DetectorState, prev_h, prev_nu_h, prev_c, factor: float) -> DetectorState:
    """Blend fresh channel / support estimates with the previous ones.

    Convex blending keeps every section summing to one; ``nu_c`` is
    recomputed from the blended means.
    """
    if factor >= 1.0:
        return state
    state.mu_h = factor * state.mu_h + (1.0 - factor) * prev_h
    state.nu_h = _clip_var(factor * state.nu_h + (1.0 - factor) * prev_nu_h)
    state.mu_c = factor * state.mu_c + (1.0 - factor) * prev_c
    state.nu_c = _clip_var(state.mu_c * (1.0 - state.mu_c))
    return state


def _check_finite(state: DetectorState, it: int):
    for name in ("mu_x", "mu_z", "theta", "mu_r", "mu_q", "mu_h", "mu_c", "mu_p"):
        if not np.all(np.isfinite(getattr(state, name))):
            raise NumericalError(f"non-finite values in {name}", iteration=it)
    for name, v in state.variances().items():
        if not np.all(np.isfinite(v)):
            raise NumericalError(f"non-finite variance {name}", iteration=it)


def run(Y, A: Dictionary, config: SystemConfig, priors=None, K_current: int | None = None,
        rng: RngStream | None = None, monitor=None) -> DetectorOutput:
    """Iterate plug-in -> affine -> bilinear -> MMSE until converged or capped.

    Stops after ``config.t_max_bigamp`` iterations or once the relative
    change of ``mu_x`` drops below ``config.tol_stop``. Returned
    ``posteriors`` are the detector's extrinsic section beliefs
    (likelihood only, prior excluded), i.e. the message handed to the
    outer decoder. ``monitor(state, stage)`` is called after every step
    when given.
    """
    K = config.K_active if K_current is None else K_current
    scale = signal_scale(config)
    Yn = np.asarray(Y) / scale
    s2 = config.sigma2 / scale**2
    if Yn.shape != (A.T, config.M):
        raise DimensionError(f"Y must be T x M = {(A.T, config.M)}, got {Yn.shape}")
    if priors is None:
        priors = uniform_priors(K, config.L, config.Q)
    state = init(config, K, rng, Y=Yn, A=A, sigma2=s2)
    diagnostics = []
    converged = False
    d = config.damping
    for it in range(1, config.t_max_bigamp + 1):
        old_x = state.mu_x
        affine_half_step(state, A, Yn, s2, d)
        if monitor:
            monitor(state, "affine")
        bilinear_half_step(state, d)
        if monitor:
            monitor(state, "bilinear")
        prev = (state.mu_h, state.nu_h, state.mu_c)
        mmse_channel_step(state)
        mmse_support_step(state, priors)
        if it > 1:
            damp_estimates(state, *prev, config.estimate_damping)
        if monitor:
            monitor(state, "mmse")
        plugin_step(state)
        state.iter = it
        _check_finite(state, it)
        change = np.linalg.norm(state.mu_x - old_x) / max(np.linalg.norm(state.mu_x), 1e-30)
        mass = state.section_mass()
        diagnostics.append({
            "iter": it,
            "residual_norm": float(np.linalg.norm(state.mu_z)),
            "mean_nu_x": float(state.nu_x.mean()),
            "mean_nu_h": float(state.nu_h.mean()),
            "max_section_mass": float(mass.max()),
            "max_mass_error": float(np.abs(mass - 1.0).max()),
            "rel_change": float(change),
        })
        if change < config.tol_stop:
            converged = True
            break
    post = _softmax(section_likelihoods(state.mu_q, state.nu_q, config.L, config.Q))
    return DetectorOutput(post, state.mu_h.copy(), state.nu_h.copy(), state,
                          state.iter, converged, diagnostics)


def write_diagnostics(diagnostics, path) -> None:
    """Per-iteration CSV: iter, residual norm, mean nu_x, mean nu_h, max section mass."""
    cols = ["iter", "residual_norm", "mean_nu_x", "mean_nu_h", "max_section_mass"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in diagnostics:
            w.writerow([row[c] for c in cols])
