"""Scenario configuration, dimension bookkeeping and seeded random streams.

All powers and variances are stored linear. Decibels only show up in
:func:`eb_n0_db` / :func:`with_eb_n0_db` and at the CLI boundary.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import DimensionError

__all__ = [
    "SystemConfig",
    "RngStream",
    "validate",
    "eb_n0_db",
    "with_eb_n0_db",
    "sigma2_for_eb_n0",
    "load_config",
    "dump_config",
    "parse_config_text",
    "ds1_config",
    "DS1_GRID",
]

DICTIONARY_KINDS = ("gaussian", "subsampled_dft")


@dataclass(frozen=True)
class SystemConfig:
    """One simulation scenario.

    ``m`` and ``N`` are derived; leave them as ``None`` and call
    :func:`validate` to populate them. ``n_out`` defaults to ``L * m``
    (no padding) and the outer code carries ``k_out = B`` message bits.
    """

    K_active: int = 8
    M: int = 8
    T: int = 256
    B: int = 16
    L: int = 8
    Q: int = 16
    P: float = 1.0
    sigma2: float = 1.0
    t_max_bigamp: int = 50
    t_max_turbo: int = 8
    damping: float = 0.7
    seed: int = 0
    trials: int = 100

    # receiver / detector knobs
    n_out: int | None = None
    dictionary: str = "gaussian"
    estimate_damping: float = 0.3
    t_max_inner: int = 2
    max_bp_iters: int = 50
    tol_stop: float = 1e-6
    init_perturbation: float = 1e-3
    slot_factor: float = 1.0
    ls_refine: bool = False
    allow_collisions: bool = False

    # derived
    m: int | None = None
    N: int | None = None

    @property
    def codeword_bits(self) -> int:
        """Bits carried by the SPARC sections, ``L * log2(Q)``."""
        return self.L * int(round(math.log2(self.Q)))

    @property
    def outer_length(self) -> int:
        return self.n_out if self.n_out is not None else self.codeword_bits

    @property
    def ebn0_factor(self) -> float:
        """Linear ``P*T/(B*sigma2)``."""
        return self.P * self.T / (self.B * self.sigma2)

    def replace(self, **changes) -> "SystemConfig":
        # derived fields are recomputed, so drop them when dimensions move
        if {"L", "Q"} & changes.keys():
            changes.setdefault("m", None)
            changes.setdefault("N", None)
        return dataclasses.replace(self, **changes)


def _is_pow2(x: int) -> bool:
    return x > 0 and (x & (x - 1)) == 0


def validate(config: SystemConfig) -> SystemConfig:
    """Check invariants and fill in ``m`` and ``N``.

    Raises :class:`DimensionError` naming the violated constraint.
    Idempotent.
    """
    c = config
    for name in ("K_active", "M", "T", "B", "L", "Q"):
        v = getattr(c, name)
        if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
            raise DimensionError(f"{name} must be an integer, got {v!r}")
    if c.M < 1 or c.T < 1 or c.L < 1 or c.B < 1:
        raise DimensionError("M, T, L and B must be >= 1")
    if c.K_active < 0:
        raise DimensionError("K_active must be >= 0")
    if not _is_pow2(c.Q) or c.Q < 2:
        raise DimensionError(f"Q must be a power of two >= 2 (Q = 2^m), got Q={c.Q}")
    m = c.Q.bit_length() - 1
    N = c.L * c.Q
    if c.m is not None and c.m != m:
        raise DimensionError(f"m must equal log2(Q)={m}, got m={c.m}")
    if c.N is not None and c.N != N:
        raise DimensionError(f"N must equal L*Q={N}, got N={c.N}")
    n_out = c.outer_length
    if n_out > c.L * m:
        raise DimensionError(f"outer codeword length n_out={n_out} exceeds L*m={c.L * m}")
    if c.B > n_out:
        raise DimensionError(f"message bits B={c.B} must not exceed n_out={n_out}")
    if not c.P > 0:
        raise DimensionError(f"P must be > 0, got {c.P}")
    if not c.sigma2 > 0:
        raise DimensionError(f"sigma2 must be > 0, got {c.sigma2}")
    if not 0 < c.damping <= 1:
        raise DimensionError(f"damping must lie in (0, 1], got {c.damping}")
    if not 0 < c.estimate_damping <= 1:
        raise DimensionError(f"estimate_damping must lie in (0, 1], got {c.estimate_damping}")
    if c.dictionary not in DICTIONARY_KINDS:
        raise DimensionError(f"dictionary must be one of {DICTIONARY_KINDS}, got {c.dictionary!r}")
    if c.dictionary == "subsampled_dft" and c.T > N:
        raise DimensionError(f"subsampled_dft needs T <= N, got T={c.T}, N={N}")
    if c.t_max_bigamp < 1 or c.t_max_turbo < 0 or c.t_max_inner < 1:
        raise DimensionError("iteration caps must be positive (t_max_turbo may be 0)")
    if c.trials < 1:
        raise DimensionError("trials must be >= 1")
    if c.slot_factor < 1:
        raise DimensionError("slot_factor must be >= 1")
    if not 0 <= c.seed < 2**64:
        raise DimensionError("seed must fit in 64 bits")
    return dataclasses.replace(c, m=m, N=N)


def eb_n0_db(config: SystemConfig) -> float:
    """``10*log10(P*T/(B*sigma2))``."""
    return 10.0 * math.log10(config.ebn0_factor)


def sigma2_for_eb_n0(config: SystemConfig, ebn0_db: float) -> float:
    return config.P * config.T / (config.B * 10.0 ** (ebn0_db / 10.0))


def with_eb_n0_db(config: SystemConfig, ebn0_db: float) -> SystemConfig:
    """Return a copy whose noise variance realises the requested Eb/N0."""
    return config.replace(sigma2=sigma2_for_eb_n0(config, ebn0_db))


class RngStream:
    """Deterministic random stream addressed by ``(seed, stream_id)``.

    Backed by :class:`numpy.random.SeedSequence` spawn keys, so streams
    with distinct ids are statistically independent and a given pair
    always yields the same draws regardless of which process asks.
    """

    def __init__(self, seed: int, stream_id: int | tuple[int, ...] = 0):
        if isinstance(stream_id, (int, np.integer)):
            stream_id = (int(stream_id),)
        self.seed = int(seed)
        self.stream_id = tuple(int(s) for s in stream_id)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.stream_id))
        )

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def child(self, *sub: int) -> "RngStream":
        """Independent substream nested under this one."""
        return RngStream(self.seed, self.stream_id + tuple(sub))

    # thin pass-throughs used throughout the package
    def standard_normal(self, size):
        return self._gen.standard_normal(size)

    def complex_normal(self, size, var: float = 1.0) -> np.ndarray:
        """i.i.d. circularly-symmetric CN(0, var) draws."""
        scale = math.sqrt(var / 2.0)
        re = self._gen.standard_normal(size)
        im = self._gen.standard_normal(size)
        return scale * (re + 1j * im)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def bits(self, size) -> np.ndarray:
        return self._gen.integers(0, 2, size=size, dtype=np.uint8)

    def choice(self, a, size=None, replace=True):
        return self._gen.choice(a, size=size, replace=replace)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)


# --- key = value configuration files ---------------------------------------

_FIELD_TYPES = {f.name: f.type for f in fields(SystemConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    if raw.lower() in ("none", "null", ""):
        if "None" in str(kind):
            return None
        raise DimensionError(f"{name} may not be empty")
    if "bool" in str(kind):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise DimensionError(f"{name}: cannot parse boolean {raw!r}")
    if "int" in str(kind):
        try:
            return int(raw, 0)
        except ValueError:
            value = float(raw)
            if not value.is_integer():
                raise DimensionError(f"{name} must be an integer, got {raw!r}") from None
            return int(value)
    if "float" in str(kind):
        return float(raw)
    return raw


def parse_config_text(text: str, base: SystemConfig | None = None) -> SystemConfig:
    """Parse ``key = value`` lines (``#`` comments allowed) into a config.

    Unknown keys raise :class:`DimensionError`. ``eb_n0_db`` is accepted
    as a convenience key and converted to ``sigma2`` after all other
    keys are applied.
    """
    values = {}
    ebn0 = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DimensionError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key == "eb_n0_db":
            ebn0 = float(raw)
            continue
        if key not in _FIELD_TYPES or key in ("m", "N"):
            if key in ("m", "N"):
                values[key] = int(raw)
                continue
            raise DimensionError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    config = dataclasses.replace(base or SystemConfig(), **values)
    if ebn0 is not None:
        config = with_eb_n0_db(config, ebn0)
    return config


def load_config(path: str | Path, base: SystemConfig | None = None) -> SystemConfig:
    return parse_config_text(Path(path).read_text(), base)


def dump_config(config: SystemConfig) -> str:
    lines = []
    for f in fields(SystemConfig):
        if f.name in ("m", "N"):
            continue
        v = getattr(config, f.name)
        lines.append(f"{f.name} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"


DS1_GRID = (18.0, 20.4, 22.8, 25.2, 27.6, 30.0)


def ds1_config(**overrides) -> SystemConfig:
    """Desk scenario DS-1: K=8, M=8, T=256, L=8, Q=16 with a (32, 16) outer code.

    Runs the detector for up to 200 iterations and re-fits SIC channels by
    least squares; both settings matter at this small size.
    """
    base = SystemConfig(
        K_active=8, M=8, T=256, B=16, L=8, Q=16, n_out=32,
        P=1.0, sigma2=1.0, trials=200, seed=2024,
        t_max_bigamp=200, ls_refine=True,
    )
    return validate(dataclasses.replace(base, **overrides))
