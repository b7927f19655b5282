"""Monte-Carlo driver: trials, sweeps, threshold search and CSV persistence.

Random streams are addressed by ``(config.seed, stream_id)``:

* ``(0,)`` builds the shared dictionary,
* ``(1,)`` builds the outer code,
* ``(2, trial_id)`` drives everything inside one trial.

Every trial is therefore reproducible on its own, and results do not
depend on how trials are spread over worker processes.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

from . import dictionary as dictionary_mod
from .channel import draw_channels, false_alarms, pupe, synthesize
from .config import RngStream, SystemConfig, eb_n0_db, validate, with_eb_n0_db
from .errors import DimensionError, NumericalError
from .outer import regular_code
from .receiver import ReceiverResult, bits_to_int, reencode, run_receiver

__all__ = [
    "WORKERS_ENV",
    "CSV_HEADER",
    "AXES",
    "TARGET_PE",
    "TrialRecord",
    "PointResult",
    "SweepSpec",
    "SweepResult",
    "default_workers",
    "build_scenario",
    "draw_messages",
    "run_trial",
    "aggregate",
    "run_point",
    "run_sweep",
    "find_required_ebn0",
    "threshold_from_points",
    "record_dict",
    "write_csv",
    "read_csv",
]

WORKERS_ENV = "BISPARC_WORKERS"
TARGET_PE = 0.05
AXES = ("eb_n0_db", "M", "K")
CSV_HEADER = [
    "scenario_id", "axis_name", "axis_value", "eb_n0_db", "K", "M", "T", "L", "Q",
    "n_out", "trials", "pupe_mean", "pupe_ci95", "false_alarm_mean", "rounds_mean",
    "detector_iters_mean", "diverged_trials", "wall_time_s",
]


def default_workers() -> int:
    """Worker count from ``$BISPARC_WORKERS`` (1 when unset)."""
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise DimensionError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise DimensionError(f"{WORKERS_ENV} must be >= 1, got {n}")
    return n


# --- one trial ---------------------------------------------------------------

@dataclass
class TrialRecord:
    trial_id: int
    pupe: float
    false_alarms: int
    rounds: int
    detector_iters: int
    n_users: int
    diverged: bool = False
    decoded: tuple = ()
    trace: tuple = ()  # (round, decoded count, residual energy) per round


@lru_cache(maxsize=8)
def _scenario(seed: int, kind: str, T: int, N: int, n_out: int, B: int, max_bp_iters: int):
    A = dictionary_mod.build(kind, T, N, RngStream(seed, 0))
    code = regular_code(n_out, B, RngStream(seed, 1), max_bp_iters=max_bp_iters)
    return A, code


def build_scenario(config: SystemConfig):
    """Shared dictionary and outer code for ``config`` (cached per process)."""
    c = validate(config)
    return _scenario(c.seed, c.dictionary, c.T, c.N, c.outer_length, c.B, c.max_bp_iters)


def draw_messages(K: int, B: int, rng: RngStream, distinct: bool = True) -> list:
    """``K`` uniformly random ``B``-bit messages (pairwise distinct unless told otherwise)."""
    if distinct and K > 2**B:
        raise DimensionError(f"cannot draw {K} distinct {B}-bit messages")
    out: list[int] = []
    while len(out) < K:
        msg = bits_to_int(rng.bits(B))
        if distinct and msg in out:
            continue
        out.append(msg)
    return out


def run_trial(config: SystemConfig, trial_id: int, scenario=None,
              keep_result: bool = False) -> TrialRecord | tuple[TrialRecord, ReceiverResult]:
    """Draw messages, channels and noise, run the receiver, score the list.

    A detector divergence counts as a total loss for the trial (PUPE 1)
    and sets ``diverged``.
    """
    c = validate(config)
    A, code = scenario if scenario is not None else build_scenario(c)
    rng = RngStream(c.seed, (2, int(trial_id)))
    messages = draw_messages(c.K_active, c.B, rng.child(0), distinct=not c.allow_collisions)
    supports = [reencode(msg, code, c) for msg in messages]
    H = draw_channels(c.K_active, c.M, rng.child(1))
    obs = synthesize(A, supports, H, c.sigma2, c.P, rng.child(2))
    try:
        result = run_receiver(obs.Y, A, c, code, rng=rng.child(3))
    except NumericalError as exc:  # pragma: no cover - run_receiver records aborts itself
        result = ReceiverResult([], [], 0, [], [], abort_reason=str(exc))
    diverged = result.abort_reason is not None
    truth = set(messages)
    if not truth:
        score = 0.0
    else:
        score = 1.0 if diverged else pupe(truth, result.decoded)
    record = TrialRecord(
        trial_id=int(trial_id),
        pupe=score,
        false_alarms=false_alarms(truth, result.decoded),
        rounds=result.rounds,
        detector_iters=result.detector_iters,
        n_users=len(truth),
        diverged=diverged,
        decoded=tuple(result.decoded),
        trace=tuple((t.round, t.decoded, t.residual_energy) for t in result.trace),
    )
    return (record, result) if keep_result else record


# --- aggregation -------------------------------------------------------------

@dataclass
class PointResult:
    config: SystemConfig
    axis_name: str
    axis_value: float
    trials: int
    pupe_mean: float
    pupe_ci95: float
    false_alarm_mean: float
    rounds_mean: float
    detector_iters_mean: float
    diverged_trials: int
    wall_time_s: float = 0.0
    records: list = field(default_factory=list, repr=False)

    @property
    def meets_target(self) -> bool:
        return self.pupe_mean <= TARGET_PE


def aggregate(records, config: SystemConfig, axis_name: str = "eb_n0_db",
              axis_value: float | None = None) -> PointResult:
    """Fold trial records into one point (order of ``records`` is irrelevant).

    The confidence half-width is the normal approximation over per-user
    error indicators.
    """
    records = sorted(records, key=lambda r: r.trial_id)
    if not records:
        raise DimensionError("cannot aggregate zero trials")
    n = len(records)
    pupe_mean = math.fsum(r.pupe for r in records) / n
    users = sum(r.n_users for r in records)
    errors = math.fsum(r.pupe * r.n_users for r in records)
    p = errors / users if users else 0.0
    ci = 1.96 * math.sqrt(p * (1.0 - p) / users) if users else 0.0
    if axis_value is None:
        axis_value = eb_n0_db(config)
    return PointResult(
        config=config,
        axis_name=axis_name,
        axis_value=float(axis_value),
        trials=n,
        pupe_mean=pupe_mean,
        pupe_ci95=ci,
        false_alarm_mean=math.fsum(r.false_alarms for r in records) / n,
        rounds_mean=math.fsum(r.rounds for r in records) / n,
        detector_iters_mean=math.fsum(r.detector_iters for r in records) / n,
        diverged_trials=sum(r.diverged for r in records),
        records=records,
    )


def _trial_batch(config: SystemConfig, ids):
    return [run_trial(config, i) for i in ids]


def _run_trials(config: SystemConfig, trials: int, workers: int) -> list:
    ids = list(range(trials))
    if workers <= 1 or trials <= 1:
        scenario = build_scenario(config)
        return [run_trial(config, i, scenario) for i in ids]
    chunks = [ids[w::workers] for w in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(_trial_batch, [config] * len(chunks), chunks)
        return [rec for part in parts for rec in part]


def run_point(config: SystemConfig, trials: int | None = None, workers: int | None = None,
              axis_name: str = "eb_n0_db", axis_value: float | None = None,
              timing: bool = True) -> PointResult:
    """Run ``trials`` trials of one configuration and aggregate them."""
    c = validate(config)
    trials = c.trials if trials is None else int(trials)
    if trials < 1:
        raise DimensionError("trials must be >= 1")
    workers = default_workers() if workers is None else int(workers)
    start = time.perf_counter()
    records = _run_trials(c, trials, workers)
    point = aggregate(records, c, axis_name, axis_value)
    point.wall_time_s = time.perf_counter() - start if timing else 0.0
    return point


# --- sweeps ------------------------------------------------------------------

@dataclass
class SweepSpec:
    base: SystemConfig
    axis: str
    values: tuple
    trials: int | None = None
    out: str | Path | None = None
    scenario_id: str = "custom"

    def __post_init__(self):
        if self.axis not in AXES:
            raise DimensionError(f"axis must be one of {AXES}, got {self.axis!r}")
        self.values = tuple(float(v) for v in self.values)
        if not self.values:
            raise DimensionError("sweep axis must contain at least one value")
        if self.trials is not None and self.trials < 1:
            raise DimensionError("trials must be >= 1")

    def config_at(self, value: float) -> SystemConfig:
        if self.axis == "eb_n0_db":
            return validate(with_eb_n0_db(self.base, value))
        if not float(value).is_integer():
            raise DimensionError(f"axis {self.axis} needs integer values, got {value}")
        key = "K_active" if self.axis == "K" else "M"
        return validate(self.base.replace(**{key: int(value)}))


@dataclass
class SweepResult:
    spec: SweepSpec
    points: list

    @property
    def pupe(self) -> list:
        return [p.pupe_mean for p in self.points]


def _row(point: PointResult, scenario_id: str) -> dict:
    c = point.config
    return {
        "scenario_id": scenario_id,
        "axis_name": point.axis_name,
        "axis_value": point.axis_value,
        "eb_n0_db": eb_n0_db(c),
        "K": c.K_active,
        "M": c.M,
        "T": c.T,
        "L": c.L,
        "Q": c.Q,
        "n_out": c.outer_length,
        "trials": point.trials,
        "pupe_mean": point.pupe_mean,
        "pupe_ci95": point.pupe_ci95,
        "false_alarm_mean": point.false_alarm_mean,
        "rounds_mean": point.rounds_mean,
        "detector_iters_mean": point.detector_iters_mean,
        "diverged_trials": point.diverged_trials,
        "wall_time_s": point.wall_time_s,
    }


def write_csv(points, path, scenario_id: str = "custom") -> None:
    """Write points with the fixed header; floats use ``repr`` so they round-trip."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for p in points:
            row = _row(p, scenario_id)
            w.writerow([repr(v) if isinstance(v, float) else v for v in (row[k] for k in CSV_HEADER)])


_INT_COLS = {"K", "M", "T", "L", "Q", "n_out", "trials", "diverged_trials"}
_STR_COLS = {"scenario_id", "axis_name"}


def read_csv(path) -> list[dict]:
    """Load a sweep CSV back into typed dicts."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise DimensionError(f"unexpected CSV header {header}")
        rows = []
        for raw in reader:
            row = {}
            for k, v in zip(header, raw):
                row[k] = v if k in _STR_COLS else int(v) if k in _INT_COLS else float(v)
            rows.append(row)
    return rows


def run_sweep(spec: SweepSpec, workers: int | None = None, timing: bool = True,
              progress=None) -> SweepResult:
    """Run every axis point in order; the CSV is rewritten after each point."""
    points = []
    for value in spec.values:
        cfg = spec.config_at(value)
        point = run_point(cfg, spec.trials, workers, spec.axis, value, timing)
        points.append(point)
        if spec.out is not None:
            try:
                write_csv(points, spec.out, spec.scenario_id)
            except OSError as exc:
                raise OSError(f"cannot write {spec.out}: {exc}") from exc
        if progress:
            progress(point)
    return SweepResult(spec, points)


def find_required_ebn0(config: SystemConfig, target_pe: float = TARGET_PE, grid=(),
                       trials: int | None = None, workers: int | None = None,
                       out=None, timing: bool = True, scenario_id: str = "custom"):
    """Smallest grid Eb/N0 (dB) whose mean PUPE is at most ``target_pe``.

    Returns ``(threshold, sweep)`` where ``threshold`` is ``None`` when no
    grid point reaches the target. Every grid point is simulated so the
    returned sweep doubles as the PUPE curve.
    """
    grid = tuple(float(g) for g in grid)
    if not grid:
        raise DimensionError("grid must be non-empty")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise DimensionError("grid must be sorted ascending")
    sweep = run_sweep(SweepSpec(config, "eb_n0_db", grid, trials, out, scenario_id), workers, timing)
    return threshold_from_points(sweep.points, target_pe), sweep


def threshold_from_points(points, target_pe: float = TARGET_PE):
    for p in points:
        if p.pupe_mean <= target_pe:
            return p.axis_value
    return None


def record_dict(record: TrialRecord) -> dict:
    return asdict(record)
