"""Speed-stream privacy transforms and the utility metrics they are scored by.

Three transforms degrade what a subscriber can learn from a speed stream
while preserving the statistic an honest consumer needs:

* ``shuffle``: buffer a window of W samples, emit a uniformly random
  permutation.  Multisets are preserved, so any order-insensitive statistic
  (like the count of samples above a threshold) is untouched.
* ``round_shuffle``: round each sample to the nearest multiple of p (half
  away from zero), then shuffle as above.
* ``noise``: add Z to each sample, Z drawn uniformly from the open interval
  (0, R_uniform).  Outputs strictly exceed inputs by less than R_uniform.
* ``identity``: pass-through baseline.

Utility is the count of samples strictly above a speed threshold
(``sample_count``), or the number of maximal above-threshold runs
(``episode_count``).  Degradation compares the statistic before and after
the transform, relative to the actual value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ALGS = ("identity", "shuffle", "round_shuffle", "noise")
ROUNDING_STEPS = (1.0, 5.0, 10.0)

MPH_TO_KMH = 1.609344
DEFAULT_THRESHOLD_KMH = 25 * MPH_TO_KMH  # 40.2336 km/h

UTILITY_MODES = ("sample_count", "episode_count")


class PrivacyError(ValueError):
    """Bad transform configuration or input."""


@dataclass(frozen=True)
class PrivacyConfig:
    """Which transform is active and its parameters."""

    alg: str = "identity"
    W: int = 1  # window size (samples) for the shuffling transforms
    p: float = 5.0  # rounding step
    R_uniform: float = 0.0  # additive noise range, same unit as the speeds
    seed: int = 0

    def __post_init__(self) -> None:
        if self.alg not in ALGS:
            raise PrivacyError(f"unknown transform {self.alg!r}")
        if not isinstance(self.W, int) or self.W < 1:
            raise PrivacyError("W must be an integer >= 1")
        if self.p not in ROUNDING_STEPS:
            raise PrivacyError(f"p must be one of {ROUNDING_STEPS}")
        if self.R_uniform < 0:
            raise PrivacyError("R_uniform must be >= 0")

    @classmethod
    def from_dict(cls, doc: dict) -> "PrivacyConfig":
        try:
            return cls(
                alg=doc.get("alg", "identity"),
                W=int(doc.get("W", 1)),
                p=float(doc.get("p", 5.0)),
                R_uniform=float(doc.get("R_uniform", 0.0)),
                seed=int(doc.get("seed", 0)),
            )
        except (TypeError, ValueError) as exc:
            raise PrivacyError(f"bad transform config: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "alg": self.alg,
            "W": self.W,
            "p": self.p,
            "R_uniform": self.R_uniform,
            "seed": self.seed,
        }


def round_to_step(v: float, step: float) -> float:
    """Nearest multiple of ``step``, ties rounded half away from zero."""
    return math.copysign(math.floor(abs(v) / step + 0.5) * step, v)


class SpeedTransform:
    """Streaming transform state for one subscriber.

    ``push`` may emit nothing (while a window fills), one sample (noise and
    identity modes), or a whole window.  ``flush`` releases a partial window
    at end of stream; the residue is still shuffled.
    """

    def __init__(self, config: PrivacyConfig):
        self.config = config
        self._rng = np.random.default_rng(config.seed)
        self._buffer: list[float] = []
        self.emitted = 0

    @property
    def buffered(self) -> int:
        return len(self._buffer)

    def _emit(self, values: list[float]) -> list[float]:
        self.emitted += len(values)
        return values

    def _shuffled(self, values: list[float]) -> list[float]:
        order = self._rng.permutation(len(values))
        return [values[i] for i in order]

    def push(self, v: float) -> list[float]:
        if v < 0:
            raise PrivacyError(f"negative speed {v}")
        cfg = self.config
        if cfg.alg == "identity":
            return self._emit([v])
        if cfg.alg == "noise":
            if cfg.R_uniform == 0:
                return self._emit([v])  # degenerate range: exact pass-through
            z = self._rng.uniform(0.0, cfg.R_uniform)
            while z == 0.0:  # the noise interval is open at both ends
                z = self._rng.uniform(0.0, cfg.R_uniform)
            return self._emit([v + z])
        if cfg.alg == "round_shuffle":
            v = round_to_step(v, cfg.p)
        self._buffer.append(v)
        if len(self._buffer) < cfg.W:
            return []
        out, self._buffer = self._buffer, []
        return self._emit(self._shuffled(out))

    def flush(self) -> list[float]:
        if not self._buffer:
            return []
        out, self._buffer = self._buffer, []
        return self._emit(self._shuffled(out))


def transform_trace(speeds: Sequence[float] | np.ndarray, config: PrivacyConfig) -> np.ndarray:
    """Run a whole speed stream through a fresh transform, flushing the tail."""
    state = SpeedTransform(config)
    out: list[float] = []
    for v in np.asarray(speeds, dtype=float):
        out.extend(state.push(float(v)))
    out.extend(state.flush())
    return np.array(out, dtype=float)


# --- utility metrics ---------------------------------------------------------


def utility(
    speeds: Sequence[float] | np.ndarray,
    threshold: float = DEFAULT_THRESHOLD_KMH,
    mode: str = "sample_count",
) -> int:
    """How often the stream exceeds ``threshold`` (strictly).

    ``sample_count`` counts samples; ``episode_count`` counts maximal runs of
    consecutive above-threshold samples.
    """
    arr = np.asarray(speeds, dtype=float)
    if arr.size == 0:
        raise PrivacyError("utility of an empty stream is undefined")
    above = arr > threshold
    if mode == "sample_count":
        return int(np.count_nonzero(above))
    if mode == "episode_count":
        starts = above & ~np.concatenate(([False], above[:-1]))
        return int(np.count_nonzero(starts))
    raise PrivacyError(f"unknown utility mode {mode!r}")


def utility_degradation(actual: int, transformed: int) -> float | None:
    """Relative utility error; None (not applicable) when actual is zero."""
    if actual == 0:
        return None
    return abs(transformed - actual) / actual


@dataclass(frozen=True)
class UtilityReport:
    mode: str
    threshold: float
    actual: int
    transformed: int
    degradation: float | None


def compare_utility(
    actual_speeds: Sequence[float] | np.ndarray,
    transformed_speeds: Sequence[float] | np.ndarray,
    threshold: float = DEFAULT_THRESHOLD_KMH,
    mode: str = "sample_count",
) -> UtilityReport:
    actual = utility(actual_speeds, threshold, mode)
    transformed = utility(transformed_speeds, threshold, mode)
    return UtilityReport(
        mode=mode,
        threshold=threshold,
        actual=actual,
        transformed=transformed,
        degradation=utility_degradation(actual, transformed),
    )
