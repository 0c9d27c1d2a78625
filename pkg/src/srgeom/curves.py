"""Sampled horizontal curves with diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Segment", "CurveDiagnostics", "HorizontalCurve", "simpson_length"]


@dataclass(frozen=True)
class Segment:
    control: np.ndarray        # coefficients over the local steering frame
    duration: float


@dataclass
class CurveDiagnostics:
    max_phi_drift: float | None = None
    max_horizontality_residual: float | None = None
    endpoint_error: float | None = None
    max_energy_drift: float | None = None

    def as_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True)
class HorizontalCurve:
    """Dense samples of a piecewise curve plus its control schedule.

    ``times``/``points``/``speeds`` are parallel arrays; ``segment_breaks``
    holds the sample index at which each segment starts (plus a final
    entry equal to ``len(times) - 1``), so finite-difference stencils can
    avoid crossing control discontinuities.
    """

    times: np.ndarray
    points: np.ndarray
    speeds: np.ndarray
    segments: tuple = ()
    segment_breaks: tuple = ()
    segment_speeds: tuple = ()     # constant per-segment speed, when known
    diagnostics: CurveDiagnostics = field(default_factory=CurveDiagnostics)

    def __post_init__(self):
        if len(self.times) != len(self.points) or len(self.times) != len(self.speeds):
            raise ValueError("times/points/speeds must be parallel")
        if len(self.times) >= 2 and np.any(np.diff(self.times) < 0):
            raise ValueError("samples must be time-ordered")

    @property
    def start(self):
        return self.points[0]

    @property
    def end(self):
        return self.points[-1]

    @property
    def length(self):
        """Arc length: integral of the frame speed, composite Simpson."""
        return simpson_length(self.times, self.speeds, self.segment_breaks,
                              self.segment_speeds)

    def segment_slices(self):
        breaks = list(self.segment_breaks)
        if not breaks:
            yield slice(0, len(self.times))
            return
        for a, b in zip(breaks[:-1], breaks[1:]):
            yield slice(a, b + 1)


def simpson_length(times, speeds, segment_breaks=(), segment_speeds=()):
    """Integrate speeds over times with composite Simpson per segment.

    Samples within a segment are uniformly spaced; an odd trailing
    interval falls back to the trapezoid rule.  A sample shared by two
    segments carries the speed of the earlier one, so when the constant
    per-segment speeds are supplied each slice's first value is replaced
    by its own segment's speed.
    """
    times = np.asarray(times, dtype=float)
    speeds = np.asarray(speeds, dtype=float)
    if len(times) < 2:
        return 0.0
    breaks = list(segment_breaks) or [0, len(times) - 1]
    total = 0.0
    for j, (a, b) in enumerate(zip(breaks[:-1], breaks[1:])):
        t = times[a:b + 1]
        s = speeds[a:b + 1].copy()
        if j < len(segment_speeds):
            s[0] = segment_speeds[j]
        n = len(t) - 1
        if n <= 0:
            continue
        h = (t[-1] - t[0]) / n
        i = 0
        while n - i >= 2:
            total += h / 3.0 * (s[i] + 4.0 * s[i + 1] + s[i + 2])
            i += 2
        if n - i == 1:
            total += h / 2.0 * (s[i] + s[i + 1])
    return float(total)
