"""Arrival-time response, coincidence windows, ISI and TCSPC histograms.

A detection from clock period k has timestamp ``k*T + t`` with ``t`` drawn
from ``Normal(center, sigma)``.  Mass of ``t`` outside ``[0, T]`` lands in a
neighbouring period and is scored against that period's bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import ndtr


@dataclass(frozen=True)
class TimingResponse:
    sigma: float  # ps
    center: float  # ps within the period
    period: float  # ps

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0.0 <= self.center <= self.period:
            raise ValueError("center must lie within the period")

    @property
    def reach(self) -> int:
        """Number of neighbouring periods on each side holding non-negligible mass."""
        return max(1, math.ceil((max(self.center, self.period - self.center) + 10 * self.sigma)
                                / self.period))


@dataclass(frozen=True)
class Histogram:
    bin_width: float  # ps
    counts: np.ndarray
    period: float

    @property
    def bin_starts(self) -> np.ndarray:
        return np.arange(len(self.counts)) * self.bin_width

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class WindowChoice:
    offset: float
    width: float
    objective: str
    value: float
    degenerate: bool = False


def _interval_mass(response: TimingResponse, lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if response.sigma == 0:
        return ((lo <= response.center) & (response.center <= hi)).astype(float)
    s = response.sigma
    return ndtr((hi - response.center) / s) - ndtr((lo - response.center) / s)


def window_capture(response: TimingResponse, window_offset: float, window_width: float) -> float:
    """Probability that an arrival from this period falls in its own window."""
    return float(_interval_mass(response, window_offset, window_offset + window_width))


def neighbour_capture(response: TimingResponse, window_offset, window_width):
    """Probability that an arrival lands inside some *other* period's window.

    Vectorised over offset/width arrays.  For the full-period window this
    equals :func:`isi_leak_fraction`.
    """
    total = 0.0
    for j in range(1, response.reach + 1):
        for shift in (j * response.period, -j * response.period):
            lo = np.asarray(window_offset) + shift
            total = total + _interval_mass(response, lo, lo + window_width)
    return total


def isi_leak_fraction(response: TimingResponse) -> float:
    if response.sigma == 0:
        return 0.0
    s = response.sigma
    return float(ndtr(-response.center / s) + ndtr(-(response.period - response.center) / s))


def qber_int(leak: float) -> float:
    """ISI error contribution; a leaked count hits an uncorrelated bit, wrong half the time."""
    if not 0.0 <= leak <= 1.0:
        raise ValueError("leak must lie in [0, 1]")
    return 0.5 * leak


def synth_histogram(response: TimingResponse, signal_rate: float, dark_rate_total: float,
                    clock, duration: float, bin_width: float, seed: int) -> Histogram:
    """Poisson-sampled TCSPC histogram over one clock period.

    Expected content of a bin is the Gaussian signal mass in that bin plus a
    uniform dark floor.  ``clock`` only needs a ``period`` attribute (ps).
    """
    if duration <= 0:
        raise ValueError("duration must be > 0")
    if signal_rate < 0 or dark_rate_total < 0:
        raise ValueError("rates must be >= 0")
    if bin_width <= 0:
        raise ValueError("bin_width must be > 0")
    expected = expected_histogram(response, signal_rate, dark_rate_total, clock, duration,
                                  bin_width)
    rng = np.random.default_rng(seed)
    return Histogram(bin_width=bin_width, counts=rng.poisson(expected), period=clock.period)


def expected_histogram(response: TimingResponse, signal_rate: float, dark_rate_total: float,
                       clock, duration: float, bin_width: float) -> np.ndarray:
    """Noise-free bin means matching :func:`synth_histogram`."""
    period = clock.period
    nbins = max(1, int(round(period / bin_width)))
    edges = np.minimum(np.arange(nbins + 1) * bin_width, period)
    edges[-1] = period
    return (signal_rate * duration * _interval_mass(response, edges[:-1], edges[1:])
            + dark_rate_total * duration * np.diff(edges) / period)


def histogram_csv(hist: Histogram) -> str:
    lines = ["bin_start_ps,counts"]
    lines += [f"{start:.6f},{int(c)}" for start, c in zip(hist.bin_starts, hist.counts)]
    return "\n".join(lines) + "\n"


def window_grid(period: float, step: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """All (offset, width) pairs on a ``step`` grid that fit inside the period.

    The exact full-period window is appended, since ``period`` is rarely a
    whole number of steps.
    """
    widths = np.arange(0.0, period + 1e-9, step)
    offsets = np.arange(0.0, period + 1e-9, step)
    o, w = np.meshgrid(offsets, widths)
    ok = o + w <= period + 1e-9
    o, w = o[ok], w[ok]
    if not np.isclose(widths[-1], period, rtol=0, atol=1e-9):
        o = np.append(o, 0.0)
        w = np.append(w, period)
    return o, w


def window_metrics(response: TimingResponse, signal_rate: float, dark_rate_total: float,
                   offsets, widths, extinction: float = math.inf):
    """Accepted rate and QBER for each candidate window.

    ``signal_rate`` counts every signal click (correct and leaked-analyzer)
    before gating.
    """
    eps = 10.0 ** (-extinction / 10.0)
    e_opt = eps / (1.0 + eps)
    own = signal_rate * _interval_mass(response, offsets, np.asarray(offsets) + widths)
    leaked = signal_rate * neighbour_capture(response, offsets, widths)
    dark = dark_rate_total * np.asarray(widths) / response.period
    rate = own + leaked + dark
    errors = own * e_opt + 0.5 * leaked + 0.5 * dark
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(rate > 0, errors / np.where(rate > 0, rate, 1.0), 0.0)
    return rate, q


def optimize_window(response: TimingResponse, signal_rate: float, dark_rate_total: float,
                    clock, objective: Literal["max_nbr", "min_qber"] = "max_nbr", *,
                    extinction: float = math.inf, i_ae: float = 0.29,
                    step: float = 1.0) -> WindowChoice:
    """Exhaustive grid search for the best coincidence window.

    Ties (within 1e-12 relative) go to the narrower window, then the
    smaller offset.  A zero-width result is flagged ``degenerate``.
    """
    from .analysis import secrecy_efficiency

    if signal_rate < 0 or dark_rate_total < 0:
        raise ValueError("rates must be >= 0")
    offsets, widths = window_grid(clock.period, step)
    rate, q = window_metrics(response, signal_rate, dark_rate_total, offsets, widths, extinction)
    if objective == "max_nbr":
        score = np.maximum(secrecy_efficiency(np.minimum(q, 0.5), i_ae), 0.0) * rate
    elif objective == "min_qber":
        score = np.where(rate > 0, -q, -np.inf)
    else:
        raise ValueError(f"unknown objective {objective!r}")
    best = score.max()
    if not np.isfinite(best):
        return WindowChoice(0.0, 0.0, objective, 0.0, degenerate=True)
    tied = np.flatnonzero(score >= best - 1e-12 * abs(best))
    pick = tied[np.lexsort((offsets[tied], widths[tied]))[0]]
    value = float(score[pick]) if objective == "max_nbr" else float(q[pick])
    return WindowChoice(float(offsets[pick]), float(widths[pick]), objective, value,
                        degenerate=bool(widths[pick] == 0 or rate[pick] == 0))
