"""QBER budget, secrecy efficiency, net bit rate and distance studies.

The QBER is split by cause into optical (analyzer extinction), dark-count
and intersymbol-interference terms.  Each term is that cause's error rate
divided by the common accepted-event rate, so the three add up to the
overall error fraction exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import xlogy

from .model import (
    SystemConfig,
    arrival_probability,
    timing_response,
    with_distance,
)
from .protocol import conclusive_probability
from .timing import neighbour_capture, qber_int, window_capture

EC_COST = 3.5  # error-correction bits disclosed per error, taken as given
LN2 = math.log(2.0)
HORIZON_KM = 1000.0


@dataclass(frozen=True)
class QberBreakdown:
    qber_opt: float
    qber_det: float
    qber_int: float
    total: float
    degenerate: bool = False

    @classmethod
    def compose(cls, qber_opt: float, qber_det: float, qber_int: float,
                degenerate: bool = False) -> "QberBreakdown":
        total = qber_opt + qber_det + qber_int
        if total > 1.0:
            raise ValueError(f"QBER terms sum to {total} > 1")
        return cls(qber_opt, qber_det, qber_int, total, degenerate)


@dataclass(frozen=True)
class SecrecyReport:
    qber: float
    secrecy_efficiency: float
    raw_rate: float
    net_bit_rate: float
    secure: bool


@dataclass(frozen=True)
class DetectorRates:
    """Per-detector event rates (Hz) after dead-time throttling."""

    own_correct: float
    own_optical: float
    leaked: float
    dark: float
    throttle: float
    true_rate: float

    @property
    def accepted(self) -> float:
        return self.own_correct + self.own_optical + self.leaked + self.dark


def detector_rates(config: SystemConfig) -> tuple[DetectorRates, DetectorRates]:
    """Analytic event budget for both detectors.

    Each detector is the correct one for half of Alice's bits and receives
    analyzer leakage for the other half.  Dead time throttles every event on
    a detector by the same factor, whatever its cause.
    """
    f = config.clock.frequency
    mu = config.source.mean_photon_number
    eps = config.receiver.leakage
    per_pulse = mu * arrival_probability(config) * conclusive_probability(
        config.receiver.state_separation_angle)
    offset, width = config.window_offset, config.window_width
    out = []
    for i, det in enumerate(config.detectors):
        resp = timing_response(config, i)
        cap = window_capture(resp, offset, width)
        leak = float(neighbour_capture(resp, offset, width))
        correct = 0.5 * f * per_pulse * det.efficiency
        optical = correct * eps
        true_rate = correct + optical + det.dark_rate
        thr = 1.0 / (1.0 + true_rate * det.dead_time * 1e-12)
        out.append(DetectorRates(
            own_correct=thr * correct * cap,
            own_optical=thr * optical * cap,
            leaked=thr * (correct + optical) * leak,
            dark=thr * det.dark_rate * config.gated_fraction,
            throttle=thr,
            true_rate=true_rate,
        ))
    return out[0], out[1]


def qber_opt(extinction: float) -> float:
    """Analyzer-leakage QBER, eps/(1+eps) with eps = 10^(-extinction/10)."""
    if extinction < 0:
        raise ValueError("extinction must be >= 0 dB")
    eps = 10.0 ** (-extinction / 10.0)
    return eps / (1.0 + eps)


def qber_det(signal_rate: float, accepted_dark_rate_total: float) -> float:
    """Dark-count QBER; half of the accepted darks are errors.

    Returns 0 when both rates are zero (no events at all); callers that need
    to tell that apart check the rates themselves.
    """
    s, d = signal_rate, accepted_dark_rate_total
    if s < 0 or d < 0:
        raise ValueError("rates must be >= 0")
    if s + d == 0:
        return 0.0
    return 0.5 * d / (s + d)


def total_qber(config: SystemConfig) -> QberBreakdown:
    rates = detector_rates(config)
    total = sum(r.accepted for r in rates)
    if total == 0:
        return QberBreakdown.compose(0.0, 0.0, 0.0, degenerate=True)
    own = sum(r.own_correct + r.own_optical for r in rates)
    dark = sum(r.dark for r in rates)
    leaked = sum(r.leaked for r in rates)
    return QberBreakdown.compose(
        qber_opt(config.receiver.extinction) * own / total,
        qber_det(total - dark, dark),
        qber_int(leaked / total),
    )


def accepted_rate(config: SystemConfig) -> float:
    """Rate of events accepted into windows at the detectors (the raw sifted rate)."""
    return sum(r.accepted for r in detector_rates(config))


def secrecy_efficiency(q, i_ae: float):
    """Fraction of sifted bits kept after error correction and privacy amplification.

    ``1 + Q log2 Q - 3.5 Q - I_AE (1 - (1-Q) log2(1-Q) - 3.5 Q)``; accepts
    scalars or arrays, with ``0 log 0 = 0``.
    """
    q_arr = np.asarray(q, dtype=float)
    if np.any(q_arr < 0) or np.any(q_arr >= 1):
        raise ValueError("QBER must lie in [0, 1)")
    if not 0.0 <= i_ae <= 1.0:
        raise ValueError("i_ae must lie in [0, 1]")
    qlog = xlogy(q_arr, q_arr) / LN2
    rlog = xlogy(1.0 - q_arr, 1.0 - q_arr) / LN2
    se = 1.0 + qlog - EC_COST * q_arr - i_ae * (1.0 - rlog - EC_COST * q_arr)
    return float(se) if se.ndim == 0 else se


def security_threshold(i_ae: float, tol: float = 1e-6) -> float:
    """Smallest QBER at which the secrecy efficiency reaches zero (bisection)."""
    if not 0.0 <= i_ae < 1.0:
        raise ValueError("i_ae must lie in [0, 1)")
    lo, hi = 1e-6, 0.5
    if secrecy_efficiency(lo, i_ae) <= 0:
        # Eve's information leaves almost no margin; the root sits below 1e-6
        lo = 0.0
    if secrecy_efficiency(hi, i_ae) >= 0:
        raise ValueError("secrecy efficiency has no sign change on the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if secrecy_efficiency(mid, i_ae) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def net_bit_rate(se: float, raw_rate: float) -> float:
    if raw_rate < 0:
        raise ValueError("raw_rate must be >= 0")
    return max(0.0, se) * raw_rate


def secrecy_report(config: SystemConfig, breakdown: Optional[QberBreakdown] = None) -> SecrecyReport:
    breakdown = breakdown or total_qber(config)
    raw = accepted_rate(config)
    se = secrecy_efficiency(min(breakdown.total, 0.5), config.i_ae)
    return SecrecyReport(breakdown.total, se, raw, net_bit_rate(se, raw), se > 0)


def analyze(config: SystemConfig) -> tuple[QberBreakdown, SecrecyReport]:
    b = total_qber(config)
    return b, secrecy_report(config, b)


@dataclass(frozen=True)
class SweepRow:
    distance_km: float
    breakdown: QberBreakdown
    report: SecrecyReport


SWEEP_COLUMNS = ("distance_km", "raw_rate_hz", "qber_opt", "qber_det", "qber_int",
                 "qber_total", "secrecy_eff", "nbr_hz", "secure_flag")


def sweep(config: SystemConfig, distances: Sequence[float]) -> list[SweepRow]:
    distances = list(distances)
    if any(d < 0 for d in distances):
        raise ValueError("distances must be non-negative")
    if distances != sorted(distances):
        raise ValueError("distances must be sorted")
    rows = []
    for d in distances:
        b, rep = analyze(with_distance(config, d))
        rows.append(SweepRow(d, b, rep))
    return rows


def fmt(x: float) -> str:
    """Locale-independent number formatting used in every CSV/data file."""
    return format(float(x), ".10g")


def row_values(row: SweepRow) -> list[str]:
    b, r = row.breakdown, row.report
    return [fmt(row.distance_km), fmt(r.raw_rate), fmt(b.qber_opt), fmt(b.qber_det),
            fmt(b.qber_int), fmt(b.total), fmt(r.secrecy_efficiency), fmt(r.net_bit_rate),
            "1" if r.secure else "0"]


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    lines += [",".join(row_values(r)) for r in rows]
    return "\n".join(lines) + "\n"


def secure_distance(config: SystemConfig, tol_km: float = 0.01) -> float:
    """Distance at which the total QBER crosses the security threshold.

    Returns ``math.inf`` when the link stays secure out to 1000 km.
    """
    q_star = security_threshold(config.i_ae)

    def excess(d: float) -> float:
        return total_qber(with_distance(config, d)).total - q_star

    if excess(0.0) >= 0:
        raise ValueError("link is insecure at zero distance")
    if excess(HORIZON_KM) < 0:
        return math.inf
    lo, hi = 0.0, HORIZON_KM
    while hi - lo > tol_km:
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --- calibration -----------------------------------------------------------

class CalibrationError(ValueError):
    def __init__(self, message: str, residuals: list[float], best: SystemConfig):
        super().__init__(message)
        self.residuals = residuals
        self.best = best


@dataclass(frozen=True)
class Observation:
    distance_km: float
    qber: Optional[float] = None
    raw_rate: Optional[float] = None

    def __post_init__(self):
        if (self.qber is None) == (self.raw_rate is None):
            raise ValueError("an observation carries exactly one of qber or raw_rate")
        value = self.qber if self.qber is not None else self.raw_rate
        if value <= 0:
            raise ValueError("observed values must be > 0")

    def residual(self, config: SystemConfig) -> float:
        """Relative residual (model - observed) / observed."""
        cfg = with_distance(config, self.distance_km)
        if self.qber is not None:
            return (total_qber(cfg).total - self.qber) / self.qber
        return (accepted_rate(cfg) - self.raw_rate) / self.raw_rate


@dataclass(frozen=True)
class CalibrationBounds:
    coupling_loss: tuple[float, float] = (0.0, 10.0)
    dark_rate: tuple[float, float] = (0.1, 10.0)  # per channel; the lower end excludes 0
    extinction: tuple[float, float] = (15.0, 30.0)
    coupling_step: float = 0.1
    dark_step: float = 0.1
    extinction_step: float = 0.1


@dataclass(frozen=True)
class CalibrationResult:
    config: SystemConfig
    residuals: list[float]
    sweeps: int
    history: list[tuple[str, float]] = field(default_factory=list)

    @property
    def max_abs_residual(self) -> float:
        return max(abs(r) for r in self.residuals)


def _set_param(config: SystemConfig, name: str, value: float) -> SystemConfig:
    if name == "coupling_loss":
        return replace(config, receiver=replace(config.receiver, coupling_loss=value))
    if name == "extinction":
        return replace(config, receiver=replace(config.receiver, extinction=value))
    if name == "dark_rate":
        return replace(config, detector0=replace(config.detector0, dark_rate=value),
                       detector1=replace(config.detector1, dark_rate=value))
    raise KeyError(name)


def _get_param(config: SystemConfig, name: str) -> float:
    if name == "dark_rate":
        return config.detector0.dark_rate
    return getattr(config.receiver, name)


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(math.floor((hi - lo) / step + 1e-9))
    return np.round(lo + step * np.arange(n + 1), 10)


CALIBRATION_ORDER = ("dark_rate", "coupling_loss", "extinction")


def calibrate(config: SystemConfig, observations: Sequence[Observation],
              bounds: CalibrationBounds = CalibrationBounds(), tolerance: float = 0.05,
              max_sweeps: int = 50) -> CalibrationResult:
    """Fit dark rate, coupling loss and extinction to observed points.

    Deterministic coordinate descent over fixed grids, minimising the sum of
    squared relative residuals.  A parameter only moves when the objective
    strictly improves, so an already-fitting config comes back unchanged.
    Raises :class:`CalibrationError` if the best fit still misses some
    observation by more than ``tolerance`` (relative).
    """
    observations = list(observations)
    if not observations:
        raise ValueError("need at least one observation")

    grids = {
        "coupling_loss": _grid(*bounds.coupling_loss, bounds.coupling_step),
        "dark_rate": _grid(*bounds.dark_rate, bounds.dark_step),
        "extinction": _grid(*bounds.extinction, bounds.extinction_step),
    }
    for name in CALIBRATION_ORDER:
        lo, hi = getattr(bounds, name)
        v = _get_param(config, name)
        if not lo <= v <= hi:
            config = _set_param(config, name, float(np.clip(v, lo, hi)))

    def cost(cfg: SystemConfig) -> float:
        return sum(o.residual(cfg) ** 2 for o in observations)

    best = cost(config)
    history = []
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        moved = False
        for name in CALIBRATION_ORDER:
            current = _get_param(config, name)
            pick, pick_cost = current, best
            for v in grids[name]:
                c = cost(_set_param(config, name, float(v)))
                if c < pick_cost:
                    pick, pick_cost = float(v), c
            if pick != current:
                config = _set_param(config, name, pick)
                best = pick_cost
                history.append((name, pick))
                moved = True
        if not moved:
            break

    residuals = [o.residual(config) for o in observations]
    if max(abs(r) for r in residuals) > tolerance:
        raise CalibrationError(
            f"no parameters within bounds reproduce the observations; best residuals {residuals}",
            residuals, config)
    return CalibrationResult(config, residuals, sweeps, history)


REFERENCE_POINT_25KM = Observation(distance_km=25.0, qber=0.036)
