"""Physical parameters of the test bed and the deterministic link budget.

Units follow the field names: times in picoseconds, rates in hertz, losses
in dB.  All objects are frozen dataclasses; use :func:`dataclasses.replace`
(or :func:`with_distance`) to derive variants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .protocol import conclusive_probability
from .timing import TimingResponse, window_capture

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
PS_PER_S = 1e12


class ConfigError(ValueError):
    """Raised when a configuration violates a domain invariant."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


def _require(cond: bool, message: str, key: str | None = None) -> None:
    if not cond:
        raise ConfigError(message, key)


@dataclass(frozen=True)
class ClockConfig:
    frequency: float  # Hz

    def __post_init__(self):
        _require(math.isfinite(self.frequency) and self.frequency > 0,
                 f"clock frequency must be > 0, got {self.frequency}", "clock_hz")

    @property
    def period(self) -> float:
        """Clock period in ps."""
        return PS_PER_S / self.frequency


@dataclass(frozen=True)
class SourceModel:
    mean_photon_number: float = 0.1
    pulse_fwhm: float = 50.0  # ps, lumps VCSEL width and residual fibre dispersion
    wavelength: float = 850.0  # nm

    def __post_init__(self):
        _require(self.mean_photon_number >= 0, "mean photon number must be >= 0", "mu")
        _require(self.pulse_fwhm >= 0, "pulse FWHM must be >= 0", "pulse_fwhm_ps")


@dataclass(frozen=True)
class FibreChannel:
    loss_per_km: float = 2.2  # dB/km at 850 nm
    length: float = 0.0  # km
    extra_loss: float = 0.0  # dB

    def __post_init__(self):
        _require(self.loss_per_km >= 0, "loss per km must be >= 0", "loss_db_per_km")
        _require(self.length >= 0, "fibre length must be >= 0", "distance_km")
        _require(self.extra_loss >= 0, "extra loss must be >= 0", "extra_loss_db")


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float
    dark_rate: float  # Hz
    jitter_fwhm: float  # ps
    dead_time: float = 0.0  # ps, non-paralyzable

    def __post_init__(self):
        _require(0.0 <= self.efficiency <= 1.0, "efficiency must lie in [0, 1]", "efficiency")
        _require(self.dark_rate >= 0, "dark rate must be >= 0", "dark_hz")
        _require(self.jitter_fwhm >= 0, "jitter FWHM must be >= 0", "jitter_fwhm_ps")
        _require(self.dead_time >= 0, "dead time must be >= 0", "dead_ns")


@dataclass(frozen=True)
class ReceiverModel:
    """Bob's passive B92 receiver and coincidence window.

    ``window_width=None`` means the window spans the full clock period
    (ungated).  The window is checked against the clock in
    :class:`SystemConfig`, since the receiver does not know the period.
    """

    state_separation_angle: float = 45.0  # degrees
    extinction: float = 22.0  # dB, math.inf for ideal analyzers
    coupling_loss: float = 3.0  # dB
    window_offset: float = 0.0  # ps
    window_width: float | None = None  # ps

    def __post_init__(self):
        _require(0.0 < self.state_separation_angle < 90.0,
                 "state separation angle must lie in (0, 90) degrees", "angle_deg")
        _require(self.extinction >= 0, "extinction must be >= 0 dB", "extinction_db")
        _require(self.coupling_loss >= 0, "coupling loss must be >= 0 dB", "coupling_loss_db")
        _require(self.window_offset >= 0, "window offset must be >= 0", "window_offset_ps")
        _require(self.window_width is None or self.window_width >= 0,
                 "window width must be >= 0", "window_width_ps")

    @property
    def leakage(self) -> float:
        """Linear wrong-analyzer leakage 10^(-extinction/10)."""
        return 10.0 ** (-self.extinction / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    clock: ClockConfig
    source: SourceModel
    channel: FibreChannel
    receiver: ReceiverModel
    detector0: DetectorModel
    detector1: DetectorModel
    i_ae: float = 0.29

    def __post_init__(self):
        _require(0.0 <= self.i_ae <= 1.0, "i_ae must lie in [0, 1]", "i_ae")
        period = self.clock.period
        # 1e-9 ps slack absorbs float noise when width was derived from the period
        slack = 1e-9 * period
        width = self.window_width
        _require(width <= period + slack,
                 f"window width {width} ps exceeds clock period {period} ps", "window_width_ps")
        _require(self.receiver.window_offset <= period - width + slack,
                 "window offset places the window beyond the clock period", "window_offset_ps")

    @property
    def detectors(self) -> tuple[DetectorModel, DetectorModel]:
        return (self.detector0, self.detector1)

    @property
    def window_width(self) -> float:
        w = self.receiver.window_width
        return self.clock.period if w is None else w

    @property
    def window_offset(self) -> float:
        return self.receiver.window_offset

    @property
    def gated_fraction(self) -> float:
        """Fraction of each period covered by the coincidence window."""
        return self.window_width / self.clock.period


def transmittance(channel: FibreChannel) -> float:
    return 10.0 ** (-(channel.loss_per_km * channel.length + channel.extra_loss) / 10.0)


def fwhm_to_sigma(fwhm: float) -> float:
    return fwhm / FWHM_PER_SIGMA


def combined_sigma(source: SourceModel, detector: DetectorModel) -> float:
    """Gaussian width of source pulse and detector jitter added in quadrature."""
    return math.hypot(fwhm_to_sigma(source.pulse_fwhm), fwhm_to_sigma(detector.jitter_fwhm))


def timing_response(config: SystemConfig, detector: int = 0) -> TimingResponse:
    """Arrival-time response for one detector, centred in the period."""
    det = config.detectors[detector]
    period = config.clock.period
    return TimingResponse(sigma=combined_sigma(config.source, det), center=period / 2, period=period)


def arrival_probability(config: SystemConfig) -> float:
    """Probability that one emitted photon reaches Bob's analyzers."""
    return transmittance(config.channel) * 10.0 ** (-config.receiver.coupling_loss / 10.0)


def raw_click_rate(config: SystemConfig) -> float:
    """Conclusive, correctly analysed click rate inside the window.

    Averages the two detectors' efficiencies and window captures (each
    detector is the correct one for half of Alice's bits).  No dead-time
    correction.
    """
    per_pulse = (config.source.mean_photon_number * arrival_probability(config)
                 * conclusive_probability(config.receiver.state_separation_angle))
    captured = 0.0
    for i, det in enumerate(config.detectors):
        cap = window_capture(timing_response(config, i), config.window_offset, config.window_width)
        captured += 0.5 * det.efficiency * cap
    return config.clock.frequency * per_pulse * captured


def dead_time_throttle(true_rate: float, dead_time: float) -> float:
    """Recorded rate of a non-paralyzable detector; ``dead_time`` in ps."""
    return true_rate / (1.0 + true_rate * dead_time / PS_PER_S)


def with_distance(config: SystemConfig, length_km: float) -> SystemConfig:
    return replace(config, channel=replace(config.channel, length=length_km))


def _sspd() -> DetectorModel:
    return DetectorModel(efficiency=0.05, dark_rate=10.0, jitter_fwhm=68.0, dead_time=10_000.0)


def _si_spad() -> DetectorModel:
    # dark rate and dead time are not published for the SPAD receiver
    return DetectorModel(efficiency=0.40, dark_rate=500.0, jitter_fwhm=400.0, dead_time=0.0)


PRESETS = {
    "SSPD_3G3": lambda: SystemConfig(
        clock=ClockConfig(3.3e9), source=SourceModel(), channel=FibreChannel(),
        receiver=ReceiverModel(), detector0=_sspd(), detector1=_sspd()),
    "SISPAD_2G": lambda: SystemConfig(
        clock=ClockConfig(2.0e9), source=SourceModel(), channel=FibreChannel(),
        receiver=ReceiverModel(), detector0=_si_spad(), detector1=_si_spad()),
}


def preset(name: str) -> SystemConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
