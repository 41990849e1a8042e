"""B92 kernel: two non-orthogonal polarization states and a passive receiver.

Bob routes each photon 50/50 to one of two analyzers.  Analyzer 0 projects
onto the state orthogonal to Alice's bit-0 state, so a click on detector 0
conclusively means bit 1; detector 1 mirrors this for bit 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional


def inferred_bit(detector: int) -> int:
    """Bit Bob assigns to a click on ``detector``."""
    return 1 - detector


def correct_detector(bit: int) -> int:
    return 1 - bit


@dataclass(frozen=True)
class B92State:
    bit: int
    polarization_angle: float  # degrees

    def __post_init__(self):
        if self.bit not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {self.bit}")

    @classmethod
    def encode(cls, bit: int, separation_angle: float) -> "B92State":
        return cls(bit, 0.0 if bit == 0 else separation_angle)


@dataclass(frozen=True)
class ClickProbabilities:
    p_click0: float  # detector 0, conclusive for bit 1
    p_click1: float  # detector 1, conclusive for bit 0
    p_error0: float  # wrong-state leakage into detector 0
    p_error1: float

    @property
    def total(self) -> float:
        return self.p_click0 + self.p_click1 + self.p_error0 + self.p_error1


@dataclass(frozen=True)
class SiftRecord:
    alice_bit: int
    bob_detector: Optional[int]  # None: no click / inconclusive

    @property
    def conclusive(self) -> bool:
        return self.bob_detector is not None

    @property
    def error(self) -> bool:
        return self.conclusive and inferred_bit(self.bob_detector) != self.alice_bit


@dataclass(frozen=True)
class SiftResult:
    key_bits: int
    error_bits: int

    @property
    def qber(self) -> float:
        return self.error_bits / self.key_bits if self.key_bits else 0.0


def conclusive_probability(state_separation_angle: float) -> float:
    """Per-photon probability of a conclusive B92 outcome, 0.5 sin^2(angle)."""
    return 0.5 * math.sin(math.radians(state_separation_angle)) ** 2


def click_probabilities(sent: B92State, receiver, arrival_prob: float,
                        detector_eff: float) -> ClickProbabilities:
    """Per-pulse click probabilities for both detectors given the sent state.

    ``receiver`` needs ``state_separation_angle`` and ``extinction`` (dB).
    Finite extinction leaks a fraction 10^(-extinction/10) of the correct
    conclusive probability into the wrong detector.
    """
    if not (0.0 <= arrival_prob <= 1.0 and 0.0 <= detector_eff <= 1.0):
        raise ValueError("arrival_prob and detector_eff must lie in [0, 1]")
    good = arrival_prob * detector_eff * conclusive_probability(receiver.state_separation_angle)
    bad = good * 10.0 ** (-receiver.extinction / 10.0)
    if sent.bit == 0:
        return ClickProbabilities(p_click0=0.0, p_click1=good, p_error0=bad, p_error1=0.0)
    return ClickProbabilities(p_click0=good, p_click1=0.0, p_error0=0.0, p_error1=bad)


def sift(records: Iterable[SiftRecord]) -> SiftResult:
    key = err = 0
    for rec in records:
        if rec.conclusive:
            key += 1
            err += rec.error
    return SiftResult(key, err)
