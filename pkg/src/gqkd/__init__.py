"""Gigahertz-clocked B92 fibre QKD link: analytic QBER budget and Monte Carlo cross-check."""

from .model import PRESETS, ConfigError, SystemConfig, preset, with_distance

__all__ = ["PRESETS", "ConfigError", "SystemConfig", "preset", "with_distance"]
