"""Event-level Monte Carlo of the link, used to cross-check the closed forms.

Per cycle Alice sends a random bit in a weak coherent pulse; photons are
lost, routed and detected; clicks get Gaussian timestamps; dark counts
arrive as a Poisson process; dead time, coincidence windows and sifting
are applied to the resulting event stream.

Only cycles that produce a click are materialised.  Clicking photons of a
block form a Poisson process (thinning of ``Poisson(mu)`` per cycle), so a
block draws its click count once and places the clicks on uniformly chosen
cycles; this has the same law as walking every cycle but costs
``O(events)``, which is what makes 25 km runs (a few clicks per 1e9 cycles)
feasible.  Alice's bits stay per-cycle keyed draws.

Blocks are independent work units: a block regenerates the events of its
neighbours that can leak into it, and each detector starts the block
live (no dead time carried over a block boundary).
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Optional

import numpy as np
from scipy import stats

from . import rng
from .analysis import accepted_rate, total_qber
from .model import SystemConfig, arrival_probability, timing_response
from .protocol import conclusive_probability

INT64_MAX = (1 << 63) - 1
# two-sided tail of a 3-sigma normal band
ALPHA_3SIGMA = 2.0 * stats.norm.sf(3.0)

DARK, SIGNAL, OPTICAL, ISI = 0, 1, 2, 3


@dataclass(frozen=True)
class RunSpec:
    config: SystemConfig
    cycles: int
    seed: int = 0
    block_size: int = 1 << 24

    def __post_init__(self):
        if self.cycles < 1:
            raise ValueError("cycles must be >= 1")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if self.cycles * max(1.0, self.config.source.mean_photon_number) > INT64_MAX:
            raise ValueError("cycles x mu would overflow 64-bit tally fields")

    @property
    def blocks(self) -> int:
        return -(-self.cycles // self.block_size)

    def block_range(self, b: int) -> tuple[int, int]:
        a = b * self.block_size
        return a, min(a + self.block_size, self.cycles)


@dataclass(frozen=True)
class TallyCounts:
    cycles: int = 0
    sifted: int = 0
    errors_total: int = 0
    errors_optical: int = 0
    errors_dark: int = 0
    errors_isi: int = 0
    darks_accepted: int = 0
    leaked: int = 0
    deadtime_losses: int = 0
    multiclicks: int = 0

    def __add__(self, other: "TallyCounts") -> "TallyCounts":
        return TallyCounts(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def as_dict(self) -> dict:
        return asdict(self)


def merge(tallies: Iterable[TallyCounts]) -> TallyCounts:
    out = TallyCounts()
    for t in tallies:
        out = out + t
    return out


@dataclass
class _Events:
    cycle: np.ndarray  # landing cycle
    pos: np.ndarray  # ps within the landing cycle
    det: np.ndarray
    origin: np.ndarray  # emitting cycle, -1 for darks
    optical: np.ndarray

    @classmethod
    def concat(cls, parts: list["_Events"]) -> "_Events":
        return cls(*(np.concatenate([getattr(p, f) for p in parts])
                     for f in ("cycle", "pos", "det", "origin", "optical")))

    def take(self, idx) -> "_Events":
        return _Events(self.cycle[idx], self.pos[idx], self.det[idx], self.origin[idx],
                       self.optical[idx])


class _Simulator:
    def __init__(self, spec: RunSpec):
        self.spec = spec
        cfg = spec.config
        self.period = cfg.clock.period
        self.eps = cfg.receiver.leakage
        self.eff = np.array([d.efficiency for d in cfg.detectors])
        self.eff_max = float(self.eff.max())
        self.sigma = np.array([timing_response(cfg, i).sigma for i in range(2)])
        self.center = self.period / 2
        # clicks per cycle before the per-detector efficiency thinning
        self.click_rate = (cfg.source.mean_photon_number * arrival_probability(cfg)
                           * conclusive_probability(cfg.receiver.state_separation_angle)
                           * (1.0 + self.eps) * self.eff_max)
        self.dark_per_cycle = np.array([d.dark_rate for d in cfg.detectors]) * self.period * 1e-12
        self.dead = np.array([d.dead_time for d in cfg.detectors])
        self.lo = cfg.window_offset
        self.hi = cfg.window_offset + cfg.window_width
        self.full_window = cfg.window_width >= self.period
        reach = max(timing_response(cfg, i).reach for i in range(2))
        self.neighbours = -(-reach // spec.block_size)
        self._cache: dict[int, tuple[_Events, _Events]] = {}

    def _generate(self, b: int) -> tuple[_Events, _Events]:
        """Signal clicks emitted by block ``b`` and dark counts landing in it."""
        spec = self.spec
        a, e = spec.block_range(b)
        n_cyc = e - a
        g = rng.block_generator(spec.seed, b)
        n = int(g.poisson(self.click_rate * n_cyc)) if self.click_rate > 0 else 0
        origin = a + g.integers(0, n_cyc, size=n)
        optical = g.random(n) < self.eps / (1.0 + self.eps)
        u_eff = g.random(n)
        z = g.standard_normal(n)
        bits = rng.alice_bits(spec.seed, origin, spec.block_size)
        det = np.where(optical, bits, 1 - bits).astype(np.int8)
        keep = u_eff * self.eff_max < self.eff[det]
        origin, optical, det, z = origin[keep], optical[keep], det[keep], z[keep]
        dt = self.center + self.sigma[det] * z
        shift = np.floor(dt / self.period).astype(np.int64)
        signal = _Events(origin + shift, dt - shift * self.period, det, origin, optical)

        parts = []
        for d in (0, 1):
            nd = int(g.poisson(self.dark_per_cycle[d] * n_cyc)) if self.dark_per_cycle[d] > 0 else 0
            parts.append(_Events(a + g.integers(0, n_cyc, size=nd), g.random(nd) * self.period,
                                 np.full(nd, d, dtype=np.int8), np.full(nd, -1, dtype=np.int64),
                                 np.zeros(nd, dtype=bool)))
        return signal, _Events.concat(parts)

    def _events(self, b: int) -> tuple[_Events, _Events]:
        if b not in self._cache:
            self._cache[b] = self._generate(b)
            for old in [k for k in self._cache if k < b - 2 * self.neighbours - 1]:
                del self._cache[old]
        return self._cache[b]

    def _dead_time(self, ev: _Events, a: int) -> tuple[_Events, int]:
        if not np.any(self.dead > 0) or len(ev.cycle) == 0:
            return ev, 0
        t = (ev.cycle - a).astype(np.float64) * self.period + ev.pos
        order = np.lexsort((t, ev.det))
        keep = np.ones(len(t), dtype=bool)
        t_sorted = t[order].tolist()
        d_sorted = ev.det[order].tolist()
        last = [-math.inf, -math.inf]
        dead = self.dead.tolist()
        for j, (tj, dj) in enumerate(zip(t_sorted, d_sorted)):
            if tj - last[dj] >= dead[dj]:
                last[dj] = tj
            else:
                keep[order[j]] = False
        lost = int(len(t) - keep.sum())
        return ev.take(keep), lost

    def block(self, b: int) -> TallyCounts:
        spec = self.spec
        a, e = spec.block_range(b)
        lo_b = max(0, b - self.neighbours)
        hi_b = min(spec.blocks - 1, b + self.neighbours)
        parts = []
        for nb in range(lo_b, hi_b + 1):
            sig, dark = self._events(nb)
            inside = (sig.cycle >= a) & (sig.cycle < e)
            parts.append(sig.take(inside))
            if nb == b:
                parts.append(dark)
        ev = _Events.concat(parts)
        ev, lost = self._dead_time(ev, a)

        if not self.full_window:
            ev = ev.take((ev.pos >= self.lo) & (ev.pos <= self.hi))
        is_dark = ev.origin < 0
        is_leak = (~is_dark) & (ev.origin != ev.cycle)
        tally = dict(cycles=e - a, darks_accepted=int(is_dark.sum()), leaked=int(is_leak.sum()),
                     deadtime_losses=lost)
        if len(ev.cycle) == 0:
            return TallyCounts(**tally)

        cause = np.where(is_dark, DARK, np.where(is_leak, ISI, np.where(ev.optical, OPTICAL, SIGNAL)))
        order = np.lexsort((ev.pos, ev.cycle))
        cyc, det, cause = ev.cycle[order], ev.det[order], cause[order]
        starts = np.flatnonzero(np.r_[True, cyc[1:] != cyc[:-1]])
        dmin = np.minimum.reduceat(det, starts)
        dmax = np.maximum.reduceat(det, starts)
        single = dmin == dmax
        k = cyc[starts][single]
        first_det = det[starts][single].astype(np.int64)
        first_cause = cause[starts][single]
        wrong = (1 - first_det) != rng.alice_bits(spec.seed, k, spec.block_size)
        return TallyCounts(
            sifted=int(single.sum()),
            errors_total=int(wrong.sum()),
            errors_optical=int((wrong & (first_cause == OPTICAL)).sum()),
            errors_dark=int((wrong & (first_cause == DARK)).sum()),
            errors_isi=int((wrong & (first_cause == ISI)).sum()),
            multiclicks=int((~single).sum()),
            **tally,
        )


def run_blocks(spec: RunSpec, blocks: Iterable[int]) -> TallyCounts:
    """Tally a subset of the run's blocks; tallies of disjoint subsets add up to :func:`run`."""
    sim = _Simulator(spec)
    return merge(sim.block(b) for b in sorted(blocks))


def _chunk(spec_blocks):
    spec, blocks = spec_blocks
    return run_blocks(spec, blocks)


def run(spec: RunSpec, workers: int = 1) -> TallyCounts:
    """Simulate ``spec.cycles`` clock cycles.

    The result depends only on (config, cycles, seed, block_size); the
    worker count only changes wall time.
    """
    nb = spec.blocks
    if workers <= 1 or nb == 1:
        return run_blocks(spec, range(nb))
    bounds = np.linspace(0, nb, min(workers, nb) + 1).astype(int)
    chunks = [(spec, range(bounds[i], bounds[i + 1])) for i in range(len(bounds) - 1)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return merge(pool.map(_chunk, chunks))


@dataclass(frozen=True)
class Estimate:
    qber: float
    qber_stderr: float
    rate_hz: float
    qber_opt: float
    qber_det: float
    qber_int: float
    degenerate: bool = False


def estimate(tally: TallyCounts, frequency: float) -> Estimate:
    """QBER with its binomial standard error and the sifted rate at ``frequency`` Hz."""
    rate = tally.sifted / tally.cycles * frequency if tally.cycles else 0.0
    n = tally.sifted
    if n == 0:
        return Estimate(0.0, 0.0, rate, 0.0, 0.0, 0.0, degenerate=True)
    q = tally.errors_total / n
    return Estimate(q, math.sqrt(q * (1 - q) / n), rate, tally.errors_optical / n,
                    tally.errors_dark / n, tally.errors_isi / n)


@dataclass(frozen=True)
class CheckRow:
    quantity: str
    simulated: float
    analytic: float
    stderr: float
    z: float
    p_value: float
    ok: bool


@dataclass(frozen=True)
class CrossCheckReport:
    rows: list[CheckRow]
    flags: list[str]
    notes: list[str]

    @property
    def consistent(self) -> bool:
        return not self.flags


def _poisson_two_sided(k: int, mean: float) -> float:
    if mean == 0:
        return 1.0 if k == 0 else 0.0
    return float(min(1.0, 2.0 * min(stats.poisson.cdf(k, mean), stats.poisson.sf(k - 1, mean))))


def cross_check(config: SystemConfig, tally: TallyCounts,
                alpha: float = ALPHA_3SIGMA) -> CrossCheckReport:
    """Compare a tally with the closed forms, term by term.

    Each QBER fraction is tested with an exact two-sided binomial test and
    the sifted count with a Poisson test, at the 3-sigma level.  For large
    counts this is the usual |z| <= 3 band; for rare causes it avoids the
    normal approximation.
    """
    rows, flags, notes = [], [], []
    b = total_qber(config)
    f = config.clock.frequency
    expected_sifted = accepted_rate(config) / f * tally.cycles
    p = _poisson_two_sided(tally.sifted, expected_sifted)
    se = math.sqrt(expected_sifted) if expected_sifted > 0 else 0.0
    z = (tally.sifted - expected_sifted) / se if se > 0 else 0.0
    rows.append(CheckRow("rate_hz", tally.sifted / tally.cycles * f, expected_sifted / tally.cycles * f,
                         se / tally.cycles * f, z, p, p >= alpha))

    n = tally.sifted
    if n == 0:
        notes.append("no sifted events; QBER terms not tested")
    else:
        for name, k, ref in (("qber_total", tally.errors_total, b.total),
                             ("qber_opt", tally.errors_optical, b.qber_opt),
                             ("qber_det", tally.errors_dark, b.qber_det),
                             ("qber_int", tally.errors_isi, b.qber_int)):
            ref = min(max(ref, 0.0), 1.0)
            pv = float(stats.binomtest(k, n, ref).pvalue)
            se = math.sqrt(ref * (1 - ref) / n)
            z = (k / n - ref) / se if se > 0 else (0.0 if k == 0 else math.inf)
            rows.append(CheckRow(name, k / n, ref, se, z, pv, pv >= alpha))
    for r in rows:
        if not r.ok:
            flags.append(f"{r.quantity}: simulated {r.simulated:.6g} vs analytic {r.analytic:.6g} "
                         f"(z={r.z:.2f}, p={r.p_value:.2g})")
    return CrossCheckReport(rows, flags, notes)


def run_metadata(spec: RunSpec, tally: TallyCounts, wall_time: float,
                 report: Optional[CrossCheckReport] = None) -> dict:
    meta = {
        "config": asdict(spec.config),
        "seed": spec.seed,
        "cycles": spec.cycles,
        "block_size": spec.block_size,
        "rng": rng.ALGORITHM,
        "tally": tally.as_dict(),
        "wall_time_s": wall_time,
    }
    if report is not None:
        meta["cross_check"] = {
            "consistent": report.consistent,
            "flags": report.flags,
            "notes": report.notes,
            "rows": [asdict(r) for r in report.rows],
        }
    return meta


def timed_run(spec: RunSpec, workers: int = 1) -> tuple[TallyCounts, float]:
    t0 = time.perf_counter()
    tally = run(spec, workers)
    return tally, time.perf_counter() - t0
