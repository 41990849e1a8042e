"""Command-line front end: config documents, presets, subcommands, file output.

Config documents are flat ``key = value`` text, one key per line, ``#``
comments.  Any config key can also be given on the command line as
``--key value`` (dashes or underscores).  Output goes to ``--out-dir``,
else ``$GQKD_OUTPUT_DIR``, else the working directory.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Optional

from . import analysis, montecarlo, timing
from .model import (
    ClockConfig,
    ConfigError,
    DetectorModel,
    FibreChannel,
    ReceiverModel,
    SourceModel,
    SystemConfig,
    preset,
    timing_response,
)

OUTPUT_ENV = "GQKD_OUTPUT_DIR"
DEFAULT_PRESET = "SSPD_3G3"

# key -> (section, field); detector sections expand per detector below
_BASE_KEYS = {
    "clock_hz": ("clock", "frequency"),
    "mu": ("source", "mean_photon_number"),
    "pulse_fwhm_ps": ("source", "pulse_fwhm"),
    "wavelength_nm": ("source", "wavelength"),
    "loss_db_per_km": ("channel", "loss_per_km"),
    "distance_km": ("channel", "length"),
    "extra_loss_db": ("channel", "extra_loss"),
    "angle_deg": ("receiver", "state_separation_angle"),
    "extinction_db": ("receiver", "extinction"),
    "coupling_loss_db": ("receiver", "coupling_loss"),
    "window_offset_ps": ("receiver", "window_offset"),
    "window_width_ps": ("receiver", "window_width"),
}
_DET_KEYS = {
    "efficiency": "efficiency",
    "dark_hz": "dark_rate",
    "jitter_fwhm_ps": "jitter_fwhm",
    "dead_ns": "dead_time",
}
CONFIG_KEYS: dict[str, tuple[str, str]] = dict(_BASE_KEYS)
for _i in (0, 1):
    for _k, _f in _DET_KEYS.items():
        CONFIG_KEYS[f"det{_i}_{_k}"] = (f"detector{_i}", _f)
CONFIG_KEYS["i_ae"] = ("system", "i_ae")
RUN_KEYS = ("seed", "cycles", "block_size")


class DocumentError(ConfigError):
    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None,
                 source: str = "<config>"):
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message, key)
        self.line = line
        self.source = source


@dataclass(frozen=True)
class RunParams:
    seed: int = 0
    cycles: int = 10_000_000
    block_size: int = 1 << 24


@dataclass(frozen=True)
class ParsedDocument:
    config: SystemConfig
    run: RunParams
    auto_window: bool = False
    preset: Optional[str] = None


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        v = float(text)
        if not v.is_integer():
            raise ValueError(f"{text!r} is not an integer") from None
        return int(v)


def _ns_to_ps(text: str) -> float:
    # exact decimal shift keeps emit/parse a bitwise round trip
    return float(Decimal(text).scaleb(3))


def _ps_to_ns(value: float) -> str:
    return format(Decimal(repr(float(value))).scaleb(-3).normalize(), "f")


def read_pairs(text: str, source: str = "<config>") -> list[tuple[str, str, int]]:
    """Split a document into ``(key, value, line)`` triples."""
    pairs, seen = [], {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DocumentError(f"expected 'key = value', got {raw.strip()!r}", line=lineno,
                                source=source)
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise DocumentError(f"duplicate key {key!r} (first on line {seen[key]})", key, lineno,
                                source)
        seen[key] = lineno
        pairs.append((key, value, lineno))
    return pairs


def _sections(config: SystemConfig) -> dict[str, dict]:
    return {
        "clock": {"frequency": config.clock.frequency},
        "source": asdict(config.source),
        "channel": asdict(config.channel),
        "receiver": asdict(config.receiver),
        "detector0": asdict(config.detector0),
        "detector1": asdict(config.detector1),
        "system": {"i_ae": config.i_ae},
    }


def apply_pairs(base: SystemConfig, pairs, run: RunParams = RunParams(),
                source: str = "<config>") -> ParsedDocument:
    """Overlay ``(key, value, line)`` pairs on ``base``.

    A ``preset`` pair, if present, replaces ``base`` before anything else.
    """
    lines = {k: ln for k, _, ln in pairs}
    preset_name = None
    for key, value, ln in pairs:
        if key == "preset":
            try:
                base = preset(value)
            except ConfigError as exc:
                raise DocumentError(str(exc), key, ln, source) from None
            preset_name = value

    sec = _sections(base)
    run_vals = asdict(run)
    auto = False
    for key, value, ln in pairs:
        if key == "preset":
            continue
        if key not in CONFIG_KEYS and key not in RUN_KEYS:
            raise DocumentError(f"unknown key {key!r}", key, ln, source)
        try:
            if key in RUN_KEYS:
                run_vals[key] = _parse_int(value)
                continue
            section, name = CONFIG_KEYS[key]
            if key == "window_width_ps" and value.lower() in ("full", "auto"):
                auto = value.lower() == "auto"
                sec[section][name] = None
            elif key.endswith("_dead_ns"):
                sec[section][name] = _ns_to_ps(value)
            else:
                sec[section][name] = float(value)
        except (ValueError, ArithmeticError):
            raise DocumentError(f"bad value {value!r} for {key!r}", key, ln, source) from None

    def build(section, cls):
        try:
            return cls(**sec[section])
        except ConfigError as exc:
            # detector invariants report the bare suffix, e.g. "efficiency"
            key = f"det{section[-1]}_{exc.key}" if section.startswith("detector") else exc.key
            raise DocumentError(str(exc), key, lines.get(key), source) from None

    parts = dict(
        clock=build("clock", ClockConfig),
        source=build("source", SourceModel),
        channel=build("channel", FibreChannel),
        receiver=build("receiver", ReceiverModel),
        detector0=build("detector0", DetectorModel),
        detector1=build("detector1", DetectorModel),
    )
    try:
        config = SystemConfig(**parts, i_ae=sec["system"]["i_ae"])
    except ConfigError as exc:
        raise DocumentError(str(exc), exc.key, lines.get(exc.key), source) from None
    try:
        run_params = RunParams(**run_vals)
    except TypeError as exc:
        raise DocumentError(str(exc), source=source) from None
    return ParsedDocument(config, run_params, auto, preset_name)


def parse_document(text: str, base: Optional[SystemConfig] = None,
                   source: str = "<config>") -> ParsedDocument:
    base = base if base is not None else preset(DEFAULT_PRESET)
    return apply_pairs(base, read_pairs(text, source), source=source)


def parse_config(text: str, base: Optional[SystemConfig] = None) -> SystemConfig:
    """Parse a config document on top of ``base`` (default SSPD_3G3).

    Unknown keys and invariant violations raise :class:`DocumentError`
    naming the key and line.  An ``auto`` window is resolved here.
    """
    doc = parse_document(text, base)
    return resolve_auto_window(doc.config) if doc.auto_window else doc.config


def emit_config(config: SystemConfig, run: Optional[RunParams] = None) -> str:
    sec = _sections(config)
    lines = []
    for key, (section, name) in CONFIG_KEYS.items():
        value = sec[section][name]
        if key == "window_width_ps" and value is None:
            text = "full"
        elif key.endswith("_dead_ns"):
            text = _ps_to_ns(value)
        else:
            text = repr(float(value))
        lines.append(f"{key} = {text}")
    if run is not None:
        lines += [f"{k} = {getattr(run, k)}" for k in RUN_KEYS]
    return "\n".join(lines) + "\n"


def signal_event_rate(config: SystemConfig) -> float:
    """All signal clicks (correct and analyzer leakage) before gating, Hz."""
    rates = analysis.detector_rates(replace(config, receiver=replace(
        config.receiver, window_offset=0.0, window_width=None)))
    return sum(r.true_rate - d.dark_rate for r, d in zip(rates, config.detectors))


def resolve_auto_window(config: SystemConfig, objective: str = "max_nbr") -> SystemConfig:
    choice = optimal_window(config, objective)
    return replace(config, receiver=replace(config.receiver, window_offset=choice.offset,
                                            window_width=choice.width))


def optimal_window(config: SystemConfig, objective: str = "max_nbr") -> timing.WindowChoice:
    return timing.optimize_window(
        timing_response(config, 0), signal_event_rate(config),
        sum(d.dark_rate for d in config.detectors), config.clock, objective,
        extinction=config.receiver.extinction, i_ae=config.i_ae)


# --- subcommands -------------------------------------------------------------

@dataclass
class RunManifest:
    subcommand: str
    config_source: str
    overrides: list[tuple[str, str]] = field(default_factory=list)
    output_paths: list[str] = field(default_factory=list)


def _parse_range(spec: str) -> list[float]:
    """``start:stop:step`` (inclusive) or a comma list."""
    if ":" in spec:
        start, stop, step = (Decimal(x) for x in spec.split(":"))
        if step <= 0:
            raise ValueError("distance step must be > 0")
        out, x = [], start
        while x <= stop:
            out.append(float(x))
            x += step
        return out
    return [float(x) for x in spec.split(",") if x.strip()]


def _parse_observation(text: str) -> analysis.Observation:
    try:
        dist, rest = text.split(":", 1)
        kind, value = rest.split("=", 1)
        kind = kind.strip()
        if kind not in ("qber", "raw_rate"):
            raise ValueError
        return analysis.Observation(float(dist), **{kind: float(value)})
    except ValueError:
        raise ConfigError(f"bad observation {text!r}; expected DIST:qber=Q or DIST:raw_rate=HZ",
                          "observe") from None


def _output_dir(args) -> Path:
    path = Path(args.out_dir or os.environ.get(OUTPUT_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise OSError(f"output directory {path} is not writable")
    return path


def _write(manifest: RunManifest, path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")
    manifest.output_paths.append(str(path))


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, default=str) + "\n"


def _report_dict(config: SystemConfig) -> dict:
    b, r = analysis.analyze(config)
    return {"distance_km": config.channel.length, "qber": asdict(b), "secrecy": asdict(r)}


def _gnuplot(rows, column: str, header: str) -> str:
    lines = [f"# distance_km {header}"]
    for row in rows:
        value = row.report.net_bit_rate if column == "nbr" else row.breakdown.total
        lines.append(f"{analysis.fmt(row.distance_km)} {analysis.fmt(value)}")
    return "\n".join(lines) + "\n"


def cmd_analyze(args, doc, manifest, out):
    payload = _report_dict(doc.config)
    payload["config"] = emit_config(doc.config).splitlines()
    text = _dumps(payload)
    _write(manifest, out / "analyze.json", text)
    sys.stdout.write(text)


def cmd_sweep(args, doc, manifest, out):
    rows = analysis.sweep(doc.config, _parse_range(args.distances))
    _write(manifest, out / "sweep.csv", analysis.sweep_csv(rows))
    _write(manifest, out / "qber_vs_distance.dat", _gnuplot(rows, "qber", "qber_total"))
    _write(manifest, out / "nbr_vs_distance.dat", _gnuplot(rows, "nbr", "nbr_hz"))


def cmd_compare(args, doc, manifest, out):
    distances = _parse_range(args.distances)
    sspd = preset("SSPD_3G3")
    if not args.no_calibrate:
        sspd = analysis.calibrate(sspd, [analysis.REFERENCE_POINT_25KM]).config
    tables = {"SSPD_3G3": analysis.sweep(sspd, distances),
              "SISPAD_2G": analysis.sweep(preset("SISPAD_2G"), distances)}
    header = ["distance_km"] + [f"{tag}_{c}" for tag in tables for c in analysis.SWEEP_COLUMNS[1:]]
    lines = [",".join(header)]
    for i, d in enumerate(distances):
        cells = [analysis.fmt(d)]
        for rows in tables.values():
            cells += analysis.row_values(rows[i])[1:]
        lines.append(",".join(cells))
    _write(manifest, out / "compare.csv", "\n".join(lines) + "\n")


def cmd_montecarlo(args, doc, manifest, out):
    spec = montecarlo.RunSpec(doc.config, doc.run.cycles, doc.run.seed, doc.run.block_size)
    tally, wall = montecarlo.timed_run(spec, workers=args.workers)
    report = None if args.no_cross_check else montecarlo.cross_check(doc.config, tally)
    meta = montecarlo.run_metadata(spec, tally, wall, report)
    meta["estimate"] = asdict(montecarlo.estimate(tally, doc.config.clock.frequency))
    _write(manifest, out / "montecarlo.json", _dumps(meta))
    sys.stdout.write(_dumps({"tally": meta["tally"], "estimate": meta["estimate"],
                             "flags": report.flags if report else []}))


def cmd_window_opt(args, doc, manifest, out):
    choice = optimal_window(doc.config, args.objective)
    payload = {"offset_ps": choice.offset, "width_ps": choice.width,
               "objective": choice.objective, "value": choice.value,
               "degenerate": choice.degenerate, "period_ps": doc.config.clock.period}
    text = _dumps(payload)
    _write(manifest, out / "window.json", text)
    sys.stdout.write(text)


def cmd_calibrate(args, doc, manifest, out):
    observations = ([_parse_observation(o) for o in args.observe] if args.observe
                    else [analysis.REFERENCE_POINT_25KM])
    result = analysis.calibrate(doc.config, observations)
    _write(manifest, out / "calibrated.cfg", emit_config(result.config))
    payload = {
        "observations": [asdict(o) for o in observations],
        "residuals": result.residuals,
        "sweeps": result.sweeps,
        "moves": [list(m) for m in result.history],
    }
    text = _dumps(payload)
    _write(manifest, out / "calibration.json", text)
    sys.stdout.write(text)


def cmd_threshold(args, doc, manifest, out):
    sys.stdout.write(f"{analysis.security_threshold(args.i_ae):.6f}\n")


def cmd_histogram(args, doc, manifest, out):
    cfg = doc.config
    hist = timing.synth_histogram(
        timing_response(cfg, 0), signal_event_rate(cfg) / 2, cfg.detector0.dark_rate,
        cfg.clock, args.duration, args.bin_width, doc.run.seed)
    _write(manifest, out / "histogram.csv", timing.histogram_csv(hist))


COMMANDS = {
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
    "montecarlo": cmd_montecarlo,
    "window-opt": cmd_window_opt,
    "calibrate": cmd_calibrate,
    "compare": cmd_compare,
    "threshold": cmd_threshold,
    "histogram": cmd_histogram,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gqkd", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp):
        sp.add_argument("--preset", default=None, help=f"preset name (default {DEFAULT_PRESET})")
        sp.add_argument("--config", default=None, help="config document (key = value lines)")
        sp.add_argument("--out-dir", default=None, help=f"output directory (else ${OUTPUT_ENV})")
        return sp

    common(sub.add_parser("analyze", help="QBER breakdown and secrecy report at one distance"))
    s = common(sub.add_parser("sweep", help="QBER / NBR versus distance"))
    s.add_argument("--distances", default="0:25:1")
    m = common(sub.add_parser("montecarlo", help="event-level simulation + cross-check"))
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--no-cross-check", action="store_true")
    w = common(sub.add_parser("window-opt", help="optimal coincidence window"))
    w.add_argument("--objective", choices=("max_nbr", "min_qber"), default="max_nbr")
    c = common(sub.add_parser("calibrate", help="fit unpublished receiver parameters"))
    c.add_argument("--observe", action="append", default=[],
                   help="DIST:qber=Q or DIST:raw_rate=HZ (repeatable; default 25:qber=0.036)")
    cp = common(sub.add_parser("compare", help="SSPD_3G3 vs SISPAD_2G side by side"))
    cp.add_argument("--distances", default="1:25:1")
    cp.add_argument("--no-calibrate", action="store_true")
    t = common(sub.add_parser("threshold", help="QBER at which the secrecy efficiency vanishes"))
    t.add_argument("--i-ae", type=float, default=0.29)
    h = common(sub.add_parser("histogram", help="synthetic TCSPC histogram for detector 0"))
    h.add_argument("--duration", type=float, default=1.0, help="seconds")
    h.add_argument("--bin-width", type=float, default=4.0, help="ps")
    return p


def _overrides(extra: list[str]) -> list[tuple[str, str]]:
    out, i = [], 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"missing value for {tok}", key.replace("-", "_"))
            value = extra[i + 1]
            i += 2
        out.append((key.replace("-", "_"), value))
    return out


def load(args, overrides: list[tuple[str, str]]) -> ParsedDocument:
    base = preset(args.preset or DEFAULT_PRESET)
    doc = ParsedDocument(base, RunParams())
    if args.config:
        path = Path(args.config)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise DocumentError(f"cannot read config: {exc.strerror}", source=str(path)) from None
        doc = apply_pairs(base, read_pairs(text, str(path)), source=str(path))
    if overrides:
        pairs = [(k, v, None) for k, v in overrides]
        over = apply_pairs(doc.config, pairs, doc.run, source="<command line>")
        doc = ParsedDocument(over.config, over.run, over.auto_window or (
            doc.auto_window and "window_width_ps" not in dict(overrides)), doc.preset)
    if doc.auto_window:
        doc = replace(doc, config=resolve_auto_window(doc.config))
    return doc


def dispatch(manifest: RunManifest, args, doc: ParsedDocument) -> int:
    out = _output_dir(args)
    COMMANDS[manifest.subcommand](args, doc, manifest, out)
    return 0


def _error_json(exc: Exception) -> str:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("key", "line", "residuals"):
        if getattr(exc, attr, None) is not None:
            payload[attr] = getattr(exc, attr)
    return json.dumps(payload)


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        overrides = _overrides(extra)
        manifest = RunManifest(args.cmd, args.config or args.preset or DEFAULT_PRESET, overrides)
        doc = load(args, overrides)
        return dispatch(manifest, args, doc)
    except (ConfigError, analysis.CalibrationError, ValueError, OSError) as exc:
        sys.stderr.write(_error_json(exc) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
