#!/usr/bin/env python3
"""Net bit rate and QBER versus coincidence-window width for a centred window."""
import argparse
from dataclasses import replace

import numpy as np

from gqkd import preset
from gqkd.analysis import analyze
from gqkd.cli import optimal_window
from gqkd.model import with_distance


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--preset", default="SISPAD_2G")
    p.add_argument("--distance-km", type=float, default=10.0)
    p.add_argument("--points", type=int, default=21)
    args = p.parse_args()

    cfg = with_distance(preset(args.preset), args.distance_km)
    period = cfg.clock.period
    print("# width_ps qber nbr_hz")
    for w in np.linspace(period / args.points, period, args.points):
        c = replace(cfg, receiver=replace(cfg.receiver, window_offset=(period - w) / 2,
                                          window_width=w))
        b, r = analyze(c)
        print(f"{w:.3f} {b.total:.6f} {r.net_bit_rate:.6g}")
    best = optimal_window(cfg)
    print(f"# optimum: offset {best.offset:g} ps, width {best.width:g} ps, NBR {best.value:.6g} Hz")


if __name__ == "__main__":
    main()
