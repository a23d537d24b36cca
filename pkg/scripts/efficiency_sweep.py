#!/usr/bin/env python3
"""Sweep lamp UVC efficiency against the floor-coverage time bound.

Irradiance is linear in efficiency, so every time-to-target scales as its
inverse. The sweep prints the coverage picture across a range of assumed
electrical-to-UVC conversion efficiencies and then reports the minimal
efficiency for which the slowest floor cell still reaches the target dose
within the planning bound:

    python3 scripts/efficiency_sweep.py --bound 300 --csv sweep.csv
"""

import argparse
import dataclasses
import sys

from uvcguard.dosimetry import DoseGrid, coverage_report
from uvcguard.room import default_room


def room_at_efficiency(efficiency: float):
    room = default_room()
    lamps = tuple(
        dataclasses.replace(lamp, uvc_efficiency=efficiency)
        if lamp.emits_downward else lamp
        for lamp in room.lamps)
    return dataclasses.replace(room, lamps=lamps)


def coverage_at(efficiency: float, cycle: float, target: float):
    room = room_at_efficiency(efficiency)
    lamps = [l for l in room.lamps if l.emits_downward]
    grid = DoseGrid.for_room(room, target_dose=target)
    return coverage_report(grid, lamps, cycle)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="coverage time vs. assumed lamp UVC efficiency")
    parser.add_argument("--low", type=float, default=0.10,
                        help="lowest efficiency (default 0.10)")
    parser.add_argument("--high", type=float, default=0.60,
                        help="highest efficiency (default 0.60)")
    parser.add_argument("--steps", type=int, default=11,
                        help="sweep points (default 11)")
    parser.add_argument("--cycle", type=float, default=600.0,
                        help="cycle length for the covered fraction (s)")
    parser.add_argument("--target", type=float, default=27.0,
                        help="target dose (J/m2)")
    parser.add_argument("--bound", type=float, default=300.0,
                        help="required max time-to-target (s)")
    parser.add_argument("--csv", help="also write the sweep rows to this file")
    args = parser.parse_args(argv)
    if not 0.0 < args.low <= args.high <= 1.0:
        parser.error("need 0 < --low <= --high <= 1")

    rows = []
    print(f"{'efficiency':>10} {'min_t_s':>9} {'mean_t_s':>9} {'max_t_s':>9} "
          f"{'covered':>8}")
    for i in range(args.steps):
        if args.steps == 1:
            efficiency = args.low
        else:
            efficiency = args.low + i * (args.high - args.low) / (args.steps - 1)
        cov = coverage_at(efficiency, args.cycle, args.target)
        rows.append((efficiency, cov))
        print(f"{efficiency:>10.3f} {cov.min_time_to_target:>9.1f} "
              f"{cov.mean_time_to_target:>9.1f} {cov.max_time_to_target:>9.1f} "
              f"{cov.covered_fraction:>8.3f}")

    # 1/efficiency scaling makes the feasibility threshold exact
    reference = coverage_at(1.0, args.cycle, args.target)
    minimal = reference.max_time_to_target / args.bound
    print(f"\nminimal efficiency meeting the {args.bound:.0f} s bound: "
          f"{minimal:.4f}")
    check = coverage_at(minimal, args.cycle, args.target)
    print(f"  (check: max time-to-target at that efficiency = "
          f"{check.max_time_to_target:.3f} s)")

    if args.csv:
        with open(args.csv, "w") as f:
            f.write("efficiency,min_time_s,mean_time_s,max_time_s,"
                    "covered_fraction\n")
            for efficiency, cov in rows:
                f.write(f"{efficiency!r},{cov.min_time_to_target!r},"
                        f"{cov.mean_time_to_target!r},"
                        f"{cov.max_time_to_target!r},"
                        f"{cov.covered_fraction!r}\n")
        print(f"wrote {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
