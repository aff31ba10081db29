"""Recompute the frozen inequality constants.

Prints the maximal lhs/envelope ratio for each inequality over the seeded
calibration family and the integer constants to paste into
``misspec.bounds.FROZEN_CONSTANTS``.
"""
import argparse

from misspec.bounds import CALIBRATION_SEED, CALIBRATION_TUPLES, FROZEN_CONSTANTS, calibrate, max_ratios


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--tuples", type=int, default=CALIBRATION_TUPLES)
    ap.add_argument("--seed", type=int, default=CALIBRATION_SEED)
    args = ap.parse_args()
    ratios = max_ratios(args.tuples, args.seed)
    consts = calibrate(args.tuples, args.seed)
    for k in ratios:
        mark = "" if consts[k] == FROZEN_CONSTANTS[k] else "   <- differs from frozen value"
        print(f"{k:28s} max ratio {ratios[k]:.6f}  constant {consts[k]:g}{mark}")


if __name__ == "__main__":
    main()
