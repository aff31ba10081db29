"""Run every scenario in scenarios/ through ``misspec rate`` and print the fitted exponents.

    python scripts/run_rates.py --out results/rates --seed 0

Set MISSPEC_THREADS to spread replications over processes.
"""
import argparse
from pathlib import Path

from misspec.cli import main as cli_main

ROOT = Path(__file__).resolve().parent.parent


def read_summary(path: Path) -> dict:
    lines = path.read_text().splitlines()[1:]
    return dict(line.split("=", 1) for line in lines)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="results/rates")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--only", nargs="*", help="scenario names (file stems) to run")
    args = ap.parse_args()
    status = 0
    for ini in sorted((ROOT / "scenarios").glob("*.ini")):
        if args.only and ini.stem not in args.only:
            continue
        out = Path(args.out) / ini.stem
        rc = cli_main(["rate", "--scenario", str(ini), "--out", str(out), "--seed", str(args.seed)])
        s = read_summary(out / "summary.txt")
        print(f"{ini.stem:20s} beta={float(s['beta']):+.3f} r2={float(s['r2']):.3f} {'ok' if rc == 0 else 'CONTRACT FAILED'}")
        status |= rc
    raise SystemExit(status)


if __name__ == "__main__":
    main()
