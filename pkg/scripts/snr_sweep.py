"""NMSE and spectral efficiency versus SNR for every scheme on paired trials.

Writes results.csv, summary.json and timings.json under ``--out`` through the
experiment harness, then prints one line per (scheme, SNR) cell.

    python scripts/snr_sweep.py --M 128 --S 4 --trials 50 --out results/sweep_128
"""

import argparse

from nsmimo.harness import ExperimentConfig, run_experiment, summarize, read_csv
from nsmimo.model import SystemConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--M", type=int, default=128)
    ap.add_argument("--N", type=int, default=None, help="subcarriers (defaults to M)")
    ap.add_argument("--S", type=int, default=4)
    ap.add_argument("--snr", type=float, nargs="+", default=[0.0, 2.5, 5.0, 7.5, 10.0])
    ap.add_argument("--scheme", nargs="+", default=["proposed", "nomp", "alternative", "ls", "lmmse"])
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/sweep")
    args = ap.parse_args()

    cfg = ExperimentConfig(system=SystemConfig(args.M, args.N or args.M, args.S), schemes=args.scheme,
                           snr_grid=args.snr, trials=args.trials, seed=args.seed, out_dir=args.out)
    run_experiment(cfg)
    for c in summarize(read_csv(f"{args.out}/results.csv"), seed=args.seed)["cells"]:
        print(f"{c['scheme']:12s} {c['snr_db']:5.1f} dB  UL {c['nmse_ul_db']:7.2f} dB  DL {c['nmse_dl_db']:7.2f} dB  "
              f"SE {c['se_bps_hz']:.3f}  DL symbols {c['total_dl_symbols']}")


if __name__ == "__main__":
    main()
