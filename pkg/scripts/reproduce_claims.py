"""Run every reproduction experiment and write the measured numbers to JSON.

    python scripts/reproduce_claims.py --out results/claims.json
    python scripts/reproduce_claims.py --only parity --trials 20
"""

import argparse
import json
from pathlib import Path

from nsmimo import experiments

EXPERIMENTS = {
    "geometry": lambda a: experiments.geometry_suite(trials=a.trials or 100, seed=a.seed),
    "projection": lambda a: experiments.projection_suite(noise_trials=a.trials or 500, seed=a.seed),
    "visibility": lambda a: experiments.visibility_success(trials_per_snr=a.trials or 17, seed=a.seed),
    "refinement": lambda a: experiments.refinement_gain(trials=a.trials or 100, seed=a.seed),
    "parity": lambda a: [experiments.stationary_parity(M, trials=a.trials or 100, seed=a.seed) for M in (32, 128)],
    "alternative": lambda a: experiments.alternative_inflation(trials=a.trials or 100, seed=a.seed),
    "se": lambda a: experiments.se_parity(trials=a.trials or 50, seed=a.seed),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--only", nargs="+", choices=sorted(EXPERIMENTS), help="subset of experiments to run")
    ap.add_argument("--trials", type=int, default=None, help="override every experiment's trial count")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/claims.json")
    args = ap.parse_args()

    results = {}
    for name in args.only or EXPERIMENTS:
        results[name] = EXPERIMENTS[name](args)
        print(name, json.dumps(results[name], indent=1))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(results, indent=2))


if __name__ == "__main__":
    main()
