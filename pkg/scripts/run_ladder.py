"""Accuracy ladder on the desk-scale labeled fixture.

Prints one table per seed and the per-approach mean balanced accuracy.
"""

import argparse
import json
from collections import defaultdict

from poiconflate.experiments import format_rows, run_ladder
from poiconflate.matcher import BACKENDS
from poiconflate.trees import ALGORITHMS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--backends", nargs="+", default=list(BACKENDS), choices=list(BACKENDS))
    ap.add_argument("--algos", nargs="+", default=list(ALGORITHMS), choices=list(ALGORITHMS))
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--json", help="also write every row here")
    args = ap.parse_args()

    scores = defaultdict(list)
    dump = []
    for seed in args.seeds:
        rows = run_ladder(seed, backends=args.backends, algorithms=args.algos, k=args.k)
        print(f"seed {seed}")
        print(format_rows(rows))
        print()
        for r in rows:
            scores[r.label].append(r.balanced)
            dump.append({"seed": seed, "approach": r.label, "balanced": r.balanced, "overall": r.overall, "params": r.params})

    width = max(len(k) for k in scores)
    print(f"{'approach'.ljust(width)}  mean balanced  per seed")
    for label, vals in scores.items():
        print(f"{label.ljust(width)}  {sum(vals) / len(vals):13.3f}  {' '.join(f'{v:.3f}' for v in vals)}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(dump, fh, indent=1, default=str)


if __name__ == "__main__":
    main()
