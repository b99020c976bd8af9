"""Print the empirical inequality ratios across eps and write them to JSON."""

import argparse
import json
from pathlib import Path

from thinshell.harness import scaling_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", default="0.2,0.1,0.05,0.025")
    ap.add_argument("--samples", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("runs/scaling.json"))
    args = ap.parse_args()

    eps = tuple(float(e) for e in args.eps.split(","))
    res = scaling_suite(eps, nsamples=args.samples, seed=args.seed)
    print(f"{'name':<18}" + "".join(f"{e:>11g}" for e in eps) + f"{'spread':>9}  status")
    for name, r in res.items():
        cells = "".join(f"{x:11.4g}" for x in r.ratios)
        print(f"{name:<18}{cells}{r.spread:9.2f}  {'PASS' if r.passed else 'FAIL'}")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps({k: r.as_dict() for k, r in res.items()}, indent=2))


if __name__ == "__main__":
    main()
