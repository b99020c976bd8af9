"""Empirical Korn constants, explicit extension constants and the rotation counterexample."""

import argparse
import json
from pathlib import Path

from thinshell.harness import explicit_constant_check, korn_probes


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=50)
    ap.add_argument("--eps", default="0.2,0.1,0.05")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("runs/korn.json"))
    args = ap.parse_args()

    eps = tuple(float(e) for e in args.eps.split(","))
    korn = korn_probes(eps, nsamples=args.samples, seed=args.seed)
    expl = explicit_constant_check(eps, nsamples=2 * args.samples, seed=args.seed)
    print(f"sphere Korn constant  {korn['sphere_constant']:.4f}")
    print(f"shell Korn constant   {korn['shell_constant']:.4f}  (variation {100 * korn['shell_variation']:.2f}%)")
    for e, v in korn["shell"]["per_eps"].items():
        print(f"  eps={e:<8} {v:.4f}")
    print(f"rotation flagged      {korn['killing_flagged']}")
    for k in ("CoEx_L2", "DfEx_L2"):
        print(f"{k:<10} max ratio {expl[k]['max_ratio']:.3f}, violations {expl[k]['violations']}")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps({"korn": korn, "explicit": expl}, indent=2, default=float))


if __name__ == "__main__":
    main()
