"""Run an eps-sweep and write sweep.csv, sweep.json and rates.dat.

    python3 scripts/run_sweep.py --mode manufactured --out runs/sweep
"""

import argparse
import logging
from pathlib import Path

from thinshell.harness import SweepConfig, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mode", choices=("manufactured", "timestep"), default="manufactured")
    ap.add_argument("--eps", default="0.2,0.1,0.05,0.025", help="comma-separated thicknesses")
    ap.add_argument("--lmax", type=int, default=10)
    ap.add_argument("--nrad", type=int, default=8)
    ap.add_argument("--dt", type=float, default=2e-3)
    ap.add_argument("--tfinal", type=float, default=0.5)
    ap.add_argument("--preset", default="two_mode")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("runs/sweep"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = SweepConfig(
        eps_list=tuple(float(e) for e in args.eps.split(",")), lmax=args.lmax, nrad=args.nrad,
        dt=args.dt, t_final=args.tfinal, mode=args.mode, preset=args.preset, workers=args.workers,
    )
    rep = run_sweep(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    rep.to_csv(args.out / "sweep.csv")
    rep.to_json(args.out / "sweep.json")
    (args.out / "rates.dat").write_text(rep.rate_table())
    print(rep.rate_table(), end="")
    print("slopes:", {k: (None if v is None else round(v, 3)) for k, v in rep.slopes.items()})


if __name__ == "__main__":
    main()
