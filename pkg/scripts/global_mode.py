"""Long-horizon sphere energy bound plus the extra shell dissipation term across eps."""

import argparse
import json
import logging
from pathlib import Path

from thinshell.harness import GlobalConfig, global_mode_check


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="random")
    ap.add_argument("--horizon", type=float, default=50.0, help="run the sphere solver to horizon/nu")
    ap.add_argument("--nu", type=float, default=1.0)
    ap.add_argument("--sphere-only", action="store_true", help="skip the shell sweep")
    ap.add_argument("--out", type=Path, default=Path("runs/global.json"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = GlobalConfig(preset=args.preset, horizon=args.horizon, nu=args.nu)
    rep = global_mode_check(cfg, run_shell=not args.sphere_only)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(rep, indent=2, default=float))
    for k, v in rep.items():
        print(f"{k:>22}: {v}")


if __name__ == "__main__":
    main()
