"""``thinshell`` command line: operator checks, solver runs, difference studies and Korn probes.

Exit codes: 0 success, 1 a check or solve failed, 2 usage or configuration error.
Every command writes ``manifest.txt`` next to its results.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import ConfigurationError, PreconditionError, StepRejected, ThinShellError
from .presets import PRESETS

log = logging.getLogger("thinshell")

COMMANDS = ("ops-check", "solve-sphere", "solve-shell", "diff-study", "korn-probe")
MIN_LMAX = 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    lmax: int = 10
    nrad: int = 8
    eps_list: tuple | None = None
    nu: float = 1.0
    dt: float = 1e-3
    t_final: float = 0.5
    preset: str = "two_mode"
    mode: str = ""
    out: str = "out"
    seed: int = 0
    tol: float = 1e-8
    workers: int = 1
    samples: int = 50
    checkpoint_every: int = 100

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.lmax < MIN_LMAX:
            raise UsageError(f"lmax must be at least {MIN_LMAX}")
        if self.nrad < 2:
            raise UsageError("nrad must be at least 2")
        if self.preset not in PRESETS:
            raise UsageError(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")
        for name in ("nu", "dt", "t_final", "tol"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive")
        if self.eps_list is not None:
            for e in self.eps_list:
                if not (0.0 < e < 1.0):
                    raise UsageError(f"eps={e} must lie in (0, 1)")
        if self.command == "diff-study":
            if self.eps_list is None or len(self.eps_list) < 3:
                raise UsageError("diff-study needs at least three eps values (--eps a,b,c)")
            if self.mode not in ("", "timestep", "manufactured", "global"):
                raise UsageError("diff-study mode is timestep, manufactured or global")
        if self.command == "korn-probe" and self.mode not in ("", "korn", "scaling", "explicit", "all"):
            raise UsageError("korn-probe mode is korn, scaling, explicit or all")
        if self.command == "solve-shell" and self.nrad < 8:
            raise UsageError("the shell solver needs nrad >= 8")
        if self.samples < 1 or self.workers < 1 or self.checkpoint_every < 1:
            raise UsageError("samples, workers and checkpoint_every must be positive")


# ----------------------------------------------------------------------------
# configuration


_FLOAT_KEYS = {"nu", "dt", "t_final", "tol"}
_INT_KEYS = {"lmax", "nrad", "seed", "workers", "samples", "checkpoint_every"}
_ALIASES = {"tfinal": "t_final", "eps": "eps_list"}


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[_ALIASES.get(key, key)] = value
    return out


def _coerce(key: str, value):
    if value is None:
        return None
    try:
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _INT_KEYS:
            return int(value)
        if key == "eps_list":
            if isinstance(value, (tuple, list)):
                return tuple(float(v) for v in value)
            return tuple(float(v) for v in str(value).replace(" ", "").split(",") if v)
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {value!r}") from exc
    return str(value)


def build_config(command: str, file_values: dict, overrides: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)} - {"command"}
    merged = {}
    for src in (file_values, overrides):
        for k, v in src.items():
            if v is None:
                continue
            if k not in known:
                raise UsageError(f"unknown configuration key {k!r}")
            merged[k] = _coerce(k, v)
    cfg = RunConfig(command, **merged)
    cfg.validate()
    return cfg


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thinshell", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"thinshell {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path)
        s.add_argument("--eps", dest="eps_list")
        s.add_argument("--lmax", type=int)
        s.add_argument("--nrad", type=int)
        s.add_argument("--nu", type=float)
        s.add_argument("--dt", type=float)
        s.add_argument("--tfinal", dest="t_final", type=float)
        s.add_argument("--mode")
        s.add_argument("--preset")
        s.add_argument("--out")
        s.add_argument("--seed", type=int)
        s.add_argument("--tol", type=float)
        s.add_argument("--workers", type=int)
        s.add_argument("--samples", type=int)
        s.add_argument("-v", "--verbose", action="store_true")
    return p


# ----------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path: Path, obj) -> None:
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer, np.bool_)):
            return o.item()
        raise TypeError(type(o).__name__)

    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=default), encoding="utf-8")


def write_manifest(out: Path, cfg: RunConfig, artifacts: list[str], status: int) -> None:
    lines = ["# thinshell run manifest", f"command = {cfg.command}"]
    for k, v in asdict(cfg).items():
        if k == "command":
            continue
        if isinstance(v, tuple):
            v = ",".join(_fmt(x) for x in v)
        lines.append(f"{k} = {_fmt(v) if v is not None else ''}")
    lines += [
        f"thinshell_version = {__version__}",
        f"numpy_version = {np.__version__}",
        f"scipy_version = {scipy.__version__}",
        f"python_version = {platform.python_version()}",
        f"exit_status = {status}",
        f"artifacts = {','.join(sorted(artifacts))}",
    ]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


# ----------------------------------------------------------------------------
# commands


def cmd_ops_check(cfg: RunConfig, out: Path) -> tuple[int, list[str]]:
    from .avgext import identity_suite

    eps = cfg.eps_list[0] if cfg.eps_list else 0.1
    results = identity_suite(cfg.lmax, cfg.nrad, eps, cfg.seed, cfg.tol)
    report = {"eps": eps, "lmax": cfg.lmax, "nrad": cfg.nrad, "tol": cfg.tol,
              "identities": [r.as_dict() for r in results]}
    failed = [r for r in results if not r.passed]
    report["passed"] = not failed
    write_json(out / "ops_check.json", report)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} residual={r.residual:.3e}")
    if failed:
        print(f"{len(failed)} identities above tolerance {cfg.tol:g}", file=sys.stderr)
    return (1 if failed else 0), ["ops_check.json"]


def _sphere_setup(cfg: RunConfig, lmax_grid: int):
    from .grid import make_sphere_grid
    from .presets import make_preset

    grid = make_sphere_grid(lmax_grid)
    data = make_preset(cfg.preset, grid, cfg.nu, np.random.default_rng(cfg.seed), lmax=cfg.lmax)
    return grid, data


def cmd_solve_sphere(cfg: RunConfig, out: Path) -> tuple[int, list[str]]:
    from .sphere_ns import energy_report, init_sphere_solver, step

    grid, data = _sphere_setup(cfg, cfg.lmax)
    state = init_sphere_solver(data.v0, cfg.nu, data.forcing, cfg.dt, lmax=cfg.lmax, grid=grid)
    ck_times, ck_omega = [state.t], [state.omega.copy()]
    status, error = 0, None
    try:
        while state.t < cfg.t_final - 1e-12 * max(1.0, cfg.t_final):
            state.dt = min(cfg.dt, cfg.t_final - state.t)
            step(state)
            if state.steps % cfg.checkpoint_every == 0:
                ck_times.append(state.t)
                ck_omega.append(state.omega.copy())
    except StepRejected as exc:
        status, error = 1, str(exc)
        print(f"step rejected: {exc}", file=sys.stderr)
    if ck_times[-1] != state.t:
        ck_times.append(state.t)
        ck_omega.append(state.omega.copy())
    led = state.ledger
    res = led.residual(cfg.nu)
    mom = np.asarray(led.momenta)
    write_csv(
        out / "ledger.csv",
        ["t", "energy", "dissipation", "work", "h1_integral", "residual", "momentum_x", "momentum_y", "momentum_z"],
        ([t, e, d, w, h, r, *m] for t, e, d, w, h, r, m in zip(led.times, led.energy, led.dissipation, led.work, led.h1_integral, res, mom)),
    )
    np.savez(out / "checkpoints.npz", times=np.array(ck_times), omega=np.array(ck_omega), lmax=cfg.lmax)
    report = energy_report(state) if len(led.times) > 1 else {}
    report.update(status="rejected" if error else "ok", error=error, steps=state.steps)
    write_json(out / "report.json", report)
    return status, ["ledger.csv", "checkpoints.npz", "report.json"]


def cmd_solve_shell(cfg: RunConfig, out: Path) -> tuple[int, list[str]]:
    from .avgext import constant_extension, extend_forcing
    from .shell_ns import build_model, diagnostics, energy_report3d, init_shell_solver, step3d

    eps = cfg.eps_list[0] if cfg.eps_list else 0.1
    grid, data = _sphere_setup(cfg, cfg.lmax + 1)
    model = build_model(grid, eps, cfg.nrad, cfg.nu, lmax=cfg.lmax)
    qs = model.qshell
    forcing = None if data.forcing is None else extend_forcing(data.forcing, "constant", qs)
    state = init_shell_solver(constant_extension(qs, data.v0), cfg.nu, forcing, cfg.dt, qs, model=model, ramp=cfg.mode != "fixed")
    ck_times, ck_t, ck_p = [state.t], [state.ct], [state.cp]
    status, error = 0, None
    try:
        while state.t < cfg.t_final - 1e-12 * max(1.0, cfg.t_final):
            state.dt = min(cfg.dt, cfg.t_final - state.t)
            step3d(state)
            if state.steps % cfg.checkpoint_every == 0:
                ck_times.append(state.t)
                ck_t.append(state.ct)
                ck_p.append(state.cp)
    except StepRejected as exc:
        status, error = 1, str(exc)
        print(f"step rejected: {exc}", file=sys.stderr)
    if ck_times[-1] != state.t:
        ck_times.append(state.t)
        ck_t.append(state.ct)
        ck_p.append(state.cp)
    led = state.ledger
    slack = led.slack()
    mom = np.asarray(led.momenta)
    write_csv(
        out / "ledger.csv",
        ["t", "energy", "dissipation", "work", "slack", "momentum_x", "momentum_y", "momentum_z"],
        ([t, e, d, w, s, *m] for t, e, d, w, s, m in zip(led.times, led.energy, led.dissipation, led.work, slack, mom)),
    )
    np.savez(out / "checkpoints.npz", times=np.array(ck_times), toroidal=np.array(ck_t), poloidal=np.array(ck_p),
             eps=eps, lmax=cfg.lmax, nrad=cfg.nrad)
    report = energy_report3d(state) if len(led.times) > 1 else {}
    report.update(diagnostics(state))
    report.update(status="rejected" if error else "ok", error=error, eps=eps,
                  projection_defect=state.meta.get("projection_defect"))
    write_json(out / "report.json", report)
    return status, ["ledger.csv", "checkpoints.npz", "report.json"]


def cmd_diff_study(cfg: RunConfig, out: Path) -> tuple[int, list[str]]:
    from .harness import GlobalConfig, SweepConfig, global_mode_check, run_sweep

    if cfg.mode == "global":
        gcfg = GlobalConfig(eps_list=cfg.eps_list, lmax=cfg.lmax, nrad=cfg.nrad, nu=cfg.nu, dt=cfg.dt,
                            t_final=cfg.t_final, preset=cfg.preset, seed=cfg.seed, workers=cfg.workers)
        report = global_mode_check(gcfg)
        write_json(out / "global.json", report)
        print(f"max bound ratio {report['max_bound_ratio']:.4g}; slope of extra term {report['slope_extra_term']}")
        return (0 if report["bound_ok"] and not report["failed"] else 1), ["global.json"]
    scfg = SweepConfig(eps_list=cfg.eps_list, lmax=cfg.lmax, nrad=cfg.nrad, nu=cfg.nu, dt=cfg.dt,
                       t_final=cfg.t_final, mode=cfg.mode or "timestep", preset=cfg.preset, seed=cfg.seed,
                       workers=cfg.workers)
    rep = run_sweep(scfg)
    rep.to_json(out / "sweep.json", timing=False)
    rep.to_csv(out / "sweep.csv")
    (out / "rates.dat").write_text(rep.rate_table(), encoding="utf-8")
    print(f"slope D_sol {rep.slopes['D_sol']}; slope sup|M0 u - v| {rep.slopes['avg_error']}")
    failed = [e.eps for e in rep.entries if not e.ok]
    if failed:
        print(f"solver failures at eps={failed}", file=sys.stderr)
    return (1 if failed else 0), ["sweep.json", "sweep.csv", "rates.dat"]


def cmd_korn_probe(cfg: RunConfig, out: Path) -> tuple[int, list[str]]:
    from .harness import explicit_constant_check, korn_probes, scaling_suite

    mode = cfg.mode or "korn"
    eps = cfg.eps_list or (0.2, 0.1, 0.05)
    report, ok = {}, True
    if mode in ("korn", "all"):
        k = korn_probes(eps, cfg.samples, seed=cfg.seed)
        report["korn"] = k
        ok &= k["killing_flagged"]
        print(f"sphere Korn constant {k['sphere_constant']:.4g}; shell {k['shell_constant']:.4g} "
              f"(variation {100 * k['shell_variation']:.2f}%); rotation flagged: {k['killing_flagged']}")
    if mode in ("explicit", "all"):
        x = explicit_constant_check(eps, cfg.samples, seed=cfg.seed)
        report["explicit"] = x
        ok &= x["CoEx_L2"]["violations"] == 0 and x["DfEx_L2"]["violations"] == 0
    if mode in ("scaling", "all"):
        s = scaling_suite(cfg.eps_list or (0.2, 0.1, 0.05, 0.025), seed=cfg.seed)
        report["scaling"] = {k: v.as_dict() for k, v in s.items()}
        ok &= all(v.passed for v in s.values())
        for k, v in s.items():
            print(f"{'PASS' if v.passed else 'FAIL'} {k} spread={v.spread:.3g}")
    write_json(out / "probes.json", report)
    return (0 if ok else 1), ["probes.json"]


HANDLERS = {
    "ops-check": cmd_ops_check,
    "solve-sphere": cmd_solve_sphere,
    "solve-shell": cmd_solve_shell,
    "diff-study": cmd_diff_study,
    "korn-probe": cmd_korn_probe,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        file_values = parse_config_text(args.config.read_text(encoding="utf-8")) if args.config else {}
        cfg = build_config(args.command, file_values, overrides)
    except (UsageError, OSError) as exc:
        print(f"thinshell: error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        status, artifacts = HANDLERS[cfg.command](cfg, out)
    except (ConfigurationError, PreconditionError) as exc:
        print(f"thinshell: error: {exc}", file=sys.stderr)
        write_manifest(out, cfg, [], 2)
        return 2
    except ThinShellError as exc:
        print(f"thinshell: {type(exc).__name__}: {exc}", file=sys.stderr)
        write_manifest(out, cfg, [], 1)
        return 1
    write_manifest(out, cfg, artifacts, status)
    return status


if __name__ == "__main__":
    sys.exit(main())
