"""Command-line front end.

Every command writes its outputs into ``--out`` together with a
``manifest.json``.  Settings come from an optional INI file (``--config``);
command-line flags override it.  Exit status 2 signals a configuration
problem, status 3 a domain or solver failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io as pio
from .cylinder import CylinderGrid, DomainError, as_direction, direction_from_angle, verify_cell_identity
from .effective import ConsistencyError, SolverError, einstein_check, mobility, sweep
from .frontsim import (
    ExtrapolationError,
    FrontExtractionError,
    StabilityError,
    homogeneous_table,
    sharp_interface_compare,
)
from .laminar2d import gap_scan, mobility_asymptotics, upper_bound_profile
from .media import (
    ValidationError,
    cosine_laminar_medium,
    homogeneous_medium,
    laminar7_medium,
    validate,
)
from .optim import IterationLimitError
from .wave import WaveOptions, minimize, minimize_regularized

EXIT_CONFIG = 2
EXIT_RUNTIME = 3

MEDIA = ("homogeneous", "laminar7", "cosine")
COMMANDS = ("wave", "sweep", "einstein", "laminar2d", "simulate", "cell-identity", "validate")


class CLIConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Option typing


def _floats(text) -> list[float]:
    """``"a,b,c"`` or ``"start:stop:step"`` (stop included when hit exactly)."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    if ":" in text:
        parts = [float(v) for v in text.split(":")]
        if len(parts) != 3 or parts[2] == 0:
            raise CLIConfigError(f"bad range {text!r}")
        a, b, st = parts
        n = int(np.floor((b - a) / st + 1e-9)) + 1
        return [round(a + i * st, 12) for i in range(max(n, 0))]
    return [float(v) for v in text.split(",") if v.strip()]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise CLIConfigError(f"not a boolean: {text!r}")


TYPES = {
    "medium": str, "delta": _floats, "kappa": float, "c": float, "e": _floats, "theta": _floats,
    "L": float, "ns": int, "nx": int, "hs": float, "tol": float, "delta_reg": float, "eps_list": _floats,
    "T": float, "out": str, "seed": int, "h": float, "family": _bool, "hessian": _bool, "table": str,
    "init": str, "amplitude": float, "reg_below": float, "action": str,
}

DEFAULTS = {
    "medium": "homogeneous", "delta": 0.01, "kappa": 0.1, "c": 1.0, "L": 10.0, "nx": 16, "hs": 0.02,
    "delta_reg": 0.0, "seed": 0, "h": 1e-2, "family": False, "hessian": False, "init": "tanh",
    "eps_list": "0.1,0.05,0.025", "T": 0.05, "amplitude": 0.1, "reg_below": 25.0,
}

# command-specific defaults, applied before the config file
COMMAND_DEFAULTS = {
    "sweep": {"theta": "30:150:15"},
    "einstein": {"theta": "45", "delta": 0.25},
    "laminar2d": {"medium": "laminar7", "theta": "-20,-10,-5,5,10,20", "L": 4.0, "nx": 32, "delta_reg": 1e-3, "reg_below": 15.0},
    "cell-identity": {"e": "2,1"},
    "wave": {"e": "1,0"},
}


def resolve_config(args: argparse.Namespace) -> dict:
    raw = dict(DEFAULTS)
    raw.update(COMMAND_DEFAULTS.get(args.command, {}))
    user = {}
    if args.config:
        try:
            user.update(pio.read_config(args.config))
        except pio.ConfigError as exc:
            raise CLIConfigError(str(exc)) from exc
    for k, v in vars(args).items():
        if k in ("config", "command") or v is None:
            continue
        user[k] = v
    raw.update(user)
    raw["command"] = args.command
    cfg = {}
    for k, v in raw.items():
        key = "L" if k.lower() == "l" else ("T" if k == "t" else k)
        conv = TYPES.get(key)
        try:
            cfg[key] = conv(v) if conv is not None else v
        except (TypeError, ValueError) as exc:
            raise CLIConfigError(f"invalid value for {key}: {v!r}") from exc
    # delta may be a list (laminar2d gap); the scalar is its first entry
    cfg["delta_list"] = cfg["delta"]
    if not cfg["delta_list"]:
        raise CLIConfigError("delta needs at least one value")
    cfg["delta"] = cfg["delta_list"][0]
    # an explicit angle wins; einstein falls back to its default angle unless a vector is passed
    cfg["theta_given"] = "theta" in user or (args.command == "einstein" and "e" not in user)
    _check(cfg)
    if "out" not in cfg:
        cfg["out"] = str(Path("pulsewave-out") / cfg["command"])
    return cfg


def _check(cfg):
    if cfg["medium"] not in MEDIA:
        raise CLIConfigError(f"unknown medium {cfg['medium']!r}; choose from {', '.join(MEDIA)}")
    for key in ("L", "hs", "h", "T", "c"):
        if key in cfg and not cfg[key] > 0:
            raise CLIConfigError(f"{key} must be positive")
    for key in ("nx", "ns"):
        if key in cfg and cfg[key] < 2:
            raise CLIConfigError(f"{key} must be at least 2")
    if cfg.get("delta_reg", 0) < 0:
        raise CLIConfigError("delta-reg must be non-negative")
    if cfg.get("table") and not Path(cfg["table"]).is_file():
        raise CLIConfigError(f"table file not found: {cfg['table']}")


# ---------------------------------------------------------------------------
# Builders


def build_medium(cfg):
    name = cfg["medium"]
    if name == "homogeneous":
        return homogeneous_medium(cfg["c"])
    if name == "laminar7":
        return laminar7_medium(cfg["delta"], cfg["kappa"])
    return cosine_laminar_medium()


def build_grid(cfg) -> CylinderGrid:
    if "ns" in cfg:
        return CylinderGrid(cfg["L"], cfg["ns"], (cfg["nx"],))
    return CylinderGrid.from_spacing(cfg["L"], cfg["hs"], cfg["nx"])


def build_options(cfg) -> WaveOptions:
    return WaveOptions(tol=cfg.get("tol"), init=cfg["init"], seed=cfg["seed"])


def _solve(cfg, e, m, g):
    if cfg["delta_reg"] > 0:
        return minimize_regularized(e, m, g, cfg["delta_reg"], build_options(cfg))
    return minimize(e, m, g, build_options(cfg))


# ---------------------------------------------------------------------------
# Commands; each returns the list of files written


def cmd_wave(cfg, out: Path) -> list:
    from .plotting import plot_wave
    from .cylinder import magnetization_profile

    m, g = build_medium(cfg), build_grid(cfg)
    e = _pick_direction(cfg)
    sol = _solve(cfg, e, m, g)
    s, psi, _ = magnetization_profile(sol.U)
    files = [
        pio.write_field_csv(sol.U, out / "wave_field.csv"),
        pio.write_csv(out / "wave_profile.csv", ["s", "psi"], zip(s, psi)),
        pio.emit_plotdata(out / "wave_profile.dat", {"s": s, "psi": psi}, {"s": "1", "psi": "1"},
                          "x-averaged wave profile"),
        pio.write_csv(out / "wave_summary.csv",
                      ["e_1", "e_2", "energy", "mobility", "shift", "iterations", "residual"],
                      [[e[0], e[1], sol.energy, mobility(sol), sol.shift, sol.iterations, sol.residual_norm]]),
    ]
    meta = {"energy": sol.energy, "mobility": mobility(sol), "shift": sol.shift, "iterations": sol.iterations,
            "residual_norm": sol.residual_norm, "e": list(map(float, e)), "medium": m.name}
    (out / "wave.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    files += [out / "wave.json", plot_wave(sol, out / "wave.png")]
    print(f"energy {sol.energy:.10f}  mobility {meta['mobility']:.10f}  iterations {sol.iterations}")
    return files


def _pick_direction(cfg) -> np.ndarray:
    if cfg.get("theta_given"):
        return direction_from_angle(cfg["theta"][0])
    e = np.array(cfg["e"], dtype=float)
    n = np.linalg.norm(e)
    if not n > 0 or not np.isfinite(n):
        raise CLIConfigError(f"direction must be a non-zero vector, got {cfg['e']}")
    return as_direction(e / n)


def cmd_sweep(cfg, out: Path) -> list:
    from .plotting import plot_table

    m, g = build_medium(cfg), build_grid(cfg)
    dirs = [direction_from_angle(t) for t in cfg["theta"]]
    table = sweep(m, g, dirs, build_options(cfg), cfg["delta_reg"])
    ok = [r for r in table.rows if "failed" not in r.flags]
    bad = [r for r in table.rows if "failed" in r.flags]
    ok_table = type(table)(table.d, ok, table.diagnostics)
    files = [pio.write_table_csv(ok_table, out / "table.csv")]
    if bad:
        files.append(pio.write_csv(out / "failures.csv", ["e_1", "e_2", "error"],
                                   [[r.e[0], r.e[1], r.flags[-1]] for r in bad]))
    th = np.degrees([np.arctan2(r.e[1], r.e[0]) for r in ok])
    files.append(pio.emit_plotdata(out / "table.dat", {"theta": th, "phi": [r.phi for r in ok],
                                                       "mobility": [r.mobility for r in ok]},
                                   {"theta": "deg"}, "surface tension and mobility by direction"))
    (out / "diagnostics.json").write_text(json.dumps(table.diagnostics, indent=2, sort_keys=True) + "\n")
    files.append(out / "diagnostics.json")
    if ok:
        files.append(plot_table(ok_table, out / "table.png"))
    print(f"{len(ok)} rows, {len(bad)} failures")
    if bad:
        raise PartialFailure(f"{len(bad)} sweep rows failed; see failures.csv", files)
    return files


def cmd_einstein(cfg, out: Path) -> list:
    m, g = build_medium(cfg), build_grid(cfg)
    e = _pick_direction(cfg)
    rep = einstein_check(e, m, g, h=cfg["h"], opts=build_options(cfg), delta_reg=cfg["delta_reg"])
    doc = {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v) for k, v in rep.items()}
    path = out / "einstein.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"rel_error {rep['rel_error']:.3e}  mobility bound max eig {rep['mobility_bound_max_eig']:.4f}")
    return [path]


def cmd_laminar2d(cfg, out: Path) -> list:
    from .plotting import plot_branch, plot_gap, plot_trace

    action = cfg.get("action")
    files = []
    if action == "gap":
        deltas = cfg["delta_list"]
        reps = [gap_scan(d, cfg["kappa"], family=cfg["family"]) for d in deltas]
        files.append(pio.write_csv(out / "gap.csv", ["delta", "kappa", "e_min", "e_pinned", "ratio"],
                                   [[r.delta, r.kappa, r.e_min, r.e_pinned, r.ratio] for r in reps]))
        ub = [upper_bound_profile(d, cfg["kappa"]) for d in deltas]
        files.append(pio.write_csv(out / "upper_bound.csv", ["delta", "upper_bound", "upper_bound_over_sqrt_delta"],
                                   [[d, u, u / np.sqrt(d)] for d, u in zip(deltas, ub)]))
        files.append(pio.emit_plotdata(out / "gap.dat", {"delta": deltas, "e_min": [r.e_min for r in reps],
                                                         "e_pinned": [r.e_pinned for r in reps],
                                                         "ratio": [r.ratio for r in reps]},
                                       title="pinned and unpinned 1D transition energies"))
        files.append(plot_gap(reps, out / "gap.png"))
        for r in reps:
            if r.trace is not None:
                tag = pio.fmt(r.delta)
                files.append(pio.write_csv(out / f"trace_delta{tag}.csv", ["zeta", "u_quarter"],
                                           zip(r.zeta, r.trace)))
                files.append(plot_trace(r.zeta, r.trace, out / f"trace_delta{tag}.png"))
            print(f"delta {r.delta:g}: e_min {r.e_min:.6f}  e_pinned {r.e_pinned:.6f}  ratio {r.ratio:.4f}")
        return files
    if action in ("tension", "mobility"):
        m, g = build_medium(cfg), build_grid(cfg)
        rows = mobility_asymptotics(cfg["theta"], m, g, cfg["delta_reg"] or 0.0, cfg["reg_below"],
                                    build_options(cfg), hessian=cfg["hessian"])
        header = ["theta", "dphi_e2", "mobility", "sin_theta_mobility", "hess_norm_over_mobility"]
        files.append(pio.write_csv(out / "branch.csv", header,
                                   [[r.theta, r.dphi_e2, r.mobility, r.sin_theta_mobility,
                                     r.hess_norm_over_mobility] for r in rows]))
        th = [r.theta for r in rows]
        if action == "tension":
            cols = {"theta": th, "dphi_e2": [r.dphi_e2 for r in rows]}
        else:
            cols = {"theta": th, "sin_theta_mobility": [r.sin_theta_mobility for r in rows]}
        files.append(pio.emit_plotdata(out / f"{action}.dat", cols, {"theta": "deg"}))
        files.append(plot_branch(rows, out / "branch.png"))
        for r in rows:
            print(f"theta {r.theta:g}: dphi_e2 {r.dphi_e2:.6f}  sin*M {r.sin_theta_mobility:.6f}")
        return files
    raise CLIConfigError(f"laminar2d needs an action: gap, tension or mobility (got {action!r})")


def cmd_simulate(cfg, out: Path) -> list:
    from .plotting import plot_compare

    m = build_medium(cfg)
    if m.name.startswith("laminar7"):
        raise CLIConfigError("simulate supports the homogeneous and cosine media")
    if cfg.get("table"):
        table = pio.read_table_csv(cfg["table"])
    elif cfg["medium"] == "homogeneous":
        table = homogeneous_table(np.arange(20.0, 160.0 + 1e-9, 0.5), sigma=np.sqrt(cfg["c"]) * 2 * np.sqrt(2) / 3)
        if cfg["c"] != 1.0:
            raise CLIConfigError("the closed-form table assumes c = 1; pass --table for other media")
    else:
        g = build_grid(cfg)
        table = sweep(m, g, [direction_from_angle(t) for t in np.arange(50.0, 130.0 + 1e-9, 2.5)],
                      build_options(cfg))
    amp = cfg["amplitude"]
    res = sharp_interface_compare(m, table, cfg["eps_list"], cfg["T"], lambda x: amp * np.sin(2 * np.pi * x))
    files = [
        pio.write_table_csv(table, out / "table.csv"),
        pio.write_csv(out / "summary.csv", ["epsilon", "sup_error", "l2_error"],
                      zip(res.epsilon, res.sup_error, res.l2_error)),
        pio.emit_plotdata(out / "errors.dat", {"epsilon": res.epsilon, "sup_error": res.sup_error},
                          title="front error against the graph flow"),
    ]
    ref_rows = []
    for eps, (x, eta) in zip(res.epsilon, res.fronts):
        href = np.interp(x, np.r_[res.graph.x, 1.0], np.r_[res.graph.h, res.graph.h[0]])
        ref_rows += [[cfg["T"], eps, xi, hi, ei] for xi, hi, ei in zip(x, href, eta)]
    files.append(pio.write_csv(out / "fronts.csv", ["t", "epsilon", "x", "h", "eta"], ref_rows))
    rt = {"runtime_s": dict(zip(map(pio.fmt, res.epsilon), map(float, res.runtime_s))),
          "loglog_slope": res.slope()}
    (out / "runtime.json").write_text(json.dumps(rt, indent=2, sort_keys=True) + "\n")
    files += [out / "runtime.json", plot_compare(res, out / "compare.png")]
    for eps, e1 in zip(res.epsilon, res.sup_error):
        print(f"eps {eps:g}: sup error {e1:.3e}")
    return files


def cmd_cell_identity(cfg, out: Path) -> list:
    m, g = build_medium(cfg), build_grid(cfg)
    e = _pick_direction(cfg)
    sol = _solve(cfg, e, m, g)
    lhs, rhs, gap = verify_cell_identity(sol.U, e, m)
    path = pio.write_csv(out / "cell_identity.csv", ["e_1", "e_2", "cylinder", "physical", "gap"],
                         [[e[0], e[1], lhs, rhs, gap]])
    print(f"cylinder {lhs:.12f}  physical {rhs:.12f}  gap {gap:.2e}")
    return [path]


def cmd_validate(cfg, out: Path) -> list:
    m = build_medium(cfg)
    viol = validate(m)
    path = pio.write_csv(out / "violations.csv", ["kind", "location", "message"],
                         [[v.kind, v.location, v.message] for v in viol])
    print(f"{m.name}: {len(viol)} violation(s)")
    for v in viol:
        print(f"  {v.kind} at {v.location}: {v.message}")
    if viol:
        raise PartialFailure(f"{len(viol)} violation(s)", [path])
    return [path]


HANDLERS = {
    "wave": cmd_wave, "sweep": cmd_sweep, "einstein": cmd_einstein, "laminar2d": cmd_laminar2d,
    "simulate": cmd_simulate, "cell-identity": cmd_cell_identity, "validate": cmd_validate,
}


class PartialFailure(RuntimeError):
    def __init__(self, message, files):
        super().__init__(message)
        self.files = files


RUNTIME_ERRORS = (DomainError, IterationLimitError, SolverError, ConsistencyError, ValidationError,
                  FrontExtractionError, ExtrapolationError, StabilityError, FloatingPointError)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pulsewave", description="Pulsating standing waves and effective interface laws.")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    helps = {"wave": "solve one cylinder wave", "sweep": "effective table over directions",
             "einstein": "corrector Hessian versus finite differences",
             "laminar2d": "energy gap, branch limits and mobility in the laminar medium",
             "simulate": "phase field against the homogenized graph flow",
             "cell-identity": "cylinder integral versus physical average", "validate": "check a medium"}
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        if name == "laminar2d":
            sp.add_argument("action", choices=("gap", "tension", "mobility"))
        sp.add_argument("--config", help="INI file; flags override its values")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--medium", choices=MEDIA)
        sp.add_argument("--delta", help="contrast (a list for 'laminar2d gap')")
        sp.add_argument("--kappa", type=float)
        sp.add_argument("--c", type=float, help="homogeneous coefficient")
        sp.add_argument("--e", help="direction, comma separated")
        sp.add_argument("--theta", help="angle(s) in degrees: a,b,c or start:stop:step")
        sp.add_argument("--L", dest="L", type=float)
        sp.add_argument("--ns", type=int)
        sp.add_argument("--nx", type=int)
        sp.add_argument("--hs", type=float, help="s spacing when --ns is not given")
        sp.add_argument("--tol", type=float)
        sp.add_argument("--delta-reg", dest="delta_reg", type=float)
        sp.add_argument("--eps-list", dest="eps_list")
        sp.add_argument("--T", dest="T", type=float)
        sp.add_argument("--h", type=float, help="finite-difference step")
        sp.add_argument("--init", choices=("tanh", "random"))
        sp.add_argument("--table", help="EffectiveTable CSV for simulate")
        sp.add_argument("--amplitude", type=float)
        sp.add_argument("--family", action="store_const", const=True)
        sp.add_argument("--hessian", action="store_const", const=True)
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        cfg = resolve_config(args)
    except CLIConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    status = 0
    try:
        files = HANDLERS[cfg["command"]](cfg, out)
    except CLIConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PartialFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        files, status = exc.files, EXIT_RUNTIME
    except RUNTIME_ERRORS as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        files, status = [], EXIT_RUNTIME
    manifest_cfg = {k: v for k, v in cfg.items() if k not in ("theta_given",)}
    pio.write_manifest(out, manifest_cfg, time.perf_counter() - t0, [Path(f).name for f in files],
                       {"exit_status": status})
    return status


def main(argv: Optional[Sequence[str]] = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
