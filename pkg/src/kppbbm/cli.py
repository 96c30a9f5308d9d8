"""Command-line entry point exposing every module as a subcommand.

Flags mirror config-file keys one to one: ``--config file.json`` supplies
defaults, explicit flags win, and the effective merged config is echoed
into the run manifest.  Every command prints its summary as JSON on
stdout; with ``--out DIR`` it also writes manifest.json, the tabular
CSVs, and summary.json there.  Worker count comes from ``--threads``,
then KPPBBM_THREADS, then machine parallelism.

Exit codes: 0 all in-band checks passed, 1 numeric or check failure,
2 usage or invalid config.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .constants import assemble_constants
from .expansion import (shift_leading_order, shift_full_expansion,
                        r_infinity_expansion, laplace_fluctuation_target)
from .experiments import (RunManifest, run_experiment, run_from_manifest,
                          shift_routes, shift_expansion_experiment, persist,
                          _versions, _input_hashes)
from .pde import r_infinity, decompose_r_infinity
from .profiles import parse_profile, format_profile
from .wave import solve_wave, normalize_wave, wave_identity_checks

__all__ = ["run", "main"]


class UsageError(ValueError):
    pass


def _parse_list(value, cast=float):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [cast(v) for v in value]
    return [cast(v) for v in str(value).split(",") if v != ""]


def _merged_config(ns: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags; unknown file keys rejected."""
    cfg = dict(defaults)
    path = getattr(ns, "config", None)
    if path:
        try:
            with open(path) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(file_cfg) - set(defaults))
        if unknown:
            raise UsageError(f"unknown config keys {unknown}; "
                             f"valid: {sorted(defaults)}")
        cfg.update(file_cfg)
    for key in defaults:
        val = getattr(ns, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _require(cond: bool, msg: str):
    if not cond:
        raise UsageError(msg)


def _positive(cfg, *keys):
    for k in keys:
        if cfg.get(k) is not None:
            _require(float(cfg[k]) > 0, f"{k} must be positive")


def _emit(summary, out_dir, name, config, tables=None):
    """Print summary JSON; persist tables plus manifest when out_dir given."""
    if out_dir:
        manifest = RunManifest(
            experiment=name, config=config, master_seed=config.get("seed"),
            versions=_versions(), input_hashes=_input_hashes(config))
        outputs = dict(tables or {})
        outputs["summary.json"] = summary
        persist(manifest, outputs, out_dir)
    json.dump(summary, sys.stdout, sort_keys=True, indent=2)
    sys.stdout.write("\n")


# ---------------------------------------------------------------------------
# Subcommands.  Each returns True iff its in-band checks passed.


def _cmd_constants(ns) -> bool:
    cfg = _merged_config(ns, {"phi": "box:-1:0", "tol": 1e-10,
                              "wave_h": 0.005, "seed": None})
    _positive(cfg, "tol", "wave_h")
    profile = parse_profile(cfg["phi"])
    _require(not profile.is_zero, "phi must be a nonzero profile")
    wave = normalize_wave(solve_wave(h=float(cfg["wave_h"])))
    consts = assemble_constants(profile, wave, tol=float(cfg["tol"]))
    summary = {"experiment": "constants", "config": cfg, "passed": True,
               **consts.to_dict()}
    _emit(summary, ns.out, "constants", cfg)
    return True


def _cmd_wave(ns) -> bool:
    cfg = _merged_config(ns, {"h": 0.005, "xmin": -40.0, "xmax": 40.0,
                              "seed": None})
    _positive(cfg, "h")
    _require(cfg["xmin"] < 0 < cfg["xmax"], "need xmin < 0 < xmax")
    h = float(cfg["h"])
    wave = normalize_wave(solve_wave(x_min=float(cfg["xmin"]),
                                     x_max=float(cfg["xmax"]), h=h))
    checks = wave_identity_checks(wave)
    # identity residuals are O(h^2); bands anchored at the h = 0.005
    # reference accuracy and scaled for coarser grids
    scale = max(1.0, (h / 0.005) ** 2)
    ok = (checks["residual_mass"] <= 1e-4 * scale
          and checks["residual_first_moment"] <= 1e-3 * scale)
    summary = {"experiment": "wave", "config": cfg, "passed": bool(ok),
               "k0": wave.k0, "n_grid": int(wave.x.size), **checks}
    _emit(summary, ns.out, "wave", cfg)
    return ok


def _cmd_shift(ns) -> bool:
    cfg = _merged_config(ns, {"phi": "box:-1:0", "eps": 1e-4, "route": "both",
                              "h": 0.02, "T": 200.0, "t_min": 40.0,
                              "snapshots": 24, "plateau_tol": 1e-3,
                              "seed": None})
    _positive(cfg, "eps", "h", "T", "t_min", "plateau_tol")
    _require(0.0 < float(cfg["eps"]) < 1.0, "eps must lie in (0, 1)")
    _require(cfg["route"] in ("direct", "selfsimilar", "both"),
             "route must be direct, selfsimilar or both")
    _require(int(cfg["snapshots"]) >= 4, "need at least 4 snapshots")
    profile = parse_profile(cfg["phi"])
    res = shift_routes(float(cfg["eps"]), profile, h=float(cfg["h"]),
                       T=float(cfg["T"]), t_min=float(cfg["t_min"]),
                       n_snapshots=int(cfg["snapshots"]),
                       plateau_tol=float(cfg["plateau_tol"]),
                       route=cfg["route"])
    offsets = res.pop("direct_offsets", None)
    tables = {}
    if offsets is not None:
        tables["shift_offsets.csv"] = (("t", "offset"),
                                       [tuple(map(float, row)) for row in offsets])
    ok = res.get("route_gap", 0.0) <= 0.1 and res.get("rinf_converged", True)
    summary = {"experiment": "shift", "config": cfg, "passed": bool(ok), **res}
    _emit(summary, ns.out, "shift", cfg, tables)
    return ok


def _cmd_rinf(ns) -> bool:
    cfg = _merged_config(ns, {"phi": "box:-1:0", "ell": 6.0, "h": 0.02,
                              "T": None, "plateau_tol": 1e-3, "seed": None})
    _positive(cfg, "ell", "h", "T", "plateau_tol")
    profile = parse_profile(cfg["phi"])
    est = r_infinity(float(cfg["ell"]), profile, h=float(cfg["h"]),
                     T=float(cfg["T"]) if cfg["T"] is not None else None,
                     plateau_tol=float(cfg["plateau_tol"]))
    diag = {k: v for k, v in est.diagnostics.items()
            if isinstance(v, (int, float, str, bool))}
    tables = {"rinf_samples.csv": (("tau", "moment", "adjoint_moment"),
                                   [tuple(map(float, r)) for r in est.tau_samples])}
    summary = {"experiment": "rinf", "config": cfg,
               "passed": bool(est.converged), "ell": est.ell,
               "r_inf": est.value, "converged": bool(est.converged), **diag}
    _emit(summary, ns.out, "rinf", cfg, tables)
    return bool(est.converged)


def _cmd_decompose(ns) -> bool:
    cfg = _merged_config(ns, {"phi": "box:-1:0", "ell": 6.0, "h": 0.02,
                              "T": None, "plateau_tol": 1e-3, "seed": None})
    _positive(cfg, "ell", "h", "T", "plateau_tol")
    profile = parse_profile(cfg["phi"])
    T = float(cfg["T"]) if cfg["T"] is not None else None
    est = r_infinity(float(cfg["ell"]), profile, h=float(cfg["h"]), T=T,
                     plateau_tol=float(cfg["plateau_tol"]))
    res = decompose_r_infinity(float(cfg["ell"]), profile, rinf=est)
    res.pop("estimate")
    header = ("ell", "r_inf", "Q_ell", "Y_ell", "E_ell")
    tables = {"decompose.csv": (header, [tuple(res[k] for k in header)])}
    ok = bool(res["converged"])
    summary = {"experiment": "decompose", "config": cfg, "passed": ok, **res}
    _emit(summary, ns.out, "decompose", cfg, tables)
    return ok


def _stochastic(ns, name, defaults, builder) -> bool:
    cfg = _merged_config(ns, defaults)
    _require(cfg.get("seed") is not None, "a seed is required")
    _require(int(cfg["replicas"]) >= 1, "replicas must be >= 1")
    summary = run_experiment(name, builder(cfg), ns.out, threads=ns.threads)
    json.dump(summary, sys.stdout, sort_keys=True, indent=2)
    sys.stdout.write("\n")
    return bool(summary["passed"])


def _cmd_mckean(ns) -> bool:
    defaults = {"t": 4.0, "replicas": 10000, "seed": None, "h": 0.02,
                "grid_lo": -10.0, "grid_hi": 5.0, "grid_n": 30}
    def build(cfg):
        _positive(cfg, "t", "h")
        _require(float(cfg["grid_lo"]) < float(cfg["grid_hi"]),
                 "grid_lo must be below grid_hi")
        _require(int(cfg["grid_n"]) >= 2, "grid_n must be >= 2")
        return {"t": float(cfg["t"]), "replicas": int(cfg["replicas"]),
                "seed": int(cfg["seed"]), "h": float(cfg["h"]),
                "grid_lo": float(cfg["grid_lo"]),
                "grid_hi": float(cfg["grid_hi"]), "grid_n": int(cfg["grid_n"])}
    return _stochastic(ns, "mckean", defaults, build)


def _cmd_duality(ns) -> bool:
    defaults = {"psi": "box:-1:0", "t": 6.0, "replicas": 10000, "seed": None,
                "h": 0.02, "wave_limit": True}
    def build(cfg):
        _positive(cfg, "t", "h")
        parse_profile(cfg["psi"])
        return {"psi": cfg["psi"], "t": float(cfg["t"]),
                "replicas": int(cfg["replicas"]), "seed": int(cfg["seed"]),
                "h": float(cfg["h"]), "wave_limit": bool(cfg["wave_limit"])}
    return _stochastic(ns, "duality", defaults, build)


def _cmd_bbm(ns) -> bool:
    defaults = {"t_list": "2,4,6,8", "replicas": 10000, "seed": None,
                "trend": False, "t": 12.0, "n_list": "2,3,4"}
    cfg = _merged_config(ns, defaults)
    _require(cfg.get("seed") is not None, "a seed is required")
    _require(int(cfg["replicas"]) >= 2, "replicas must be >= 2")
    if cfg["trend"]:
        _positive(cfg, "t")
        config = {"t": float(cfg["t"]),
                  "n_list": _parse_list(cfg["n_list"], int),
                  "replicas": int(cfg["replicas"]), "seed": int(cfg["seed"])}
        name = "extremal-trend"
    else:
        t_list = _parse_list(cfg["t_list"], float)
        _require(t_list and all(t > 0 for t in t_list),
                 "t_list must hold positive times")
        config = {"t_list": t_list, "replicas": int(cfg["replicas"]),
                  "seed": int(cfg["seed"])}
        name = "martingales"
    summary = run_experiment(name, config, ns.out, threads=ns.threads)
    json.dump(summary, sys.stdout, sort_keys=True, indent=2)
    sys.stdout.write("\n")
    return bool(summary["passed"])


def _cmd_expand(ns) -> bool:
    cfg = _merged_config(ns, {"phi": "box:-1:0", "ell_list": "10,20,40",
                              "eps_list": "1e-3,1e-4,1e-5",
                              "lambda_list": "0.25,0.5,1,2", "Z": 1.0,
                              "wave_h": 0.005, "measured": False,
                              "h": 0.02, "plateau_tol": 1e-3, "seed": None})
    _positive(cfg, "Z", "wave_h", "h", "plateau_tol")
    profile = parse_profile(cfg["phi"])
    wave = normalize_wave(solve_wave(h=float(cfg["wave_h"])))
    consts = assemble_constants(profile, wave)
    ells = _parse_list(cfg["ell_list"])
    epss = _parse_list(cfg["eps_list"])
    lams = _parse_list(cfg["lambda_list"])
    _require(all(e >= 2 for e in ells), "ell values must be >= 2")
    _require(all(0 < e < math.exp(-2) for e in epss),
             "eps values must lie in (0, e^-2)")
    _require(all(l >= 0 for l in lams), "lambda values must be nonnegative")
    Z = float(cfg["Z"])
    tables = {
        "expand_ell.csv": (("ell", "order0", "order1", "order2"),
                           [(e, r_infinity_expansion(e, consts, 0),
                             r_infinity_expansion(e, consts, 1),
                             r_infinity_expansion(e, consts, 2)) for e in ells]),
        "expand_eps.csv": (("eps", "leading", "full"),
                           [(e, shift_leading_order(e, consts),
                             shift_full_expansion(e, consts)) for e in epss]),
        "expand_lambda.csv": (("lam", "fluctuation_laplace"),
                              [(l, laplace_fluctuation_target(l, profile, Z, consts))
                               for l in lams])}
    summary = {"experiment": "expand", "config": cfg, "passed": True,
               "constants": consts.to_dict(), "n_ell": len(ells),
               "n_eps": len(epss), "n_lambda": len(lams)}
    ok = True
    if cfg["measured"]:
        rep = shift_expansion_experiment(profile, ells, h=float(cfg["h"]),
                                         plateau_tol=float(cfg["plateau_tol"]),
                                         wave=wave, consts=consts)
        header = ("ell", "r_inf", "converged", "pred_order0", "pred_order1",
                  "pred_order2", "res_order0", "res_order1", "res_order2",
                  "x_eps")
        tables["shift_expansion.csv"] = (header,
                                         [tuple(r[k] for k in header)
                                          for r in rep["rows"]])
        summary["measured"] = rep["summary"]
        ok = bool(rep["summary"]["order2_decreasing"])
        summary["passed"] = ok
    _emit(summary, ns.out, "expand", cfg, tables)
    return ok


def _cmd_report(ns) -> bool:
    rows = []
    ok = True
    for d in ns.dirs:
        path = f"{d.rstrip('/')}/summary.json"
        try:
            with open(path) as fh:
                s = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read {path}: {exc}") from exc
        passed = bool(s.get("passed", False))
        ok = ok and passed
        rows.append({"dir": d, "experiment": s.get("experiment", "?"),
                     "passed": passed})
    summary = {"experiment": "report", "config": {"dirs": list(ns.dirs),
                                                  "seed": None},
               "passed": ok, "runs": rows}
    json.dump(summary, sys.stdout, sort_keys=True, indent=2)
    sys.stdout.write("\n")
    return ok


def _cmd_rerun(ns) -> bool:
    summary = run_from_manifest(ns.manifest, ns.out, threads=ns.threads)
    json.dump(summary, sys.stdout, sort_keys=True, indent=2)
    sys.stdout.write("\n")
    return bool(summary["passed"])


# ---------------------------------------------------------------------------
# Parser


def _add_common(p):
    p.add_argument("--config", help="JSON file with defaults for this command")
    p.add_argument("--out", help="directory for manifest.json, CSVs, summary.json")
    p.add_argument("--threads", type=int,
                   help="worker count (default: KPPBBM_THREADS or machine)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kppbbm",
        description="Numerical laboratory for slowly pulled fronts and "
                    "branching extremes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="expansion constants for a profile")
    p.add_argument("--phi")
    p.add_argument("--tol", type=float)
    p.add_argument("--wave-h", dest="wave_h", type=float)
    _add_common(p)
    p.set_defaults(fn=_cmd_constants)

    p = sub.add_parser("wave", help="minimal wave solve and identity residuals")
    p.add_argument("--h", type=float)
    p.add_argument("--xmin", type=float)
    p.add_argument("--xmax", type=float)
    _add_common(p)
    p.set_defaults(fn=_cmd_wave)

    p = sub.add_parser("shift", help="front shift of eps * phi by two routes")
    p.add_argument("--phi")
    p.add_argument("--eps", type=float)
    p.add_argument("--route", choices=("direct", "selfsimilar", "both"))
    p.add_argument("--h", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--t-min", dest="t_min", type=float)
    p.add_argument("--snapshots", type=int)
    p.add_argument("--plateau-tol", dest="plateau_tol", type=float)
    _add_common(p)
    p.set_defaults(fn=_cmd_shift)

    p = sub.add_parser("rinf", help="first-moment plateau of a shifted profile")
    p.add_argument("--phi")
    p.add_argument("--ell", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--plateau-tol", dest="plateau_tol", type=float)
    _add_common(p)
    p.set_defaults(fn=_cmd_rinf)

    p = sub.add_parser("decompose",
                       help="split the plateau into pairing + absorption")
    p.add_argument("--phi")
    p.add_argument("--ell", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--plateau-tol", dest="plateau_tol", type=float)
    _add_common(p)
    p.set_defaults(fn=_cmd_decompose)

    p = sub.add_parser("bbm", help="martingale suite or extremal mass trend")
    p.add_argument("--t-list", dest="t_list")
    p.add_argument("--replicas", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--trend", action="store_const", const=True, default=None)
    p.add_argument("--t", type=float)
    p.add_argument("--n-list", dest="n_list")
    _add_common(p)
    p.set_defaults(fn=_cmd_bbm)

    p = sub.add_parser("mckean", help="law of the maximum vs the front")
    p.add_argument("--t", type=float)
    p.add_argument("--replicas", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--h", type=float)
    p.add_argument("--grid-lo", dest="grid_lo", type=float)
    p.add_argument("--grid-hi", dest="grid_hi", type=float)
    p.add_argument("--grid-n", dest="grid_n", type=int)
    _add_common(p)
    p.set_defaults(fn=_cmd_mckean)

    p = sub.add_parser("duality", help="Laplace functional vs the PDE value")
    p.add_argument("--psi")
    p.add_argument("--t", type=float)
    p.add_argument("--replicas", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--h", type=float)
    p.add_argument("--no-wave-limit", dest="wave_limit",
                   action="store_const", const=False, default=None)
    _add_common(p)
    p.set_defaults(fn=_cmd_duality)

    p = sub.add_parser("expand", help="expansion tables over ell/eps/lambda")
    p.add_argument("--phi")
    p.add_argument("--ell-list", dest="ell_list")
    p.add_argument("--eps-list", dest="eps_list")
    p.add_argument("--lambda-list", dest="lambda_list")
    p.add_argument("--Z", type=float)
    p.add_argument("--wave-h", dest="wave_h", type=float)
    p.add_argument("--measured", action="store_const", const=True,
                   default=None,
                   help="also measure r_inf per ell and compare")
    p.add_argument("--h", type=float)
    p.add_argument("--plateau-tol", dest="plateau_tol", type=float)
    _add_common(p)
    p.set_defaults(fn=_cmd_expand)

    p = sub.add_parser("report", help="aggregate pass/fail over run dirs")
    p.add_argument("dirs", nargs="+")
    p.set_defaults(fn=_cmd_report, out=None, threads=None)

    p = sub.add_parser("rerun", help="re-execute a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out")
    p.add_argument("--threads", type=int)
    p.set_defaults(fn=_cmd_rerun)

    return parser


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        ok = ns.fn(ns)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0 if ok else 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
