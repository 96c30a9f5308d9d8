"""Cross-validation experiments and reproducible result artifacts.

Monte Carlo runs of the branching system are checked against PDE
references (exact at finite t), and measured front functionals against
the closed-form expansions.  Each experiment returns plain rows plus a
summary dict; ``persist`` writes them as CSV and JSON with a manifest
carrying full provenance, and ``run_from_manifest`` re-executes a run
from that record.

Replica work is cut into fixed-size chunks and partial (sum, sum of
squares, count) records are merged in chunk order, so aggregate floats
are bit-identical for any worker count or completion order.  Worker
count comes from the ``threads`` argument, the KPPBBM_THREADS
environment variable, or machine parallelism, in that order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .bbm import simulate, observables, centering
from .constants import assemble_constants
from .expansion import r_infinity_expansion
from .pde import (solve_lab, r_infinity, extract_shift_direct,
                  x_eps_selfsimilar, default_snapshot_times)
from .profiles import (InitialProfile, box_profile, step_profile, parse_profile,
                       format_profile, hat_transform)
from .wave import solve_wave, normalize_wave, eval_U

__all__ = ["MCEstimate", "RunManifest", "SCHEMA_VERSION",
           "mckean_check", "duality_check", "martingale_suite",
           "extremal_mass_trend", "shift_routes",
           "shift_expansion_experiment",
           "persist", "run_experiment", "run_from_manifest"]

SCHEMA_VERSION = 1

# replicas per work unit.  Fixed (never derived from the worker count) so
# partial sums and their merge order are the same no matter how many
# threads run; see module docstring.
CHUNK = 512


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    replicas: int
    seed: int

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("standard error must be nonnegative")
        if self.replicas < 1:
            raise ValueError("need at least one replica")


@dataclass
class RunManifest:
    """Provenance record for one experiment run."""

    experiment: str
    config: dict
    master_seed: int | None
    versions: dict
    input_hashes: dict
    outputs: list = field(default_factory=list)
    wall_clock_s: float = 0.0
    created_utc: str = ""
    schema_version: int = SCHEMA_VERSION


def _thread_count(threads=None) -> int:
    if threads is not None:
        n = int(threads)
        if n < 1:
            raise ValueError("thread count must be >= 1")
        return n
    env = os.environ.get("KPPBBM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map_replicas(worker, replicas: int, threads=None) -> list:
    """Apply worker(range_of_replicas) per chunk; partials in chunk order."""
    chunks = [range(i, min(i + CHUNK, replicas))
              for i in range(0, replicas, CHUNK)]
    nt = _thread_count(threads)
    if nt == 1 or len(chunks) == 1:
        return [worker(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=nt) as ex:
        return list(ex.map(worker, chunks))


def _moments_estimate(parts, replicas: int, seed: int) -> MCEstimate:
    s = 0.0
    s2 = 0.0
    for p in parts:
        s += p[0]
        s2 += p[1]
    mean = s / replicas
    if replicas == 1:
        return MCEstimate(mean, 0.0, replicas, seed)
    var = max(0.0, (s2 - replicas * mean * mean) / (replicas - 1))
    return MCEstimate(mean, math.sqrt(var / replicas), replicas, seed)


def _config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _cached_curve(cache_dir, key_obj, builder):
    """Disk cache for PDE reference curves, keyed by the config hash."""
    if cache_dir is None:
        return builder()
    os.makedirs(cache_dir, exist_ok=True)
    path = os.path.join(cache_dir, f"pde-{_config_hash(key_obj)[:16]}.npy")
    if os.path.exists(path):
        arr = np.load(path)
        return arr[0], arr[1]
    x, v = builder()
    arr = np.vstack([np.asarray(x, float), np.asarray(v, float)])
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        np.save(fh, arr)
    os.replace(tmp, path)
    return arr[0], arr[1]


# ---------------------------------------------------------------------------
# MC vs PDE


def mckean_check(t: float, x_grid, replicas: int, seed: int, *,
                 h: float = 0.02, threads=None, cache_dir=None) -> dict:
    """Survival function of the maximum against the front solution.

    With heaviside initial data the branching representation is an exact
    identity: P[max > x] = u(t, x) at every finite t, so the measured
    gap is purely statistical.  Rows are (x, p_hat, se, u, |diff|/se,
    in_band) with the acceptance band max(3 se, 0.01); the absolute
    floor keeps the tails from failing on se ~ 0.
    """
    if t < 2.0:
        raise ValueError("the max-vs-front comparison wants t >= 2; below that "
                         "the step data has not developed a front")
    if replicas < 1:
        raise ValueError("need at least one replica")
    x_grid = np.asarray(x_grid, float)

    def worker(rs):
        hits = np.zeros(x_grid.size)
        for r in rs:
            hits += simulate(t, seed, r).positions.max() > x_grid
        return hits

    hits = np.zeros(x_grid.size)
    for p in _map_replicas(worker, replicas, threads):
        hits += p
    p_hat = hits / replicas
    se = np.sqrt(p_hat * (1.0 - p_hat) / replicas)

    def build():
        g = solve_lab(step_profile(1.0), 1.0, h=h, T=t, snapshot_times=[t])[-1]
        return g.x, g.values

    gx, gv = _cached_curve(cache_dir, {"exp": "mckean-pde", "t": t, "h": h}, build)
    u = np.interp(x_grid, gx, gv)
    diff = np.abs(p_hat - u)
    band = np.maximum(3.0 * se, 0.01)
    rows = []
    for i in range(x_grid.size):
        ratio = diff[i] / se[i] if se[i] > 0 else (0.0 if diff[i] <= 1e-12 else math.inf)
        rows.append((float(x_grid[i]), float(p_hat[i]), float(se[i]),
                     float(u[i]), float(ratio), bool(diff[i] <= band[i])))
    return {"t": t, "replicas": replicas, "seed": seed, "h": h,
            "rows": rows,
            "max_abs_diff": float(diff.max()),
            "worst_band_ratio": float((diff / band).max()),
            "survival_monotone": bool(np.all(np.diff(p_hat) <= 1e-12)),
            "all_in_band": bool(np.all(diff <= band))}


def duality_check(psi: InitialProfile, t: float, replicas: int, seed: int, *,
                  h: float = 0.02, threads=None, wave=None,
                  with_wave_limit: bool = True, cache_dir=None) -> dict:
    """Laplace functional of the centered particle measure vs the PDE.

    empirical ~ E[exp(-X_t(psi))]; pde_value = 1 - u(t, m(t)) with
    initial data 1 - e^(-psi) is exact at finite t; wave_limit
    1 - U(s_hat) is the t -> infinity limit, reported for qualitative
    convergence display only (the shift comes from direct front
    tracking of the same initial data).
    """
    if replicas < 1:
        raise ValueError("need at least one replica")
    m_t, _ = centering(t)

    def worker(rs):
        s = 0.0
        s2 = 0.0
        for r in rs:
            pop = simulate(t, seed, r)
            v = math.exp(-float(np.sum(psi(m_t - pop.positions))))
            s += v
            s2 += v * v
        return s, s2

    est = _moments_estimate(_map_replicas(worker, replicas, threads),
                            replicas, seed)

    hat = hat_transform(psi)
    if hat.is_zero:
        pde_value = 1.0
    else:
        def build():
            g = solve_lab(hat, 1.0, h=h, T=t, snapshot_times=[t])[-1]
            return g.x, g.values

        key = {"exp": "duality-pde", "psi": format_profile(psi), "t": t, "h": h}
        gx, gv = _cached_curve(cache_dir, key, build)
        pde_value = 1.0 - float(np.interp(m_t, gx, gv))

    wave_limit = None
    if with_wave_limit and not hat.is_zero:
        def build_limit():
            w = wave if wave is not None else normalize_wave(solve_wave(h=0.005))
            T_rel = 48.0
            snaps = solve_lab(hat, 1.0, h=h, T=T_rel,
                              snapshot_times=default_snapshot_times(T_rel, 12, 2.0))
            s_hat = extract_shift_direct(snaps, w, level=0.4).s_hat
            return np.zeros(1), np.array([1.0 - float(eval_U(w, s_hat))])

        key = {"exp": "duality-wave-limit", "psi": format_profile(psi), "h": h}
        _, lv = _cached_curve(cache_dir, key, build_limit)
        wave_limit = float(lv[0])

    gap = est.mean - pde_value
    z = gap / est.std_error if est.std_error > 0 else (0.0 if gap == 0 else math.inf)
    return {"t": t, "replicas": replicas, "seed": seed, "h": h,
            "psi": format_profile(psi),
            "empirical": est.mean, "std_error": est.std_error,
            "pde_value": pde_value, "wave_limit": wave_limit,
            "z": z, "in_band": bool(abs(gap) <= 3.0 * est.std_error)}


# ---------------------------------------------------------------------------
# Martingale and extremal-measure statistics


def martingale_suite(t_list, replicas: int, seed: int, *, threads=None) -> dict:
    """Means of the derivative and additive martingales and of N_t.

    Exact targets: E[Z_t] = 0, E[W_t] = 1, E[N_t] = e^t.  Per-row bands
    are 3 sample standard errors; both martingales are heavy-tailed at
    larger t, so the bands are honest only once the replica count
    samples the spikes (the rows carry the extremes for that reason).
    """
    if replicas < 2:
        raise ValueError("need at least two replicas for a standard error")
    rows = []
    for t in t_list:
        def worker(rs, t=t):
            acc = np.zeros(8)    # Z, Z^2, W, W^2, N, N^2, minZ, maxW
            acc[6] = math.inf
            for r in rs:
                xs = simulate(t, seed, r).positions
                g = 2.0 * t - xs
                w = np.exp(-g)
                Z = float(np.sum(g * w))
                W = float(np.sum(w))
                acc[0] += Z
                acc[1] += Z * Z
                acc[2] += W
                acc[3] += W * W
                acc[4] += xs.size
                acc[5] += float(xs.size) ** 2
                acc[6] = min(acc[6], Z)
                acc[7] = max(acc[7], W)
            return acc

        parts = _map_replicas(worker, replicas, threads)
        tot = np.zeros(8)
        tot[6] = math.inf
        for p in parts:
            tot[:6] += p[:6]
            tot[6] = min(tot[6], p[6])
            tot[7] = max(tot[7], p[7])

        def mean_se(s, s2):
            mean = s / replicas
            var = max(0.0, (s2 - replicas * mean * mean) / (replicas - 1))
            return mean, math.sqrt(var / replicas)

        mz, sez = mean_se(tot[0], tot[1])
        mw, sew = mean_se(tot[2], tot[3])
        mn, sen = mean_se(tot[4], tot[5])
        et = math.exp(t)
        rows.append({
            "t": t, "mean_Z": mz, "se_Z": sez, "mean_W": mw, "se_W": sew,
            "mean_N": mn, "se_N": sen, "exp_t": et,
            "min_Z": float(tot[6]), "max_W": float(tot[7]),
            "Z_in_band": bool(abs(mz) <= 3.0 * sez),
            "W_in_band": bool(abs(mw - 1.0) <= 3.0 * sew),
            "N_in_band": bool(abs(mn - et) <= 3.0 * sen)})
    return {"replicas": replicas, "seed": seed, "rows": rows,
            "all_in_band": all(r["Z_in_band"] and r["W_in_band"] and r["N_in_band"]
                               for r in rows)}


def extremal_mass_trend(t: float, n_list, replicas: int, seed: int, *,
                        threads=None) -> dict:
    """Rescaled mass near the front against its limit density.

    Per replica the ratio Yhat_n((-inf,0]) / Z_t is recorded (replicas
    with Z_t <= 0 are dropped and counted); the limit over t then n is
    mu((-inf,0]) = (4 pi)^(-1/2).  This is a double limit that a single
    finite t cannot honor uniformly in n: the usable window is
    1 << n << sqrt(4t), so the trend flag is qualitative by design.
    """
    if replicas < 2:
        raise ValueError("need at least two replicas")
    n_list = [int(n) for n in n_list]
    ind = step_profile(1.0)
    k = len(n_list)

    def worker(rs):
        acc = np.zeros((k, 3))       # ratio sum, ratio^2 sum, Y sum
        zsum = 0.0
        kept = 0
        for r in rs:
            pop = simulate(t, seed, r)
            first = observables(pop, ind, n_list[0])
            if first.Z_t <= 0.0:
                continue
            kept += 1
            zsum += first.Z_t
            for i, n in enumerate(n_list):
                o = first if n == n_list[0] else observables(pop, ind, n)
                ratio = o.Yhat_n / o.Z_t
                acc[i, 0] += ratio
                acc[i, 1] += ratio * ratio
                acc[i, 2] += o.Yhat_n
        return acc, zsum, kept

    parts = _map_replicas(worker, replicas, threads)
    acc = np.zeros((k, 3))
    zsum = 0.0
    kept = 0
    for a, zs, kp in parts:
        acc += a
        zsum += zs
        kept += kp
    if kept < 2:
        raise RuntimeError("all replicas had Z_t <= 0; cannot form the ratio")
    target = 1.0 / math.sqrt(4.0 * math.pi)
    rows = []
    for i, n in enumerate(n_list):
        mean = acc[i, 0] / kept
        var = max(0.0, (acc[i, 1] - kept * mean * mean) / (kept - 1))
        rows.append({"n": n, "mean_ratio": mean,
                     "se": math.sqrt(var / kept),
                     "ratio_of_means": acc[i, 2] / zsum,
                     "dist_to_target": abs(mean - target)})
    dists = [r["dist_to_target"] for r in rows]
    return {"t": t, "replicas": replicas, "kept": kept, "seed": seed,
            "target": target, "rows": rows,
            "drifts_toward_target": all(b < a for a, b in zip(dists, dists[1:]))}


def shift_routes(eps: float, profile: InitialProfile, *, h: float = 0.02,
                 T: float = 200.0, t_min: float = 40.0, n_snapshots: int = 24,
                 plateau_tol: float = 1e-3, wave=None,
                 route: str = "both") -> dict:
    """Front shift of eps * profile by two independent routes.

    direct: evolve in the lab frame and read level crossings against the
    wave.  selfsimilar: x = log(1/eps) - log r_inf(log(1/eps)).  The
    routes share no discretization beyond the profile itself, so their
    gap is a live error meter for both.
    """
    if route not in ("direct", "selfsimilar", "both"):
        raise ValueError("route must be direct, selfsimilar or both")
    if profile.is_zero:
        raise ValueError("zero initial profile has no front")
    if not 0.0 < eps < 1.0:
        raise ValueError("need 0 < eps < 1")
    out = {"eps": eps, "profile": format_profile(profile), "h": h}
    if route in ("direct", "both"):
        w = wave if wave is not None else normalize_wave(solve_wave(h=0.005))
        snaps = solve_lab(profile, eps, h=h, T=T,
                          snapshot_times=default_snapshot_times(T, n_snapshots, 2.0))
        est = extract_shift_direct(snaps, w, t_min=t_min)
        out["x_direct"] = est.s_hat
        out["direct_offsets"] = est.offsets
    if route in ("selfsimilar", "both"):
        val, rest = x_eps_selfsimilar(eps, profile, h=h,
                                      plateau_tol=plateau_tol)
        out["x_selfsimilar"] = val
        out["ell"] = math.log(1.0 / eps)
        out["r_inf"] = rest.value
        out["rinf_converged"] = rest.converged
    if route == "both":
        out["route_gap"] = abs(out["x_direct"] - out["x_selfsimilar"])
    return out


# ---------------------------------------------------------------------------
# Shift expansion vs measured functionals


def shift_expansion_experiment(profile: InitialProfile, ell_list, *,
                               h: float = 0.02, plateau_tol: float = 1e-3,
                               T=None, covariance_shift: float | None = None,
                               wave=None, consts=None) -> dict:
    """Measured moving-frame functional against the expansion hierarchy.

    Per ell: the measured plateau value, the prediction at truncation
    orders 0..2, residuals, and the implied shift ell - log(value).
    The leading coefficient comes from fitting a*ell + b*log(ell) + c
    to the measured values; a is checked against the quadrature
    constant.  ``covariance_shift = L`` adds a column measuring the
    shift of the profile translated by L, which must reproduce
    x_eps - L (runs a second evolution per ell: the identity is exact
    on the PDE side, so the gap meters the whole pipeline).
    """
    ells = [float(e) for e in ell_list]
    if len(ells) < 3:
        raise ValueError("need at least three ell values")
    if any(b <= a for a, b in zip(ells, ells[1:])):
        raise ValueError("ell values must be increasing")
    ratios = [b / a for a, b in zip(ells, ells[1:])]
    if any(abs(r / ratios[0] - 1.0) > 0.3 for r in ratios):
        raise ValueError("ell values should be geometrically spaced")
    if consts is None:
        if wave is None:
            wave = normalize_wave(solve_wave(h=0.005))
        consts = assemble_constants(profile, wave)

    shifted = profile.shifted(covariance_shift) if covariance_shift else None
    rows = []
    for ell in ells:
        est = r_infinity(ell, profile, h=h, plateau_tol=plateau_tol, T=T)
        preds = [r_infinity_expansion(ell, consts, order=k) for k in (0, 1, 2)]
        res = [abs(est.value - p) for p in preds]
        x_eps = ell - math.log(est.value)
        row = {"ell": ell, "r_inf": est.value, "converged": est.converged,
               "pred_order0": preds[0], "pred_order1": preds[1],
               "pred_order2": preds[2],
               "res_order0": res[0], "res_order1": res[1], "res_order2": res[2],
               "x_eps": x_eps}
        if shifted is not None:
            est_s = r_infinity(ell, shifted, h=h, plateau_tol=plateau_tol, T=T)
            x_s = ell - math.log(est_s.value)
            row["x_eps_shifted"] = x_s
            row["covariance_gap"] = x_s - (x_eps - covariance_shift)
        rows.append(row)

    la = np.array(ells)
    rv = np.array([r["r_inf"] for r in rows])
    M = np.column_stack([la, np.log(la), np.ones(la.size)])
    coef, *_ = np.linalg.lstsq(M, rv, rcond=None)
    leading = float(coef[0])
    r2 = np.array([r["res_order2"] for r in rows])
    decay = float("nan")
    if np.all(r2 > 0):
        slope, _ = np.polyfit(np.log(la), np.log(r2), 1)
        decay = float(-slope)
    r0 = [r["res_order0"] for r in rows]
    r1 = [r["res_order1"] for r in rows]
    summary = {
        "cbar": consts.cbar, "leading_coef": leading,
        "leading_rel_err": abs(leading - consts.cbar) / consts.cbar,
        "residual_decay_exponent": decay,
        "order0_growing": all(b > a for a, b in zip(r0, r0[1:])),
        "order1_bounded": max(r1) <= r1[0] + 1e-12,
        "order2_decreasing": all(b < a for a, b in zip(r2, r2[1:]))}
    if shifted is not None:
        summary["max_covariance_gap"] = max(abs(r["covariance_gap"]) for r in rows)
    return {"profile": format_profile(profile), "h": h,
            "plateau_tol": plateau_tol, "rows": rows, "summary": summary}


# ---------------------------------------------------------------------------
# Persistence


def _atomic_write(path: str, data: bytes):
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


def _csv_bytes(header, rows) -> bytes:
    import io
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    # repr of a builtin float is the shortest round-trip form, stable across
    # runs; numpy scalars are unwrapped first so their repr never leaks in
    for row in rows:
        w.writerow([repr(float(c)) if isinstance(c, float) else c for c in row])
    return buf.getvalue().encode()


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode()


def _self_audit(summary: dict):
    """Provenance must travel with the numbers, not in a side channel."""
    missing = [k for k in ("experiment", "config") if k not in summary]
    if not missing and "seed" not in summary["config"]:
        missing.append("config.seed")
    if missing:
        raise ValueError(f"summary fails provenance self-audit; missing: {missing}")


def persist(manifest: RunManifest, outputs: dict, out_dir: str) -> list:
    """Write tables and summary, then the manifest; all atomically.

    ``outputs`` maps file names to either (header, rows) for CSV or a
    JSON-serializable object.  The manifest is written last so its
    output list and hashes describe completed files.  Returns paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    manifest.outputs = []
    for name in sorted(outputs):
        payload = outputs[name]
        if name.endswith(".csv"):
            header, rows = payload
            data = _csv_bytes(header, rows)
        else:
            if name == "summary.json":
                _self_audit(payload)
            data = _json_bytes(payload)
        path = os.path.join(out_dir, name)
        _atomic_write(path, data)
        manifest.outputs.append({"name": name,
                                 "sha256": hashlib.sha256(data).hexdigest(),
                                 "bytes": len(data)})
        paths.append(path)
    manifest.created_utc = datetime.now(timezone.utc).isoformat()
    mpath = os.path.join(out_dir, "manifest.json")
    _atomic_write(mpath, _json_bytes(asdict(manifest)))
    paths.append(mpath)
    return paths


def _versions() -> dict:
    import scipy
    return {"kppbbm": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0]}


def _input_hashes(config: dict) -> dict:
    hashes = {"config": _config_hash(config)}
    for key in ("psi", "profile"):
        spec = config.get(key)
        if isinstance(spec, str) and spec.startswith("table:"):
            path = spec.split(":", 1)[1]
            with open(path, "rb") as fh:
                hashes[key] = hashlib.sha256(fh.read()).hexdigest()
    return hashes


# ---------------------------------------------------------------------------
# Named experiment runner (shared by the CLI and manifest re-runs)


def _run_mckean(config, threads, cache_dir):
    t = float(config["t"])
    m_t, _ = centering(t)
    lo = float(config.get("grid_lo", -10.0))
    hi = float(config.get("grid_hi", 5.0))
    npts = int(config.get("grid_n", 30))
    grid = m_t + np.linspace(lo, hi, npts)
    rep = mckean_check(t, grid, int(config["replicas"]), int(config["seed"]),
                       h=float(config.get("h", 0.02)), threads=threads,
                       cache_dir=cache_dir)
    header = ("x", "p_hat", "se", "u", "abs_diff_over_se", "in_band")
    tables = {"mckean.csv": (header, rep["rows"])}
    summary = {k: rep[k] for k in ("t", "replicas", "seed", "h", "max_abs_diff",
                                   "worst_band_ratio", "survival_monotone",
                                   "all_in_band")}
    return tables, summary, rep["all_in_band"]


def _run_duality(config, threads, cache_dir):
    psi = parse_profile(config["psi"])
    rep = duality_check(psi, float(config["t"]), int(config["replicas"]),
                        int(config["seed"]), h=float(config.get("h", 0.02)),
                        threads=threads, cache_dir=cache_dir,
                        with_wave_limit=bool(config.get("wave_limit", True)))
    header = ("t", "psi", "empirical", "std_error", "pde_value", "wave_limit", "z")
    row = [(rep["t"], rep["psi"], rep["empirical"], rep["std_error"],
            rep["pde_value"],
            rep["wave_limit"] if rep["wave_limit"] is not None else "",
            rep["z"])]
    return {"duality.csv": (header, row)}, rep, rep["in_band"]


def _run_martingales(config, threads, cache_dir):
    t_list = [float(t) for t in config.get("t_list", (2.0, 4.0, 6.0, 8.0))]
    rep = martingale_suite(t_list, int(config["replicas"]), int(config["seed"]),
                           threads=threads)
    header = ("t", "mean_Z", "se_Z", "mean_W", "se_W", "mean_N", "se_N",
              "exp_t", "Z_in_band", "W_in_band", "N_in_band")
    rows = [tuple(r[k] for k in header) for r in rep["rows"]]
    summary = {"replicas": rep["replicas"], "seed": rep["seed"],
               "all_in_band": rep["all_in_band"], "rows": rep["rows"]}
    return {"martingales.csv": (header, rows)}, summary, rep["all_in_band"]


def _run_trend(config, threads, cache_dir):
    rep = extremal_mass_trend(float(config["t"]),
                              [int(n) for n in config.get("n_list", (2, 3, 4))],
                              int(config["replicas"]), int(config["seed"]),
                              threads=threads)
    header = ("n", "mean_ratio", "se", "ratio_of_means", "dist_to_target")
    rows = [tuple(r[k] for k in header) for r in rep["rows"]]
    return {"extremal_trend.csv": (header, rows)}, rep, rep["drifts_toward_target"]


def _run_shift_expansion(config, threads, cache_dir):
    profile = parse_profile(config["profile"])
    cov = config.get("covariance_shift")
    rep = shift_expansion_experiment(
        profile, [float(e) for e in config["ell_list"]],
        h=float(config.get("h", 0.02)),
        plateau_tol=float(config.get("plateau_tol", 1e-3)),
        covariance_shift=float(cov) if cov is not None else None)
    header = ["ell", "r_inf", "converged", "pred_order0", "pred_order1",
              "pred_order2", "res_order0", "res_order1", "res_order2", "x_eps"]
    if cov is not None:
        header += ["x_eps_shifted", "covariance_gap"]
    rows = [tuple(r[k] for k in header) for r in rep["rows"]]
    ok = (rep["summary"]["order2_decreasing"]
          and all(r["converged"] for r in rep["rows"]))
    return {"shift_expansion.csv": (tuple(header), rows)}, rep, ok


_EXPERIMENTS = {
    "mckean": _run_mckean,
    "duality": _run_duality,
    "martingales": _run_martingales,
    "extremal-trend": _run_trend,
    "shift-expansion": _run_shift_expansion,
}


def run_experiment(name: str, config: dict, out_dir: str | None, *,
                   threads=None) -> dict:
    """Execute a named experiment, persist its artifacts, return summary.

    The summary row of every experiment embeds the experiment name and
    the effective config (seed included), which is also what a manifest
    re-run consumes.  PDE reference curves are cached under
    ``out_dir/cache`` keyed by config hash.  ``out_dir=None`` runs
    without writing anything.
    """
    if name not in _EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}; "
                         f"choose from {sorted(_EXPERIMENTS)}")
    if "seed" not in config:
        raise ValueError("config must carry a seed")
    t0 = time.monotonic()
    cache_dir = os.path.join(out_dir, "cache") if out_dir else None
    tables, summary, passed = _EXPERIMENTS[name](config, threads, cache_dir)
    summary = {"experiment": name, "config": config, "passed": bool(passed),
               **{k: v for k, v in summary.items() if k != "config"}}
    if out_dir:
        manifest = RunManifest(
            experiment=name, config=config, master_seed=int(config["seed"]),
            versions=_versions(), input_hashes=_input_hashes(config),
            wall_clock_s=round(time.monotonic() - t0, 3))
        outputs = dict(tables)
        outputs["summary.json"] = summary
        persist(manifest, outputs, out_dir)
    return summary


def run_from_manifest(manifest_path: str, out_dir: str, *, threads=None) -> dict:
    """Re-execute the run a manifest describes, into ``out_dir``.

    Same config and master seed, so all CSV and summary.json bytes must
    reproduce exactly; only manifest timestamps may differ.
    """
    with open(manifest_path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"manifest schema {doc.get('schema_version')!r} "
                         f"not supported (want {SCHEMA_VERSION})")
    return run_experiment(doc["experiment"], doc["config"], out_dir,
                          threads=threads)
