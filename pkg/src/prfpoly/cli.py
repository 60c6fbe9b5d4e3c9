"""Command-line entry point: ``prfpoly <subcommand> ...``.

Tabular results go out as TSV, structured ones as JSON.  When ``--out`` is
given a manifest ``<out>.manifest.json`` is written next to it (``--manifest``
chooses another path, also for stdout runs).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import io
import json
import os
import platform
import sys
import warnings
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .diffusion import GridTooCoarseWarning, KilledSemigroup, absorption_cdf, dual_entrance_cdf, scale_fn
from .inference import FitConfig, fit_mle, profile_ci, simulate_tables
from .ingest import (AlignmentError, classify_sites, count_tables, format_table_tsv,
                     parse_alignment, parse_table_tsv, read_species_map, species_map_from_lists)
from .moran import expected_site_counts, simulate_divergence, simulate_field, stationary_omega
from .prf import fixation_mean, fixation_mean_alt, prf_density
from .sampling import table_means
from .types import CountTable, FiniteParams, Grid, InitialMeasure, ScaledParams, default_grid


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def resolve_threads(flag) -> int:
    if flag is not None:
        n = int(flag)
    else:
        env = os.environ.get("PRF_THREADS", "")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise UsageError(f"PRF_THREADS must be an integer, got {env!r}")
    if n < 1:
        raise UsageError("thread count must be >= 1")
    return n


def _load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"config file is not valid JSON: {e}")


def _grid(args, t: float) -> Grid:
    cfg = getattr(args, "_config", {})
    J = args.J if getattr(args, "J", None) is not None else cfg.get("J")
    dt = args.dt if getattr(args, "dt", None) is not None else cfg.get("dt")
    if J is None and dt is None:
        return default_grid(t)
    g = default_grid(t, int(J) if J is not None else 800)
    return Grid(g.nodes, float(dt) if dt is not None else g.dt)


def _grid_meta(g: Grid) -> dict:
    return {"J": g.J, "dt": g.dt, "uniform": g.is_uniform,
            "spatial_extrapolation": KilledSemigroup(0.0, g).can_extrapolate()}


def _initial(kind: str, theta: float, gamma: float) -> InitialMeasure:
    if kind == "zero":
        return InitialMeasure.zero()
    return InitialMeasure.equilibrium(theta, gamma)


def _tsv(header, rows) -> str:
    buf = io.StringIO()
    buf.write("\t".join(header) + "\n")
    for r in rows:
        buf.write("\t".join(_fmt(v) for v in r) + "\n")
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


# ---------------------------------------------------------------------------
# subcommands; each returns (text, format, parameters, grid meta, inputs)


def cmd_oracle(args):
    if args.N is None:
        raise UsageError("oracle needs --N")
    if args.sigma is not None or args.mu is not None or args.steps is not None:
        fp = FiniteParams(args.N, args.sigma or 0.0, args.mu or 0.0, args.steps or 0)
    else:
        fp = FiniteParams.from_scaled(args.N, ScaledParams(args.t, args.theta, args.gamma))
    omega = stationary_omega(fp) if args.initial == "stationary" else None
    field = expected_site_counts(fp, omega)
    params = {"finite": fp.to_dict(), "initial": args.initial}
    if args.format == "json":
        body = {"params": params, "expected": field.expected, "fixed_mean": field.fixed_mean,
                "frequencies": field.frequencies()}
        return _dumps(body), params, {}
    rows = [(j, j / fp.N, e) for j, e in enumerate(field.expected, start=1)]
    rows.append((fp.N, 1.0, field.fixed_mean))
    return _tsv(["j", "x", "expected"], rows), params, {}


def cmd_density(args):
    g = _grid(args, args.t)
    gamma = args.gamma
    params = {"t": args.t, "gamma": gamma, "kind": args.kind}
    if args.kind == "dual-entrance":
        sg = KilledSemigroup(gamma, g)
        from .diffusion import check_monotone_cdf, dual_entrance_curve
        times, cdf = dual_entrance_curve(sg.solve(lambda y: scale_fn(y, gamma), args.t, keep="final"))
        check_monotone_cdf(cdf)
        sel = slice(None, None, max(1, args.stride))
        idx = np.arange(times.size)[sel]
        if idx[-1] != times.size - 1:
            idx = np.append(idx, times.size - 1)
        return _tsv(["t", "cdf"], zip(times[idx], cdf[idx])), params, _grid_meta(g)
    if args.kind == "absorption":
        p0, p1 = absorption_cdf(None, args.t, gamma, g)
        rows = zip(np.full(g.J + 1, args.t), g.nodes, p0, p1)
        return _tsv(["t", "x", "p0", "p1"], rows), params, _grid_meta(g)
    payoffs = {"one": 1.0, "yq": lambda y: y * (1 - y), "y2q": lambda y: y * y * (1 - y),
               "s": lambda y: scale_fn(y, gamma)}
    surf = KilledSemigroup(gamma, g).solve(payoffs[args.payoff], args.t, keep=max(1, args.stride))
    params["payoff"] = args.payoff
    rows = ((t, x, v) for k, t in enumerate(surf.times) for x, v in zip(surf.x, surf.values[k, :, 0]))
    return _tsv(["t", "x", "value"], rows), params, _grid_meta(g)


def cmd_prf(args):
    beta = ScaledParams(args.t, args.theta, args.gamma)
    g = _grid(args, args.t)
    nu = _initial(args.initial, args.theta, args.gamma)
    params = {"beta": beta.to_dict(), "initial": nu.to_dict()}
    if args.what == "fixations":
        fm = fixation_mean(beta, nu, g)
        alt = fixation_mean_alt(beta, nu, g)
        body = {"params": params, "grid": _grid_meta(g), "fixations": fm.to_dict(),
                "fixations_alt": alt.to_dict()}
        return _dumps(body), params, _grid_meta(g)
    d = prf_density(beta, nu, g)
    leb = d.lebesgue()
    rows = zip(d.y, d.legacy, d.new, d.values, leb)
    return _tsv(["y", "legacy", "new", "total", "lebesgue"], rows), params, _grid_meta(g)


def _species_map(args) -> dict:
    if args.species_map:
        p = Path(args.species_map)
        if not p.exists():
            raise UsageError(f"species map not found: {p}")
        return read_species_map(p.read_text())
    if not args.species1 or not args.species2:
        raise UsageError("give --species-map or both --species1 and --species2")
    split = lambda s: [x for x in s.split(",") if x]  # noqa: E731
    return species_map_from_lists(split(args.species1), split(args.species2))


def cmd_tables(args):
    if args.mode == "count":
        if not args.fasta:
            raise UsageError("tables count needs --fasta")
        p = Path(args.fasta)
        if not p.exists():
            raise UsageError(f"FASTA file not found: {p}")
        al = parse_alignment(p.read_text(), _species_map(args), args.offset)
        obs = count_tables(classify_sites(al), args.double_count_shared)
        params = {"fasta": str(p), "offset": args.offset, "m": al.m, "n": al.n}
        if args.format == "json":
            return _dumps(obs.to_dict()), params, {}
        tab = obs.dprs if args.layout == "DPRS" else obs.dohrs
        return format_table_tsv(tab), params, {}
    if not args.expected:
        raise UsageError("tables needs --expected or the 'count' mode")
    for name in ("t", "theta_s", "theta_r", "m", "n"):
        if getattr(args, name) is None:
            raise UsageError(f"tables --expected needs --{name.replace('_', '-')}")
    bs = ScaledParams(args.t, args.theta_s, 0.0)
    br = ScaledParams(args.t, args.theta_r, args.gamma)
    g = _grid(args, args.t)
    nu_s = _initial(args.initial, args.theta_s, 0.0)
    nu_r = _initial(args.initial, args.theta_r, args.gamma)
    et = table_means(args.m, args.n, bs, br, nu_s, nu_r, g)
    params = {"beta_s": bs.to_dict(), "beta_r": br.to_dict(), "m": args.m, "n": args.n,
              "initial": args.initial}
    if args.format == "tsv":
        tab = et.dprs(args.double_count_shared) if args.layout == "DPRS" else et.to_count_table()
        return format_table_tsv(tab), params, _grid_meta(g)
    return _dumps(et.to_dict()), params, _grid_meta(g)


def _read_tables(paths, m, n) -> list:
    tables = []
    for path in paths:
        p = Path(path)
        if not p.exists():
            raise UsageError(f"table file not found: {p}")
        text = p.read_text()
        if p.suffix == ".json":
            data = json.loads(text)
            items = data if isinstance(data, list) else data.get("tables", [data])
            tables += [CountTable.from_dict(d) for d in items]
        else:
            if m is None or n is None:
                raise UsageError("TSV tables need -m and -n")
            # several tables in one file are separated by blank lines
            for block in [b for b in text.split("\n\n") if b.strip()]:
                tables.append(parse_table_tsv(block, m, n))
    if not tables:
        raise UsageError("no tables read")
    return tables


def _fit_config(args) -> FitConfig:
    cfg = dict(getattr(args, "_config", {}).get("fit", {}))
    for k in ("shared_theta_s", "shared_theta_r", "shared_gamma"):
        if k.replace("shared_", "") in (args.shared or []):
            cfg[k] = True
    cfg.setdefault("seed", args.seed)
    if args.starts is not None:
        cfg["n_starts"] = args.starts
    if args.J is not None:
        cfg["J"] = args.J
    return FitConfig.from_dict(cfg)


def cmd_fit(args):
    tables = _read_tables(args.inputs, args.m, args.n)
    cfg = _fit_config(args)
    res = fit_mle(tables, cfg)
    body = res.to_dict()
    if args.profile:
        ci = profile_ci(tables, cfg, args.profile, args.level, fit=res)
        body["profile"] = ci.to_dict()
    params = {"loci": len(tables), "config": cfg.to_dict()}
    return _dumps(body), params, {"J": cfg.J, "steps": cfg.steps}


def cmd_simulate(args):
    rows = []
    if args.what == "field":
        fp = FiniteParams.from_scaled(args.N, ScaledParams(args.t, args.theta, args.gamma))
        omega = stationary_omega(fp) if args.initial == "stationary" else None
        f = simulate_field(fp, omega, seed=args.seed, reps=args.reps)
        params = {"finite": fp.to_dict(), "reps": args.reps, "initial": args.initial}
        rows = [(j, j / fp.N, e, v) for j, (e, v) in enumerate(zip(f.expected, f.variance), start=1)]
        rows.append((fp.N, 1.0, f.fixed_mean, f.fixed_variance))
        return _tsv(["j", "x", "mean", "variance"], rows), params, {}
    if args.what == "moran-tables":
        out = {}
        for c, theta, gamma in (("s", args.theta_s, 0.0), ("r", args.theta_r, args.gamma)):
            fp = FiniteParams.from_scaled(args.N, ScaledParams(args.t, theta, gamma))
            out[c] = simulate_divergence(fp, args.m, args.n, args.loci,
                                         seed=args.seed + (0 if c == "s" else 1))
        params = {"N": args.N, "t": args.t, "theta_s": args.theta_s, "theta_r": args.theta_r,
                  "gamma": args.gamma, "m": args.m, "n": args.n, "loci": args.loci}
        blocks = []
        for i in range(args.loci):
            d = {"K_s": int(out["s"][i, 0]), "O_s": int(out["s"][i, 1]), "H_s": int(out["s"][i, 2]),
                 "K_r": int(out["r"][i, 0]), "O_r": int(out["r"][i, 1]), "H_r": int(out["r"][i, 2])}
            blocks.append(format_table_tsv(CountTable("DOHRS", args.m, args.n, d)))
        return "\n".join(blocks), params, {}
    bs = ScaledParams(args.t, args.theta_s, 0.0)
    br = ScaledParams(args.t, args.theta_r, args.gamma)
    g = _grid(args, args.t)
    tabs = simulate_tables(bs, br, args.m, args.n, args.loci, seed=args.seed, grid=g)
    params = {"beta_s": bs.to_dict(), "beta_r": br.to_dict(), "m": args.m, "n": args.n,
              "loci": args.loci}
    return "\n".join(format_table_tsv(t) for t in tabs), params, _grid_meta(g)


# ---------------------------------------------------------------------------
# parser


def _add_common(p, grid=True):
    p.add_argument("-o", "--out", help="output path (default: stdout)")
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    p.add_argument("--config", help="JSON config with grid settings (J, dt) and fit options")
    p.add_argument("--seed", type=int, default=0)
    if grid:
        p.add_argument("--J", type=int, help="number of grid cells")
        p.add_argument("--dt", type=float, help="solver time step")


def _add_beta(p, t_default=None):
    p.add_argument("-t", "--t", type=float, default=t_default, required=t_default is None)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prfpoly",
                                 description="Time-dependent Poisson random field tools.")
    ap.add_argument("--version", action="version", version=f"prfpoly {__version__}")
    ap.add_argument("--threads", type=int, help="worker cap (fallback: PRF_THREADS, else 1)")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("oracle", help="exact finite-N site-count means")
    _add_common(p, grid=False)
    p.add_argument("--N", type=int)
    _add_beta(p, t_default=0.2)
    p.add_argument("--sigma", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--initial", choices=["zero", "stationary"], default="zero")
    p.add_argument("--format", choices=["tsv", "json"], default="tsv")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("density", help="killed-semigroup surfaces and absorption CDFs")
    _add_common(p)
    _add_beta(p)
    p.add_argument("--kind", choices=["semigroup", "absorption", "dual-entrance"], default="semigroup")
    p.add_argument("--payoff", choices=["one", "yq", "y2q", "s"], default="one")
    p.add_argument("--stride", type=int, default=100, help="keep every k-th time level")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("prf", help="PRF mean density or fixation means")
    _add_common(p)
    _add_beta(p)
    p.add_argument("--what", choices=["density", "fixations"], default="density")
    p.add_argument("--initial", choices=["equilibrium", "zero"], default="equilibrium")
    p.set_defaults(func=cmd_prf)

    p = sub.add_parser("tables", help="expected tables (--expected) or counts from FASTA (count)")
    _add_common(p)
    p.add_argument("mode", nargs="?", choices=["count"])
    p.add_argument("--expected", action="store_true")
    p.add_argument("-t", "--t", type=float)
    p.add_argument("--theta-s", type=float)
    p.add_argument("--theta-r", type=float)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("-m", type=int)
    p.add_argument("-n", type=int)
    p.add_argument("--initial", choices=["equilibrium", "zero"], default="equilibrium")
    p.add_argument("--layout", choices=["DOHRS", "DPRS"], default="DOHRS")
    p.add_argument("--double-count-shared", action="store_true")
    p.add_argument("--format", choices=["json", "tsv"])
    p.add_argument("--fasta")
    p.add_argument("--species1", help="comma-separated record ids of species 1")
    p.add_argument("--species2", help="comma-separated record ids of species 2")
    p.add_argument("--species-map", help="two-column TSV: id, species (1 or 2)")
    p.add_argument("--offset", type=int, default=0, help="reading-frame offset")
    p.set_defaults(func=cmd_tables)

    p = sub.add_parser("fit", help="maximum-likelihood fit of observed tables")
    _add_common(p, grid=False)
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("-m", type=int)
    p.add_argument("-n", type=int)
    p.add_argument("--shared", nargs="*", choices=["theta_s", "theta_r", "gamma"])
    p.add_argument("--starts", type=int)
    p.add_argument("--J", type=int, help="grid cells used inside the fit")
    p.add_argument("--profile", choices=["t", "gamma", "theta_s", "theta_r"])
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="Monte Carlo: Moran field, Moran tables or Poisson tables")
    _add_common(p)
    p.add_argument("what", choices=["field", "moran-tables", "poisson-tables"])
    p.add_argument("--N", type=int, default=100)
    _add_beta(p, t_default=0.2)
    p.add_argument("--theta-s", type=float, default=1.0)
    p.add_argument("--theta-r", type=float, default=1.0)
    p.add_argument("-m", type=int, default=5)
    p.add_argument("-n", type=int, default=5)
    p.add_argument("--loci", type=int, default=10)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--initial", choices=["zero", "stationary"], default="stationary")
    p.set_defaults(func=cmd_simulate)
    return ap


def _manifest(args, argv, params, grid_meta, threads) -> dict:
    inputs = {}
    for name in ("fasta", "species_map", "config"):
        v = getattr(args, name, None)
        if v:
            inputs[name] = {"path": str(v), "sha256": _sha256(Path(v))}
    for v in getattr(args, "inputs", None) or []:
        inputs.setdefault("tables", []).append({"path": str(v), "sha256": _sha256(Path(v))})
    return {
        "command": args.command,
        "argv": list(argv),
        "parameters": params,
        "seed": getattr(args, "seed", None),
        "threads": threads,
        "grid": grid_meta,
        "inputs": inputs,
        "versions": {"prfpoly": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    if not argv:
        ap.print_usage(sys.stderr)
        return 2
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    if args.command is None:
        ap.print_usage(sys.stderr)
        return 2
    try:
        threads = resolve_threads(args.threads)
        args._config = _load_config(getattr(args, "config", None))
        if args.command == "tables" and args.format is None:
            args.format = "tsv" if args.mode == "count" else "json"
        with warnings.catch_warnings():
            warnings.simplefilter("error", GridTooCoarseWarning)
            text, params, gmeta = args.func(args)
    except (UsageError, AlignmentError) as e:
        print(f"prfpoly: error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"prfpoly: invalid input: {e}", file=sys.stderr)
        return 2
    except (ArithmeticError, np.linalg.LinAlgError, GridTooCoarseWarning) as e:
        print(f"prfpoly: numerical failure: {e}", file=sys.stderr)
        return 1
    if args.out:
        out = Path(args.out)
        out.write_text(text)
    else:
        sys.stdout.write(text)
    mpath = args.manifest or (f"{args.out}.manifest.json" if args.out else None)
    if mpath:
        Path(mpath).write_text(_dumps(_manifest(args, argv, params, gmeta, threads)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
