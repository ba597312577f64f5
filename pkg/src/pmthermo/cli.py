"""
Command-line entry point: ``pmthermo <command> [flags]``.

Every command writes one CSV (or JSON) artifact whose first lines record
the library version and the full configuration, then prints a one-line
summary.  Exit codes: 0 success, 1 numeric error, 2 a bound check failed,
64 malformed configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__

EXIT_OK, EXIT_ERROR, EXIT_BOUND, EXIT_USAGE = 0, 1, 2, 64

COMMANDS = ("extension", "induce", "pressure", "equilibrium", "acip", "kneading",
            "sweep", "keller", "exo1", "usc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _floats(text: str) -> list:
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text: str) -> list:
    return [int(v) for v in str(text).split(",") if v.strip()]


def parse_t_grid(text: str) -> np.ndarray:
    """``a:b:step`` inclusive of b (up to rounding), or a comma list."""
    s = str(text)
    if ":" in s:
        parts = [float(v) for v in s.split(":")]
        if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
            raise UsageError(f"bad t-grid {text!r}: expected a:b:step with step > 0")
        a, b, h = parts
        n = int(math.floor((b - a) / h + 1e-9)) + 1
        return a + h * np.arange(n)
    return np.array(_floats(s))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pmthermo", description=__doc__.strip().splitlines()[0])
    p.add_argument("--version", action="version", version=f"pmthermo {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, needs_map=True):
        sp.add_argument("--config", help="JSON file whose keys override the flags")
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        if needs_map:
            sp.add_argument("--map", dest="map_spec",
                            help="family:param, inline JSON, or a JSON file path")
        return sp

    sp = common(sub.add_parser("extension", help="Hofbauer extension up to level R"))
    sp.add_argument("--R", type=int, default=8)
    sp.add_argument("--dot", action="store_true", help="emit Graphviz DOT instead of CSV")

    sp = common(sub.add_parser("induce", help="level-R induced map branches"))
    sp.add_argument("--R", type=int, default=8)
    sp.add_argument("--tau-max", type=int, default=40)

    sp = common(sub.add_parser("pressure", help="pressure curve p(t)"))
    sp.add_argument("--t-grid", default="0:1:0.25")
    sp.add_argument("--R", type=int, default=4)
    sp.add_argument("--tau-max", type=int, default=40)
    sp.add_argument("--K", type=int, default=0)
    sp.add_argument("--max-period", type=int, default=8)
    sp.add_argument("--method", choices=("markov", "full_branch"), default="markov")

    sp = common(sub.add_parser("equilibrium", help="equilibrium state at t"))
    sp.add_argument("--t", type=float, default=1.0)
    sp.add_argument("--R", type=int, default=8)
    sp.add_argument("--tau-max", type=int, default=40)
    sp.add_argument("--grid", dest="grid_n", type=int, default=1024)

    sp = common(sub.add_parser("acip", help="Ulam acip density"))
    sp.add_argument("--grid", dest="grid_n", type=int, default=1024)

    sp = common(sub.add_parser("kneading", help="tent-map kneading words"), needs_map=False)
    sp.add_argument("--slope", type=float)
    sp.add_argument("--n", type=int, default=20)
    sp.add_argument("--prefix", help="find the slope whose kneading starts with this word")

    sp = common(sub.add_parser("sweep", help="measures along a parameter sequence"),
                needs_map=False)
    sp.add_argument("--family", default="quadratic")
    sp.add_argument("--params", default="3.9,3.95,4")
    sp.add_argument("--t", type=float, default=1.0)
    sp.add_argument("--method", choices=("ulam", "markov"), default="ulam")
    sp.add_argument("--grid", dest="grid_n", type=int, default=1024)
    sp.add_argument("--R", type=int, default=8)
    sp.add_argument("--tau-max", type=int, default=40)

    sp = common(sub.add_parser("keller", help="Keller W-map instability"), needs_map=False)
    sp.add_argument("--eps", default="0.4,0.2,0.1,0.05")
    sp.add_argument("--grid", dest="grid_n", type=int, default=4096)

    sp = common(sub.add_parser("exo1", help="exo1 beta-construction"), needs_map=False)
    sp.add_argument("--beta", type=float, default=1.0)
    sp.add_argument("--k", default="8,10,12,14")
    sp.add_argument("--radius", default="scaled", help="scaled, inverse_k, or a number")
    sp.add_argument("--grid", dest="grid_n", type=int, default=512)

    sp = common(sub.add_parser("usc", help="entropy upper semicontinuity check"),
                needs_map=False)
    sp.add_argument("--family", default="quadratic")
    sp.add_argument("--params", default=",".join(str(4 - 2.0 ** -k) for k in range(2, 9)) + ",4")
    sp.add_argument("--t", type=float, default=1.0)
    sp.add_argument("--R", type=int, default=8)
    sp.add_argument("--tau-max", type=int, default=40)
    p.dest_types = {name: {a.dest: a.type for a in sp_._actions if a.dest != "help"}
                    for name, sp_ in sub.choices.items()}
    return p


# ----------------------------------------------------------------------
def _apply_config(args, parser):
    """Overlay keys of the JSON config onto the parsed flags."""
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise UsageError(f"cannot read config {args.config!r}: {err}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    cmd = cfg.pop("experiment", cfg.pop("command", None))
    if cmd is not None and cmd != args.command:
        raise UsageError(f"config is for {cmd!r}, not {args.command!r}")
    if "map" in cfg:
        cfg["map_spec"] = cfg.pop("map")
    known = vars(args)
    for key, val in cfg.items():
        dest = key.replace("-", "_")
        if dest == "grid":
            dest = "grid_n"
        if dest not in known or dest in ("command", "config"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        if isinstance(val, list):
            val = ",".join(str(v) for v in val)
        if isinstance(val, dict):
            val = json.dumps(val)
        conv = parser.dest_types.get(args.command, {}).get(dest)
        if conv is not None and val is not None:
            if isinstance(val, bool) or (conv is int and isinstance(val, float)
                                         and not float(val).is_integer()):
                raise UsageError(f"config key {key!r} has the wrong type")
            try:
                val = conv(val)
            except (TypeError, ValueError):
                raise UsageError(f"config key {key!r} has the wrong type") from None
        setattr(args, dest, val)
    return args


def _config_dict(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items())
            if k not in ("config", "out") and v is not None}


def _load_map(spec):
    from .maps import load_map, map_from_spec
    if spec is None:
        raise UsageError("--map is required")
    if isinstance(spec, str) and os.path.exists(spec):
        return load_map(spec)
    return map_from_spec(spec)


def _header(args) -> list:
    return [f"# pmthermo {__version__}",
            "# config: " + json.dumps(_config_dict(args), sort_keys=True, default=str)]


def _csv_text(args, columns, rows, extra_sections=()) -> str:
    buf = io.StringIO()
    for line in _header(args):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    for title, cols, rws in extra_sections:
        w.writerow([f"# {title}"])
        w.writerow(cols)
        for r in rws:
            w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def _json_text(args, payload) -> str:
    def conv(o):
        if isinstance(o, (np.floating, float)):
            return float(f"{float(o):.17g}") if math.isfinite(o) else str(o)
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, np.ndarray):
            return [conv(v) for v in o.tolist()]
        if isinstance(o, dict):
            return {str(k): conv(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [conv(v) for v in o]
        return o

    doc = {"version": __version__, "config": _config_dict(args), "result": conv(payload)}
    return json.dumps(doc, sort_keys=True, indent=1, default=str) + "\n"


def _emit(args, columns, rows, payload=None, extra_sections=()):
    if args.format == "json":
        if payload is None:
            payload = {"columns": list(columns), "rows": [list(r) for r in rows]}
        text = _json_text(args, payload)
    else:
        text = _csv_text(args, columns, rows, extra_sections)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _summary(args, msg: str, checks: dict) -> int:
    failed = [k for k, v in checks.items() if not v]
    line = f"{args.command}: {msg}; checks {len(checks) - len(failed)}/{len(checks)} passed"
    if failed:
        line += " (failed: " + ", ".join(failed) + ")"
    print(line, file=sys.stderr if not args.out else sys.stdout)
    return EXIT_BOUND if failed else EXIT_OK


# ----------------------------------------------------------------------
def cmd_extension(args):
    from .hofbauer import build_extension
    fmap = _load_map(args.map_spec)
    g = build_extension(fmap, args.R)
    if args.dot:
        text = g.to_dot()
        if args.out:
            with open(args.out, "w") as fh:
                fh.write("\n".join("// " + h[2:] for h in _header(args)) + "\n" + text)
        else:
            sys.stdout.write(text)
    else:
        rows = [(i, d.lo, d.hi, d.theta, d.level) for i, d in enumerate(g.domains)]
        _emit(args, ("id", "lo", "hi", "theta", "level"), rows,
              g.to_dict() if args.format == "json" else None,
              [("arrows", ("src", "dst", "branch"), [tuple(e) for e in g.arrows])])
    return _summary(args, f"{len(g.domains)} domains at R={args.R}",
                    {"domain_count": g.count_ok})


def cmd_induce(args):
    from .hofbauer import TowerError, level_R_induced
    fmap = _load_map(args.map_spec)
    ind = level_R_induced(fmap, args.R, args.tau_max)
    rows = [(ind.src[i], ind.dst[i], ind.tau[i], ind.z_lo[i], ind.z_hi[i], ind.dlog_mid[i],
             ind.words[i]) for i in range(len(ind))]
    counts = sorted(ind.tau_counts().items())
    _emit(args, ("src", "dst", "tau", "z_lo", "z_hi", "dlog_mid", "word"), rows, None,
          [("tau counts", ("tau", "count"), counts)])
    checks = {}
    try:
        rep = ind.counting_check()
        checks["counting"] = rep.ok
    except TowerError:
        pass
    return _summary(args, f"{len(ind)} branches, truncated length {ind.truncated_length:.3g}",
                    checks)


def cmd_pressure(args):
    from .thermo import pressure_curve
    fmap = _load_map(args.map_spec)
    t = parse_t_grid(args.t_grid)
    pc = pressure_curve(fmap, t, R=args.R, tau_max=args.tau_max, K=args.K,
                        max_period=args.max_period, method=args.method)
    rows = [(pc.t_values[i], pc.p_lo[i], pc.p_values[i], pc.p_hi[i], pc.lambda_values[i],
             pc.entropy_values[i], pc.E_plus_values[i], pc.P0_values[i]) for i in range(len(t))]
    _emit(args, ("t", "p_lo", "p_mid", "p_hi", "lambda", "entropy", "E_plus", "P0"), rows)
    ok = pc.resolved
    checks = {"resolved": bool(np.all(ok))}
    if np.sum(ok) >= 3:
        checks["convex"] = pc.convexity_defect() >= -1e-8
    return _summary(args, f"{int(np.sum(ok))}/{len(t)} points resolved", checks)


def cmd_equilibrium(args):
    from .hofbauer import level_R_induced
    from .thermo import markov_gibbs, markov_pressure, spread, stats
    fmap = _load_map(args.map_spec)
    ind = level_R_induced(fmap, args.R, args.tau_max)
    p, (plo, phi) = markov_pressure(ind, args.t)
    w = markov_gibbs(ind, args.t)
    s = stats(ind, w, args.t)
    meas, _ = spread(ind, w, args.grid_n)
    e = meas.edges
    rows = [(e[i], e[i + 1], meas.cell_mass[i]) for i in range(meas.grid_n)]
    info = [("pressure", p), ("pressure_lo", plo), ("pressure_hi", phi), ("lambda", s.lam),
            ("entropy", s.entropy), ("mean_tau", s.T)]
    _emit(args, ("cell_lo", "cell_hi", "mass"), rows, None, [("statistics", ("name", "value"), info)])
    checks = {"bracket": plo <= p <= phi, "entropy_nonneg": s.entropy >= -(phi - plo) - 1e-12}
    return _summary(args, f"p={p:.6g} h={s.entropy:.6g} lambda={s.lam:.6g}", checks)


def cmd_acip(args):
    from .ulam import ulam_acip
    fmap = _load_map(args.map_spec)
    res = ulam_acip(fmap, args.grid_n)
    m = res.density
    e = m.edges
    dens = m.density()
    rows = [(e[i], e[i + 1], m.cell_mass[i], dens[i]) for i in range(m.grid_n)]
    _emit(args, ("cell_lo", "cell_hi", "mass", "density"), rows, None,
          [("statistics", ("name", "value"), [("lambda", res.lam), ("residual", res.residual),
                                              ("iterations", res.iterations)])])
    return _summary(args, f"lambda={res.lam:.6g} residual={res.residual:.3g}",
                    {"converged": res.converged})


def cmd_kneading(args):
    from .symbolic import find_tent_parameter, kneading
    if args.prefix:
        s = find_tent_parameter(prefix=args.prefix)
    elif args.slope is not None:
        s = float(args.slope)
    else:
        raise UsageError("kneading needs --slope or --prefix")
    k = kneading(s, args.n)
    _emit(args, ("slope", "kneading"), [(s, k.word)])
    return _summary(args, f"slope={s:.12g} word={k.word}", {})


def _sweep_rows(res):
    rows = []
    for i, a in enumerate(res.params):
        d = res.distances[i] if i < len(res.distances) else math.nan
        s = res.stats[i]
        rows.append((a, s.lam, s.entropy, s.T, d))
    return rows


def cmd_sweep(args):
    from .stability import parameter_sweep
    res = parameter_sweep(args.family, _floats(args.params), args.t, args.method,
                          args.grid_n, args.R, args.tau_max)
    _emit(args, ("param", "lambda", "entropy", "mean_tau", "w1_to_next"), _sweep_rows(res),
          None, [("notes", ("note",), [(n,) for n in res.notes])])
    return _summary(args, f"{len(res)} parameters", {"distances_nonneg": all(d >= 0 for d in res.distances)})


def cmd_keller(args):
    from .stability import keller_experiment
    eps = _floats(args.eps)
    res = keller_experiment(eps, args.grid_n)
    ex = res.extra
    rows = [(e, s.lam, ex["lambda_expected"][i], ex["w1_tip"][i], ex["mass_near_tip"][i])
            for i, (e, s) in enumerate(zip(res.params, res.stats))]
    lam_ok = all(abs(s.lam - ex["lambda_expected"][i]) <= 0.01 * abs(ex["lambda_expected"][i])
                 for i, s in enumerate(res.stats))
    w1 = ex["w1_tip"]
    checks = {"lambda_1pct": lam_ok,
              "w1_monotone": all(b < a for a, b in zip(w1[:-1], w1[1:])),
              "entropy_floor": all(s.entropy >= math.log(1.5) for s in res.stats),
              "jump": ex["jump"] > 0.2}
    _emit(args, ("eps", "lambda", "lambda_expected", "w1_tip", "mass_near_tip"), rows, None,
          [("limit map", ("name", "value"), [("lambda", ex["limit_lambda"]),
                                             ("w1_tip", ex["limit_w1_tip"]),
                                             ("w1_last_to_limit", ex["jump"])])])
    return _summary(args, f"jump W1={ex['jump']:.4f}", checks)


def cmd_exo1(args):
    from .stability import exo1_experiment
    radius = args.radius
    if radius not in ("scaled", "inverse_k"):
        radius = float(radius)
    res = exo1_experiment(args.beta, _ints(args.k), grid_n=args.grid_n, radius=radius)
    rows = [(r["k"], r["n"], r["a"], r["delta"], r["S"], r["S_X"], r["S_delta"], r["radius"],
             r["mass_near"], r["mass_near_inv_k"], r["limit_w1"], r["entropy"],
             r["tails_ok_E"], r["tails_ok_R"]) for r in res.extra["rows"]]
    tr = res.extra["tails_ref"]
    tails = [(j, tr["m_E"][j], tr["bound_E"][j], tr["m_R"][j], tr["bound_R"][j]) for j in tr["j"]]
    _emit(args, ("k", "n", "a", "delta", "S", "S_X", "S_delta", "radius", "mass_near",
                 "mass_near_inv_k", "limit_w1", "entropy", "tails_ok_E", "tails_ok_R"), rows, None,
          [("reference tails a0", ("j", "m_E", "bound_E", "m_R", "bound_R"), tails),
           ("notes", ("note",), [(n,) for n in res.notes])])
    masses = [r["mass_near"] for r in res.extra["rows"]]
    checks = {"tails_E": tr["ok_E"] and all(r["tails_ok_E"] for r in res.extra["rows"]),
              "tails_R": tr["ok_R"] and all(r["tails_ok_R"] for r in res.extra["rows"])}
    trend = ", ".join(f"{m:.3f}" for m in masses)
    return _summary(args, f"S0={res.extra['S0']:.5g}, mass near 1/3: {trend} "
                    f"(limit {res.extra['target']:.3g})", checks)


def cmd_usc(args):
    from .stability import usc_entropy_check
    rep = usc_entropy_check(args.family, _floats(args.params), args.t, args.R, args.tau_max)
    rows = list(zip(rep["params"], rep["entropy"], rep["entropy_lo"], rep["entropy_hi"]))
    _emit(args, ("param", "entropy", "entropy_lo", "entropy_hi"), rows, None,
          [("report", ("name", "value"), [("margin", rep["margin"]), ("bracket", rep["bracket"]),
                                          ("relation_change", rep["relation_change"])]),
           ("notes", ("note",), [(n,) for n in rep["notes"]])])
    return _summary(args, f"margin={rep['margin']:.4g} bracket={rep['bracket']:.3g}",
                    {"usc": rep["ok"]})


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        args = _apply_config(args, parser)
        return HANDLERS[args.command](args)
    except UsageError as err:
        print(err, file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, ArithmeticError, OSError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
