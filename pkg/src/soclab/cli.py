"""Command-line entry point.

Subcommands cover every workflow: simulate {full,reduced,fluctuation,
critical,ou}, gibbs, verify {cancellation,expansion,taylor,dagger-bound,
cutoff}, action, optimal-path, resolvent, check {clt,ou,critical,tail,
containment}, estimate-rate, and limits-audit.  Exit codes: 0 success,
1 usage error, 2 verification failure, 3 numerical non-convergence.

Every run writes into out/<subcommand>/<label>/: a config.echo with the
fully resolved settings, CSV/JSON payloads with floats at 17 significant
digits, and wall-clock metadata in timing.txt (excluded from determinism
comparisons).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_NOCONV = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _fmt(x):
    if isinstance(x, float):
        return format(x, ".17g")
    return x


def _json_default(o):
    import numpy as np

    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True,
                                     default=_json_default) + "\n")


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(_fmt(v)) for v in row) + "\n")


def _outdir(args, subcommand):
    label = args.label or time.strftime("%Y%m%dT%H%M%S")
    path = Path(args.out) / subcommand / label
    path.mkdir(parents=True, exist_ok=True)
    return path


def _echo_config(outdir, sections):
    from .config import echo_lines

    (outdir / "config.echo").write_text(echo_lines(sections) + "\n")


def _write_timing(outdir, seconds):
    (outdir / "timing.txt").write_text(f"wall_seconds = {seconds:.3f}\n")


def _schedule_from(args):
    from .config import parse_table
    from .model import ScalingSchedule

    if getattr(args, "btable", None):
        return ScalingSchedule(table=parse_table(args.btable))
    return ScalingSchedule(alpha=getattr(args, "alpha", 0.125) or 0.125)


def build_parser():
    p = _Parser(prog="soclab",
                description="simulation and verification laboratory for the "
                            "self-organizing mean-field spin model")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--replicas", type=int, default=None)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--out", default="out", help="output root directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--label", default=None, help="run label (default timestamp)")
    sub = p.add_subparsers(dest="command", required=True)

    def add_parser(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    sim = add_parser("simulate", help="integrate one of the model processes")
    sim.add_argument("process", choices=("full", "reduced", "fluctuation",
                                         "critical", "ou"))
    sim.add_argument("--sigma", type=float, default=None)
    sim.add_argument("--n", type=int, default=None)
    sim.add_argument("--t", type=float, default=None, help="horizon")
    sim.add_argument("--dt", type=float, default=None)
    sim.add_argument("--x0", type=float, default=None)
    sim.add_argument("--y0", type=float, default=None)
    sim.add_argument("--initial", default=None,
                     help="iid-gaussian | zero | centered-gaussian")
    sim.add_argument("--no-noise", action="store_true")
    sim.add_argument("--record-every", type=int, default=None)
    sim.add_argument("--alpha", type=float, default=None)
    sim.add_argument("--btable", default=None, help="schedule table n1:b1,n2:b2")
    sim.add_argument("--mode", choices=("direct", "from-full"), default="direct")

    gib = add_parser("gibbs", help="sample the static self-organizing law")
    gib.add_argument("--sigma", type=float, default=None)
    gib.add_argument("--n", type=int, default=None)
    gib.add_argument("--sweeps", type=int, default=None)
    gib.add_argument("--burn", type=int, default=None)
    gib.add_argument("--thin", type=int, default=None)

    ver = add_parser("verify", help="algebraic and asymptotic verifications")
    ver.add_argument("what", choices=("cancellation", "expansion", "taylor",
                                      "dagger-bound", "cutoff"))
    ver.add_argument("--degree", type=int, default=8)
    ver.add_argument("--sigma", type=float, default=1.0)
    ver.add_argument("--eps", type=float, default=0.1)
    ver.add_argument("--alpha", type=float, default=None)
    ver.add_argument("--btable", default=None)
    ver.add_argument("--nlist", default=None, help="comma-separated sizes")
    ver.add_argument("--pitch", type=float, default=0.01)
    ver.add_argument("--radius", type=float, default=4.0,
                     help="mollification radius of the base function")
    ver.add_argument("--n", type=int, default=None, help="single size (cutoff)")

    act = add_parser("action", help="action of a stored or benchmark path")
    act.add_argument("--path", help="CSV file with header t,x")
    act.add_argument("--benchmark", choices=("linear", "zerocost"), default=None)
    act.add_argument("--sigma", type=float, default=1.0)
    act.add_argument("--grid", type=int, default=2**14)
    act.add_argument("--i0", type=float, default=0.0, help="initial cost")

    opt = add_parser("optimal-path", help="minimize the action between endpoints")
    opt.add_argument("--sigma", type=float, default=1.0)
    opt.add_argument("--x0", type=float, required=True)
    opt.add_argument("--xT", type=float, required=True)
    opt.add_argument("--t", type=float, required=True)
    opt.add_argument("--grid", type=int, default=1024)
    opt.add_argument("--no-cross-validate", action="store_true")

    rsv = add_parser("resolvent", help="solve f - lambda H(x, f') = h on a grid")
    rsv.add_argument("--lam", type=float, default=0.7)
    rsv.add_argument("--sigma", type=float, default=1.0)
    rsv.add_argument("--domain", type=float, default=3.0, help="half width")
    rsv.add_argument("--npts", type=int, default=241)
    rsv.add_argument("--preset", choices=("cos-gauss", "const", "sine"),
                     default="cos-gauss")
    rsv.add_argument("--const", type=float, default=1.0)
    rsv.add_argument("--probe", action="store_true",
                     help="two-initialization uniqueness probe")

    chk = add_parser("check", help="statistical checks against limit laws")
    chk.add_argument("what", choices=("clt", "ou", "critical", "tail", "containment"))
    chk.add_argument("--sigma", type=float, default=1.0)
    chk.add_argument("--n", type=int, default=10**4)
    chk.add_argument("--t", type=float, default=None)
    chk.add_argument("--dt", type=float, default=1e-3)
    chk.add_argument("--source", choices=("full", "reduced"), default="full")
    chk.add_argument("--a", type=float, default=1.0)
    chk.add_argument("--alpha", type=float, default=None)
    chk.add_argument("--btable", default=None)
    chk.add_argument("--boxes", default="0.25x0.25;1x1;5x5",
                     help="semicolon-separated half-width pairs WxH")

    est = add_parser("estimate-rate", help="tube-probability rate estimation")
    est.add_argument("--sigma", type=float, default=1.0)
    est.add_argument("--slope", type=float, default=0.8, help="gamma(t) = slope*t")
    est.add_argument("--delta", type=float, default=0.25)
    est.add_argument("--t", type=float, default=1.0)
    est.add_argument("--dt", type=float, default=1e-3)
    est.add_argument("--nlist", default="2**10,2**14,2**18")
    est.add_argument("--alpha", type=float, default=None)
    est.add_argument("--btable", default=None)

    aud = add_parser("limits-audit", help="run the acceptance criteria")
    aud.add_argument("--only", default=None,
                     help="comma-separated criterion indices")
    return p


def _load_cfg(args):
    from .config import load_config, resolved

    cfg = load_config(args.config) if args.config else {}

    def get(section, key, override=None, default=None, cast=str):
        return resolved(cfg, section, key, override=override, default=default,
                        cast=cast)

    return cfg, get


def cmd_simulate(args, get):
    from .model import ModelParams
    from .simulate import (SimSpec, simulate_critical, simulate_fluctuation,
                           simulate_full, simulate_ou, simulate_reduced)

    sigma = get("model", "sigma", args.sigma, 1.0, float)
    n = get("model", "n", args.n, 1000, int)
    horizon = get("simulate", "horizon", args.t, 1.0, float)
    dt = get("simulate", "dt", args.dt, 1e-3, float)
    seed = get("simulate", "seed", args.seed, 0, int)
    replicas = get("simulate", "replicas", args.replicas, 1, int)
    rec = get("simulate", "record_every", args.record_every,
              max(1, int(round(horizon / dt)) // 512), int)
    noise = not args.no_noise
    outdir = _outdir(args, f"simulate-{args.process}")
    t0 = time.monotonic()
    if args.process in ("critical", "ou"):
        z0 = args.x0 if args.process == "critical" else args.y0
        fn = simulate_critical if args.process == "critical" else simulate_ou
        kwargs = {"seed": seed, "replicas": replicas, "record_every": rec}
        if args.process == "critical":
            kwargs["x0"] = z0 or 0.0
            kwargs["noise"] = noise
        else:
            kwargs["y0"] = z0 or 0.0
        res = fn(sigma, horizon, dt, **kwargs)
        header = ("t", "x")
        rows = [(t, v) for t, v in zip(res.times, res.values[0])]
    else:
        params = ModelParams(sigma=sigma, n=n)
        if args.x0 is not None or args.y0 is not None:
            initial = (args.x0 or 0.0, args.y0 or 0.0)
        else:
            initial = args.initial or ("iid-gaussian" if args.process == "full"
                                       else (0.0, 0.0))
        spec = SimSpec(params=params, horizon=horizon, dt=dt, initial=initial,
                       master_seed=seed, replicas=replicas, record_every=rec,
                       noise=noise,
                       schedule=_schedule_from(args) if args.process == "fluctuation"
                       else None)
        if args.process == "full":
            res = simulate_full(spec)
        elif args.process == "reduced":
            res = simulate_reduced(spec)
        else:
            res = simulate_fluctuation(spec, mode=args.mode)
        header = ("t", "x", "y")
        rows = [(t, v[0], v[1]) for t, v in zip(res.times, res.values[0])]
    write_csv(outdir / "trajectory.csv", header, rows)
    write_json(outdir / "report.json", res.to_dict() if args.format == "json"
               else {"spec": res.spec_echo, "spec_hash": res.spec_hash(),
                     "seeds": [int(s) for s in res.seeds], "extras": res.extras,
                     "terminal": res.terminal().tolist()})
    _echo_config(outdir, {"model": {"sigma": sigma, "n": n},
                          "simulate": {"horizon": horizon, "dt": dt, "seed": seed,
                                       "replicas": replicas, "record_every": rec,
                                       "noise": noise}})
    _write_timing(outdir, time.monotonic() - t0)
    print(f"wrote {outdir}")
    return EXIT_OK


def cmd_gibbs(args, get):
    from .model import ModelParams
    from .simulate import sample_gibbs

    sigma = get("model", "sigma", args.sigma, 1.0, float)
    n = get("model", "n", args.n, 200, int)
    sweeps = get("gibbs", "sweeps", args.sweeps, 20000, int)
    burn = get("gibbs", "burn", args.burn, None, int)
    thin = get("gibbs", "thin", args.thin, 10, int)
    seed = get("simulate", "seed", args.seed, 0, int)
    replicas = get("simulate", "replicas", args.replicas, 1, int)
    outdir = _outdir(args, "gibbs")
    t0 = time.monotonic()
    res = sample_gibbs(ModelParams(sigma=sigma, n=n), sweeps=sweeps, burn=burn,
                       thin=thin, seed=seed, replicas=replicas)
    rows = [(r, k, res.stats[r, k, 0], res.stats[r, k, 1])
            for r in range(replicas) for k in range(res.stats.shape[1])]
    write_csv(outdir / "samples.csv", ("replica", "index", "S", "T"), rows)
    report = {"spec": res.spec_echo, "acceptance": res.acceptance.tolist(),
              "step": res.step.tolist(),
              "seeds": [int(s) for s in res.seeds]}
    if n >= 50:
        # static fluctuation law: report fits against both quartic
        # normalizations (stationary Fokker-Planck exp(-s^4/(4 sigma^4))
        # and the historical exp(-s^4/12)) without adjudicating
        import numpy as np
        import scipy.stats

        scaled = (res.stats[..., 0] / n**0.75).ravel()
        fits = {}
        for label, scale in (("exp(-s^4/(4 sigma^4))", 4.0 * sigma**4),
                             ("exp(-s^4/12)", 12.0)):
            xs = np.linspace(-5, 5, 4001)
            pdf = np.exp(-xs**4 / scale)
            cdf = np.cumsum(pdf)
            cdf /= cdf[-1]
            stat, pval = scipy.stats.kstest(scaled,
                                            lambda q: np.interp(q, xs, cdf))
            fits[label] = {"ks_distance": float(stat), "p_value": float(pval)}
        report["static_law_fits"] = fits
    write_json(outdir / "report.json", report)
    _echo_config(outdir, {"model": {"sigma": sigma, "n": n},
                          "gibbs": {"sweeps": sweeps, "burn": burn or sweeps // 5,
                                    "thin": thin}})
    _write_timing(outdir, time.monotonic() - t0)
    print(f"wrote {outdir}; mean acceptance "
          f"{float(res.acceptance.mean()):.3f}")
    return EXIT_OK


def cmd_verify(args, get):
    from .config import parse_nlist
    from .exactpoly import Poly1
    from .functions import MollifiedPolynomial, SmoothCutoff
    import numpy as np

    outdir = _outdir(args, f"verify-{args.what}")
    t0 = time.monotonic()
    ok = True
    payload = {}
    if args.what == "cancellation":
        from fractions import Fraction

        from .expansion import cancellation_residuals
        from .rng import philox

        residuals = []
        for k in range(args.degree + 1):
            r1, r2 = cancellation_residuals(Poly1.monomial(k), args.sigma)
            residuals.append({"f": f"x^{k}", "zero": r1.is_zero() and r2.is_zero()})
        rng = philox(args.seed or 0)
        for i in range(100):
            deg = int(rng.integers(0, args.degree + 1))
            coeffs = [Fraction(int(rng.integers(-40, 41)), int(rng.integers(1, 13)))
                      for _ in range(deg + 1)]
            r1, r2 = cancellation_residuals(Poly1(coeffs), args.sigma)
            residuals.append({"f": f"random[{i}]",
                              "zero": r1.is_zero() and r2.is_zero()})
        ok = all(r["zero"] for r in residuals)
        payload = {"residuals": residuals, "all_zero": ok}
    elif args.what == "taylor":
        from .expansion import remainder_constant

        sched = _schedule_from(args)
        nlist = parse_nlist(args.nlist) if args.nlist else [2**k for k in
                                                            range(10, 31, 2)]
        rows = []
        for n in nlist:
            sup, const = remainder_constant(args.sigma, n, sched.bn(n))
            rows.append({"n": n, "bn": sched.bn(n), "sup": sup, "constant": const})
        consts = [r["constant"] for r in rows]
        ratio = max(consts) / min(consts)
        ok = ratio < 3.0
        payload = {"rows": rows, "ratio": ratio, "tolerance": 3.0}
        write_csv(outdir / "remainder.csv", ("n", "bn", "sup", "constant"),
                  [(r["n"], r["bn"], r["sup"], r["constant"]) for r in rows])
    elif args.what == "expansion":
        from .expansion import expansion_gap, loglog_slope

        sched = _schedule_from(args)
        nlist = parse_nlist(args.nlist) if args.nlist else [10**3, 10**4, 10**5,
                                                            10**6]
        f = MollifiedPolynomial(Poly1([0, 0, 1]), radius=args.radius)
        rows = expansion_gap(f, args.sigma, sched, nlist, pitch=args.pitch)
        sups = [r["sup"] for r in rows]
        ok = all(a > b for a, b in zip(sups, sups[1:]))
        payload = {"rows": rows, "decreasing": ok,
                   "loglog_slope": loglog_slope([r["bn"] for r in rows], sups)}
        write_csv(outdir / "gap.csv", ("n", "bn", "sup"),
                  [(r["n"], r["bn"], r["sup"]) for r in rows])
    elif args.what == "dagger-bound":
        from .expansion import bound_constants, bound_slack

        sched = _schedule_from(args)
        nlist = parse_nlist(args.nlist) if args.nlist else [10**46, 10**48, 10**50]
        f = MollifiedPolynomial(Poly1([0, 0, 1]), radius=args.radius)
        consts = bound_constants(f, args.eps, args.sigma, sched)
        rows = []
        for n in nlist:
            for sign in ("+", "-"):
                row = bound_slack(f, args.eps, args.sigma, sched, n,
                                  pitch=args.pitch, sign=sign, nstar=consts.nstar)
                row["sign"] = sign
                rows.append(row)
        finals = [r["sup_slack"] for r in rows if r["n"] == max(nlist)]
        ok = all(s <= 0.05 for s in finals)
        payload = {"rows": rows, "nstar": consts.nstar, "cbar": consts.cbar,
                   "final_slacks": finals, "tolerance": 0.05}
    elif args.what == "cutoff":
        sched = _schedule_from(args)
        n = args.n or 10**8
        chi = SmoothCutoff.for_scale(args.sigma, sched.bn(n))
        zs = np.linspace(-2 * chi.radius, 2 * chi.radius, 20001)
        v, d1, d2 = chi.jet(zs)
        inner = np.abs(zs) <= max(0.0, chi.radius - 2)
        ok = (bool(np.all(d1 >= -1e-14))
              and bool(np.all(np.abs(v[inner] - zs[inner]) < 1e-12))
              and bool(np.max(d1) <= SmoothCutoff.SUP_D1 + 1e-12)
              and bool(np.max(np.abs(d2)) <= SmoothCutoff.SUP_D2 + 1e-12)
              and v[0] == -(chi.radius - 1) and v[-1] == chi.radius - 1)
        payload = {"radius": chi.radius, "monotone": bool(np.all(d1 >= -1e-14)),
                   "sup_d1": float(np.max(d1)), "sup_d2": float(np.max(np.abs(d2))),
                   "plateaus": [float(v[0]), float(v[-1])], "ok": ok}
    write_json(outdir / "report.json", payload | {"passed": ok})
    _echo_config(outdir, {"verify": {"what": args.what, "sigma": args.sigma}})
    _write_timing(outdir, time.monotonic() - t0)
    print(f"wrote {outdir}; {'ok' if ok else 'FAILED'}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_action(args, get):
    import numpy as np

    from .variational import path_action, zero_cost_flow

    outdir = _outdir(args, "action")
    t0 = time.monotonic()
    if args.path:
        data = np.loadtxt(args.path, delimiter=",", skiprows=1)
        t, x = data[:, 0], data[:, 1]
    elif args.benchmark == "linear":
        t = np.linspace(0, 1, args.grid + 1)
        x = t.copy()
    elif args.benchmark == "zerocost":
        t = np.linspace(0, 3, args.grid + 1)
        x = zero_cost_flow(args.sigma, 1.0, t)
    else:
        print("error: provide --path or --benchmark", file=sys.stderr)
        return EXIT_USAGE
    rep = path_action(args.sigma, t, x, initial_cost=args.i0)
    write_json(outdir / "report.json", rep.to_dict())
    _echo_config(outdir, {"action": {"grid": len(t) - 1, "i0": args.i0},
                          "model": {"sigma": args.sigma}})
    _write_timing(outdir, time.monotonic() - t0)
    print(f"total action = {rep.total:.9g} (running {rep.running_cost:.9g} "
          f"+ initial {rep.initial_cost:.9g})")
    return EXIT_OK


def cmd_optimal_path(args, get):
    from .variational import ConvergenceError, optimal_path

    outdir = _outdir(args, "optimal-path")
    t0 = time.monotonic()
    try:
        res = optimal_path(args.sigma, args.x0, args.xT, args.t,
                           grid_size=args.grid,
                           cross_validate=not args.no_cross_validate)
    except ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    write_csv(outdir / "path.csv", ("t", "x"),
              list(zip(res.times, res.values)))
    write_json(outdir / "report.json",
               {"action": res.action, "diagnostics": res.diagnostics})
    _echo_config(outdir, {"action": {"grid": args.grid},
                          "model": {"sigma": args.sigma}})
    _write_timing(outdir, time.monotonic() - t0)
    if not res.diagnostics.get("converged", False):
        print("solver did not converge", file=sys.stderr)
        return EXIT_NOCONV
    gap = res.diagnostics.get("relative_gap")
    if gap is not None and gap > 1e-5:
        print(f"collocation and shooting disagree: relative gap {gap:.2e}",
              file=sys.stderr)
        return EXIT_VERIFY
    print(f"action = {res.action:.9g}")
    return EXIT_OK


def cmd_resolvent(args, get):
    import numpy as np

    from .variational import ConvergenceError, ResolventProblem, solve_resolvent

    outdir = _outdir(args, "resolvent")
    t0 = time.monotonic()
    xs = np.linspace(-args.domain, args.domain, args.npts)
    if args.preset == "cos-gauss":
        h = np.cos(1.3 * xs) * np.exp(-0.25 * xs**2)
    elif args.preset == "sine":
        h = np.sin(xs)
    else:
        h = np.full_like(xs, args.const)
    prob = ResolventProblem(lam=args.lam, xs=xs, h=h, sigma=args.sigma)
    try:
        sol = solve_resolvent(prob)
        payload = {"residual_sup": sol.residual_sup, "iterations": sol.iterations,
                   "theta": sol.theta}
        if args.probe:
            a = solve_resolvent(prob, f0=float(h.min()))
            b = solve_resolvent(prob, f0=float(h.max()))
            gap = float(np.max(np.abs(a.f - b.f)))
            payload["two_init_gap"] = gap
            if gap > 1e-6:
                write_json(outdir / "report.json", payload)
                print(f"uniqueness probe failed: gap {gap:.2e}", file=sys.stderr)
                return EXIT_VERIFY
    except ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    write_csv(outdir / "solution.csv", ("x", "f", "h"),
              list(zip(xs, sol.f, h)))
    write_json(outdir / "report.json", payload)
    _echo_config(outdir, {"resolvent": {"lam": args.lam, "domain": args.domain,
                                        "npts": args.npts, "preset": args.preset}})
    _write_timing(outdir, time.monotonic() - t0)
    print(f"residual sup = {sol.residual_sup:.2e}")
    return EXIT_OK


def cmd_check(args, get):
    from .model import ModelParams
    from .verify import (check_clt_increment, check_critical_limit,
                         check_ou_limit, containment_diagnostic,
                         tail_bound_check)

    params = ModelParams(sigma=args.sigma, n=args.n)
    seed = args.seed or 0
    replicas = args.replicas or 1000
    outdir = _outdir(args, f"check-{args.what}")
    t0 = time.monotonic()
    ok = True
    if args.what == "clt":
        rep = check_clt_increment(params, t=args.t or 1.0, dt=args.dt, seed=seed,
                                  replicas=replicas, source=args.source)
        payload, ok = rep.to_dict(), rep.passed
    elif args.what == "ou":
        rep = check_ou_limit(params, t=args.t or 5.0 * params.sigma2, dt=args.dt,
                             seed=seed, replicas=replicas, source=args.source)
        payload, ok = rep.to_dict(), rep.passed
    elif args.what == "critical":
        rep = check_critical_limit(params, t=args.t or 1.0, dt=args.dt, seed=seed,
                                   replicas=replicas, source=args.source)
        payload, ok = rep.to_dict(), rep.passed
    elif args.what == "tail":
        sched = _schedule_from(args)
        payload = tail_bound_check(args.a, params, sched.bn(params.n))
        ok = payload["within_mills"]
    else:
        sched = _schedule_from(args)
        boxes = [tuple(float(v) for v in b.split("x"))
                 for b in args.boxes.split(";")]
        rep = containment_diagnostic(params, sched, boxes,
                                     horizon=args.t or 1.0, dt=args.dt,
                                     seed=seed, replicas=replicas)
        freqs = [row["frequency"] for row in rep.table]
        ok = freqs == sorted(freqs, reverse=True)
        payload = rep.to_dict()
        print(f"{'box':>12} {'exits':>6} {'freq':>10} {'wilson 99%':>22}")
        for row in rep.table:
            freq = row.get("frequency_bound", f"{row['frequency']:.4g}")
            wl, wh = row["wilson"]
            print(f"{row['box'][0]:>5g}x{row['box'][1]:<6g} {row['exits']:>6d} "
                  f"{freq:>10} [{wl:.4g}, {wh:.4g}]")
    write_json(outdir / "report.json", payload | {"passed": bool(ok)})
    _echo_config(outdir, {"check": {"what": args.what, "t": args.t,
                                    "replicas": replicas, "source": args.source},
                          "model": {"sigma": args.sigma, "n": args.n}})
    _write_timing(outdir, time.monotonic() - t0)
    print(f"wrote {outdir}; {'ok' if ok else 'FAILED'}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_estimate_rate(args, get):
    from .config import parse_nlist
    from .model import ModelParams
    from .verify import estimate_rate

    outdir = _outdir(args, "estimate-rate")
    t0 = time.monotonic()
    sched = _schedule_from(args)
    nlist = parse_nlist(args.nlist)
    replicas = args.replicas or 10000
    slope = args.slope
    est = estimate_rate(lambda n: ModelParams(args.sigma, n), sched, nlist,
                        gamma_fn=lambda t: slope * t, delta=args.delta,
                        horizon=args.t, dt=args.dt, seed=args.seed or 0,
                        replicas=replicas,
                        gamma_label=f"{slope}*t")
    write_json(outdir / "report.json", est.to_dict())
    write_csv(outdir / "exponents.csv", ("n", "bn", "probability", "exponent"),
              [(r["n"], r["bn"], r["probability"], r.get("exponent", float("nan")))
               for r in est.rows])
    _echo_config(outdir, {"rate": {"slope": slope, "delta": args.delta,
                                   "horizon": args.t, "replicas": replicas,
                                   "nlist": ",".join(str(n) for n in nlist)}})
    _write_timing(outdir, time.monotonic() - t0)
    for row in est.rows:
        expo = row.get("exponent")
        print(f"n={row['n']:>9d}  p={row['probability']:.4g}  "
              f"exponent={expo if expo is not None else 'censored'}")
    print(f"tube best action = {est.best_tube_action:.6g}")
    return EXIT_OK


def cmd_limits_audit(args, get):
    from .audit import run_audit

    outdir = _outdir(args, "limits-audit")
    only = None
    if args.only:
        only = {int(tok) for tok in args.only.replace(",", " ").split()}
    t0 = time.monotonic()
    results = run_audit(only=only, stream=sys.stdout)
    write_json(outdir / "acceptance.json",
               {"criteria": [r.to_dict() for r in results],
                "all_passed": all(r.passed for r in results)})
    _write_timing(outdir, time.monotonic() - t0)
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} criteria failed "
              f"({sum(1 for r in failed if r.expected_fail)} expected; see notes)")
        return EXIT_VERIFY
    print("all criteria passed")
    return EXIT_OK


_HANDLERS = {
    "simulate": cmd_simulate,
    "gibbs": cmd_gibbs,
    "verify": cmd_verify,
    "action": cmd_action,
    "optimal-path": cmd_optimal_path,
    "resolvent": cmd_resolvent,
    "check": cmd_check,
    "estimate-rate": cmd_estimate_rate,
    "limits-audit": cmd_limits_audit,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.threads is not None:
        os.environ.setdefault("NUMBA_NUM_THREADS", str(max(1, args.threads)))
        from .simulate import set_threads

        set_threads(args.threads)
    try:
        _cfg, get = _load_cfg(args)
    except Exception as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _HANDLERS[args.command](args, get)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
