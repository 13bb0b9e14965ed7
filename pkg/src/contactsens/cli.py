"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 a sign test could not be resolved.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness, oracle
from .estimators import DegenerateConditioning
from .harness import Inconclusive, SweepSpec, parse_grid
from .lattice import ValidationError

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INCONCLUSIVE = 3

DEFAULT_SAMPLES = 10_000

SUBCOMMANDS = ("sensitivity", "delta", "survival", "conditional", "oracle-check", "locate-peak")


def read_config(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` file; keys are flag names without dashes, ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("experiment")
    g.add_argument("--lambda", dest="lam", type=float, help="infection rate (lambda1 for delta)")
    g.add_argument("--lambda2", type=float, help="second infection rate for delta")
    g.add_argument("--lambda-grid", help="a:b:step or comma list of rates")
    g.add_argument("--p", type=float, default=0.7)
    g.add_argument("--q", type=float, default=0.9)
    g.add_argument("--r", type=int, default=5)
    g.add_argument("--t", type=float, default=30.0, help="time horizon")
    g.add_argument("--samples", type=int,
                   help="replicas per point (default 10000; the preset sets its own)")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--out", help="CSV path (stdout when omitted)")
    g.add_argument("--preset", choices=["theorem1"])
    g.add_argument("--ring", type=int, help="simulate on a ring of this many sites")
    g.add_argument("--width", type=float, default=0.5,
                   help="rate increment of each sign call in locate-peak")
    g.add_argument("--record-wall", action="store_true",
                   help="fill the wall_s column (makes output time-dependent)")
    g.add_argument("--independent", action="store_true",
                   help="delta: independent runs instead of the coupled pair")
    g.add_argument("--bracket", action="store_true",
                   help="survival: bracket the transition using horizons t and 2t")
    g.add_argument("--fixtures", help="oracle-check: also write the exact fixture file here")
    g.add_argument("--config", help="flat key = value file; flags override it")

    parser = argparse.ArgumentParser(prog="contactsens", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "sensitivity": "sensitivity S over a rate grid (dual estimator)",
        "delta": "sensitivity variation S(lambda2) - S(lambda1) with a sign test",
        "survival": "finite-horizon survival probability from one infected site",
        "conditional": "P(eta_t(r) = 1 | eta_t(-r) = 0) from one infected site",
        "oracle-check": "Monte Carlo against exact ring values, plus a duality check",
        "locate-peak": "bisect the rate where the sensitivity variation changes sign",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def parse_args(argv: list[str] | None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        renamed = {"lambda": "lam"}
        defaults = {}
        for k, v in cfg.items():
            dest = renamed.get(k, k)
            if dest not in known or dest == "config":
                raise ValidationError(f"unknown config key {k!r}")
            defaults[dest] = v
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
        # values from the file arrive as strings; run them through the flag types
        for action in sub._actions:
            val = getattr(args, action.dest, None)
            if action.dest in defaults and isinstance(val, str):
                if action.type is not None:
                    setattr(args, action.dest, action.type(val))
                elif action.const is True:
                    setattr(args, action.dest, val.lower() in ("1", "true", "yes", "on"))
    if args.samples is None:
        args.samples = harness.THEOREM1["n"] if args.preset == "theorem1" else DEFAULT_SAMPLES
    return args


def _grid(args) -> list[float]:
    if args.lambda_grid:
        return parse_grid(args.lambda_grid)
    if args.lam is not None:
        return [args.lam]
    raise ValidationError("give --lambda or --lambda-grid")


def _spec(args, mode: str, points) -> SweepSpec:
    return SweepSpec(mode=mode, points=points, p=args.p, q=args.q, r=args.r, t=args.t,
                     n=args.samples, seed=args.seed, workers=args.workers, out=args.out,
                     preset=args.preset, ring=args.ring, record_wall=args.record_wall,
                     options={"coupled": not args.independent})


def _emit(spec: SweepSpec):
    if spec.out:
        return harness.run_sweep(spec)
    return harness.run_sweep(spec, stream=sys.stdout)


def cmd_delta(args) -> int:
    if args.preset == "theorem1":
        pairs = list(harness.THEOREM1["pairs"])
        if args.lam is not None or args.lambda_grid:
            pairs = _pairs(args)
    else:
        pairs = _pairs(args)
    rows = _emit(_spec(args, "delta", pairs))
    unresolved = [r for r in rows if r.estimate.sign == 0]
    for r in unresolved:
        print(f"inconclusive: Delta({r.lambda1}, {r.lambda2}) 95% CI includes 0", file=sys.stderr)
    return EXIT_INCONCLUSIVE if unresolved else EXIT_OK


def _pairs(args) -> list[tuple[float, float]]:
    if args.lambda_grid:
        grid = parse_grid(args.lambda_grid)
        if len(grid) < 2:
            raise ValidationError("delta grid needs at least two rates")
        return list(zip(grid[:-1], grid[1:]))
    if args.lam is None or args.lambda2 is None:
        raise ValidationError("delta needs --lambda and --lambda2, or --lambda-grid")
    return [(args.lam, args.lambda2)]


def cmd_survival(args) -> int:
    grid = _grid(args)
    if not args.bracket:
        _emit(_spec(args, "survival", grid))
        return EXIT_OK
    try:
        br = harness.critical_bracket(grid, args.t, args.samples, args.seed, workers=args.workers)
    except Inconclusive as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INCONCLUSIVE
    for c in br.calls:
        print(f"lambda={c.lam!r} alive_T={c.early.mean!r} alive_2T={c.late.mean!r} "
              f"retention={c.retention!r}")
    print(f"bracket {br.lo!r} {br.hi!r}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    lam = args.lam if args.lam is not None else 1.0
    N = args.ring or 10
    t = args.t
    spec = SweepSpec(mode="oracle-check", points=[lam], t=t, n=args.samples, seed=args.seed,
                     workers=args.workers, out=args.out, ring=N, record_wall=args.record_wall)
    row = _emit(spec)[0]
    chain = oracle.RingChain(N, lam)
    u = oracle.transient_distribution(chain, [0], t).occupation(0)
    d = oracle.transient_dense(chain, [0], t).occupation(0)
    dual = oracle.check_duality(chain, [-1, 1], [0], t)
    ok_mc = abs(row.mean) <= 3 * row.stderr
    ok = ok_mc and abs(u - d) < 1e-9 and dual < 1e-8
    print(f"exact={u!r} second_method={d!r} mc_minus_exact={row.mean!r} stderr={row.stderr!r} "
          f"duality_residual={dual!r} {'ok' if ok else 'MISMATCH'}", file=sys.stderr)
    if args.fixtures:
        oracle.write_fixtures(args.fixtures)
    return EXIT_OK if ok else EXIT_INCONCLUSIVE


def cmd_locate(args) -> int:
    if args.lambda_grid:
        parts = args.lambda_grid.split(":")
        if len(parts) != 3:
            raise ValidationError("locate-peak wants --lambda-grid lo:hi:tolerance")
        lo, hi, tol = map(float, parts)
    elif args.lam is not None and args.lambda2 is not None:
        lo, hi, tol = args.lam, args.lambda2, args.width
    else:
        raise ValidationError("locate-peak needs --lambda-grid lo:hi:tolerance")
    try:
        tr = harness.locate_transition(args.p, args.q, args.r, args.t, (lo, hi), args.samples,
                                       args.seed, width=args.width, tolerance=tol,
                                       workers=args.workers)
    except Inconclusive as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INCONCLUSIVE
    for c in tr.calls:
        e = c.estimate
        print(f"lambda={c.lam!r} delta={e.mean!r} stderr={e.stderr!r} sign={c.sign:+d}")
    a, b = tr.interval
    print(f"sign change in [{a!r}, {b!r}]")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
        if args.command == "sensitivity":
            _emit(_spec(args, "sensitivity", _grid(args)))
            return EXIT_OK
        if args.command == "delta":
            return cmd_delta(args)
        if args.command == "survival":
            return cmd_survival(args)
        if args.command == "conditional":
            _emit(_spec(args, "conditional", _grid(args)))
            return EXIT_OK
        if args.command == "oracle-check":
            return cmd_oracle_check(args)
        return cmd_locate(args)
    except (ValidationError, DegenerateConditioning) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
