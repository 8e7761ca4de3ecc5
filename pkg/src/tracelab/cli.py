"""Command-line experiment harness.

Exit codes: 0 success, 1 runtime failure, 2 invalid arguments.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from .channel import (
    ChannelError,
    ChannelParams,
    SourceString,
    make_rng,
    read_trace_file,
    sample_traces,
    write_trace_file,
)
from .cpoly import (
    ArcSpec,
    DiskSpec,
    RootFindingError,
    channel_poly_deletion,
    eval_poly,
    general_w_map,
    geometric_mean_on_arc,
    geometric_mean_on_circle,
    mahler_measure,
    mahler_measure_numeric,
    max_modulus_on_circle,
    poly_roots,
)
from .littlewood import GuardrailError, arc_construct, gm_arc_bound_check, kappa_littlewood_bruteforce
from .meantrace import (
    MeanTrace,
    MeanTraceError,
    effective_trace_length,
    empirical_mean_trace,
    exact_mean_trace_deletion,
    exact_mean_trace_general,
)
from .reconstruct import ReconstructionConfig, reconstruct_mean_based

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
SUITES = ("mahler", "gm-arc", "mobius", "sandwich", "arc-witness")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _ints(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected integers or ranges like 4-8, got {text!r}")
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def _params(args) -> ChannelParams:
    return ChannelParams(args.delta, args.sigma, args.gamma)


def _source(args, n: int | None) -> SourceString:
    if args.source is not None:
        x = SourceString(args.source)
        if n is not None and len(x) != n:
            raise UsageError(f"--source has length {len(x)} but --n is {n}")
        return x
    if n is None:
        raise UsageError("either --source or --n is required")
    if args.seed is None:
        raise UsageError("a random source needs --seed")
    return SourceString.random(n, make_rng(args.seed))


# -- subcommands ------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.seed is None:
        raise UsageError("simulate needs --seed")
    if args.m < 1:
        raise UsageError("--m must be >= 1")
    if args.out is None:
        raise UsageError("simulate needs --out")
    params = _params(args)
    x = _source(args, args.n)
    batch = sample_traces(x, params, args.m, args.seed, threads=args.threads)
    write_trace_file(args.out, batch)
    if args.source_out:
        _emit(str(x), args.source_out)
    return EXIT_OK


def cmd_mean(args) -> int:
    if args.traces:
        batch = read_trace_file(args.traces)
        if args.n is not None and args.n != batch.n:
            raise UsageError(f"--n {args.n} does not match n={batch.n} in {args.traces}")
        N = batch.n if batch.params.sigma == 0.0 else effective_trace_length(batch.n, batch.params.sigma)
        mt = empirical_mean_trace(batch, N)
    else:
        params = _params(args)
        x = _source(args, args.n)
        if params.sigma == 0.0 and params.gamma == 0.0:
            mt = exact_mean_trace_deletion(x, params.delta)
        else:
            mt = exact_mean_trace_general(x, params)
        mt.meta["source"] = str(x)
    _emit(mt.to_json(), args.out)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    if args.input is None:
        raise UsageError("reconstruct needs --input (mean-trace JSON)")
    with open(args.input, encoding="utf-8") as fh:
        mt = MeanTrace.from_json(fh.read())
    delta = args.delta if args.delta is not None else mt.delta
    n = args.n if args.n is not None else mt.n
    params = ChannelParams(delta, mt.sigma, mt.gamma)
    cfg = ReconstructionConfig(s=args.s, delta=delta)
    if params.is_deletion_only:
        if mt.N != n:
            raise UsageError(f"mean trace has {mt.N} entries but n={n}")
        report = reconstruct_mean_based(mt.values, delta, n, cfg)
    else:
        report = reconstruct_mean_based(mt.values, None, n, cfg, params=params)
    if args.truth is not None:
        truth = SourceString(args.truth)
        if len(truth) != n:
            raise UsageError(f"--truth has length {len(truth)} but n={n}")
        report.success = report.recovered == truth
    _emit(report.to_json(), args.out)
    return EXIT_OK


def cmd_kappa(args) -> int:
    results = []
    for n in args.n_list:
        for rho in args.rho:
            if not 0.0 < rho < 1.0:
                raise UsageError(f"--rho values must lie in (0, 1), got {rho}")
            res = kappa_littlewood_bruteforce(rho, n, grid=args.grid)
            results.append(res)
            print(f"kappa rho={rho} n={n} value={res.value:.6g}", file=sys.stderr)
    if args.format == "json":
        text = json.dumps({"schema": "v1", "rows": [
            {"rho": r.rho, "n": r.n, "kappa": r.value, "slack": r.slack,
             "argmin": r.csv_row()[4]} for r in results]}, indent=2)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["rho", "n", "kappa", "slack", "argmin"])
        for r in results:
            writer.writerow([repr(r.rho), r.n, repr(r.value), repr(r.slack), r.csv_row()[4]])
        text = buf.getvalue()
    _emit(text, args.out)
    return EXIT_OK


# -- verification suites -------------------------------------------------------

@dataclass
class SuiteResult:
    name: str
    trials: int
    failures: int
    worst: float  # smallest (lhs - rhs) seen, relative where noted

    @property
    def passed(self) -> bool:
        return self.failures == 0


def _admissible_poly(rng, max_degree: int = 20) -> np.ndarray:
    deg = int(rng.integers(1, max_degree + 1))
    rad = np.sqrt(rng.random(deg))
    tail = rad * np.exp(2j * np.pi * rng.random(deg))
    return np.concatenate([[np.exp(2j * np.pi * rng.random())], tail])


def suite_mahler(trials: int, rng, fault: float) -> SuiteResult:
    """GM over a circle is at least |Q(center)|; roots and quadrature agree."""
    fails, worst, done = 0, math.inf, 0
    while done < trials:
        deg = int(rng.integers(1, 21))
        p = rng.normal(size=deg + 1) + 1j * rng.normal(size=deg + 1)
        try:
            roots = poly_roots(p)
        except RootFindingError:
            continue
        # Quadrature converges slowly when a root sits on the unit circle.
        if np.any(np.abs(np.abs(roots) - 1.0) < 1e-3):
            continue
        done += 1
        c = complex(rng.normal(), rng.normal())
        R = float(rng.uniform(0.1, 2.0))
        gm = fault * geometric_mean_on_circle(p, DiskSpec(c, R), 1 << 12)
        val = abs(eval_poly(p, c))
        m_roots = fault * mahler_measure(p)
        m_quad = mahler_measure_numeric(p)
        rel = abs(m_roots - m_quad) / m_quad
        ok = gm >= val * (1 - 1e-9) and rel <= 1e-6
        worst = min(worst, gm - val)
        fails += not ok
    return SuiteResult("mahler", trials, fails, worst)


def suite_gm_arc(trials: int, rng, fault: float) -> SuiteResult:
    fails, worst = 0, math.inf
    for _ in range(trials):
        p = _admissible_poly(rng)
        for theta in (math.pi / 8, math.pi / 4):
            for r in (0.3, 0.6):
                rep = gm_arc_bound_check(p, theta, r)
                gm = fault * rep.gm
                # a 4x finer quadrature must agree, which also catches a scaled GM
                fine = geometric_mean_on_arc(p, ArcSpec(1.0 / 3.0, r, theta), 1 << 14)
                worst = min(worst, gm / rep.bound)
                fails += not (gm >= rep.bound * (1 - 1e-6) and abs(gm - fine) <= 1e-3 * fine)
    return SuiteResult("gm-arc", trials, fails, worst)


def suite_mobius(trials: int, rng, fault: float) -> SuiteResult:
    fails, worst = 0, math.inf
    z = np.exp(2j * np.pi * rng.random(1000))
    for _ in range(trials):
        params = ChannelParams(*rng.uniform(0.0, 0.95, size=3))
        w = general_w_map(z, params)
        r = params.r
        dev = np.abs(fault * np.abs(w - (1.0 - r)) - r).max()
        worst = min(worst, -dev)
        fails += not dev <= 1e-10
    return SuiteResult("mobius", trials, fails, worst)


def suite_sandwich(trials: int, rng, fault: float) -> SuiteResult:
    fails, worst = 0, math.inf
    unit = DiskSpec(0.0, 1.0)
    for _ in range(trials):
        n = int(rng.integers(1, 13))
        b = rng.integers(-1, 2, size=n)
        if not b.any():
            b[int(rng.integers(n))] = 1
        delta = float(rng.uniform(0.0, 0.95))
        l1 = fault * float(np.abs(exact_mean_trace_deletion(b, delta).values).sum())
        mm = max_modulus_on_circle(exact_mean_trace_deletion(b, delta).values, unit)
        lower_ok = mm.value <= l1 * (1 + 1e-12)
        upper_ok = l1 <= math.sqrt(n) * mm.upper * (1 + 1e-12)
        # the channel polynomial through w agrees with the mean-trace polynomial
        z = unit.points(64)
        agree = np.allclose(channel_poly_deletion(b, delta, z),
                            eval_poly(exact_mean_trace_deletion(b, delta).values, z), atol=1e-12)
        worst = min(worst, l1 - mm.value)
        fails += not (lower_ok and upper_ok and agree)
    return SuiteResult("sandwich", trials, fails, worst)


def suite_arc_witness(trials: int, rng, fault: float) -> SuiteResult:
    fails, worst = 0, math.inf
    for _ in range(trials):
        if rng.random() < 0.5:
            delta = float(rng.uniform(0.01, 0.49))
            theta = float(rng.uniform(0.01, 0.5))
        else:
            rho = float(rng.uniform(0.02, 0.5))
            delta = 1.0 - rho
            theta = float(rng.uniform(0.005, rho))
        rho = 1.0 - delta
        try:
            wit = arc_construct(theta, rho, delta)
        except ValueError:
            continue
        mod = fault * abs(wit.w0)
        on_circle = abs(abs(wit.w0 - delta) - rho) <= 1e-12
        worst = min(worst, mod - wit.modulus_bound)
        fails += not (mod >= wit.modulus_bound - 1e-12 and on_circle)
    return SuiteResult("arc-witness", trials, fails, worst)


_SUITE_FUNCS = {
    "mahler": suite_mahler,
    "gm-arc": suite_gm_arc,
    "mobius": suite_mobius,
    "sandwich": suite_sandwich,
    "arc-witness": suite_arc_witness,
}


def run_suites(names, trials: int, seed: int, fault: float = 1.0) -> list[SuiteResult]:
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(len(SUITES))
    results = []
    for name, child in zip(SUITES, children):
        if name in names:
            results.append(_SUITE_FUNCS[name](trials, np.random.default_rng(child), fault))
    return results


def cmd_verify(args) -> int:
    names = SUITES if args.suite in (None, "all") else (args.suite,)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    fault = 0.9 if args.inject_fault else 1.0
    results = run_suites(names, args.trials, 0 if args.seed is None else args.seed, fault)
    if args.format == "json":
        text = json.dumps({"schema": "v1", "suites": [
            {"suite": r.name, "trials": r.trials, "failures": r.failures, "worst": r.worst,
             "passed": r.passed} for r in results]}, indent=2)
    else:
        text = "\n".join(f"{r.name}: {'PASS' if r.passed else 'FAIL'} "
                         f"({r.failures} failures in {r.trials} trials)" for r in results)
    _emit(text, args.out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


# -- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tracelab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def channel_flags(p):
        p.add_argument("--delta", type=float, default=0.0)
        p.add_argument("--sigma", type=float, default=0.0)
        p.add_argument("--gamma", type=float, default=0.0)

    def common(p, fmt=("json",)):
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--format", choices=fmt, default=fmt[0])
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("simulate", help="draw traces and write a trace batch file")
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--source", help="source string over {+,-}; random from --seed if omitted")
    p.add_argument("--source-out", help="also write the source string here")
    channel_flags(p)
    common(p, ("text",))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mean", help="exact mean trace, or empirical from --traces")
    p.add_argument("--n", type=int)
    p.add_argument("--source")
    p.add_argument("--traces", help="trace batch file for the empirical mean")
    channel_flags(p)
    common(p)
    p.set_defaults(func=cmd_mean)

    p = sub.add_parser("reconstruct", help="decode a mean-trace JSON file")
    p.add_argument("--input")
    p.add_argument("--n", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--s", type=int, default=512)
    p.add_argument("--truth")
    common(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("kappa", help="brute-force kappa sweep over rho and n")
    p.add_argument("--rho", type=_floats, required=True)
    p.add_argument("--n", dest="n_list", type=_ints, required=True)
    p.add_argument("--grid", type=int, default=1024)
    common(p, ("csv", "json"))
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("verify", help="run the bound-checking suites")
    p.add_argument("--suite", choices=("all",) + SUITES, default="all")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--inject-fault", action="store_true",
                   help="scale every measured quantity by 0.9; the run must then fail")
    common(p, ("text", "json"))
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "n", None) is not None and args.n < 1:
            raise UsageError("--n must be >= 1")
        return args.func(args)
    except (UsageError, ChannelError, GuardrailError, MeanTraceError) as exc:
        print(f"tracelab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"tracelab: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
