"""Command-line entry point: ``weylcalc <command> [options]``.

Every command writes a JSON report envelope (plus CSV side tables where
useful) into the output directory. Exit codes: 0 pass, 2 fail,
3 inconclusive, 1 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import re
import sys
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .config import Config, config_hash, load_config
from .errors import (ConfigError, EllipticityError, NoSpectralGapError, SymbolError,
                     WeylCalcError)
from .fredholm import (compactness_probe, converse_experiment, fredholm_check,
                       norm_equivalence_constant, numerical_index, parametrix,
                       random_test_functions, riesz_projector, sobolev_norms)
from .grid import PhaseGrid, write_container
from .inversion import (SymbolFamily, family_inverse, matrix_inverse_symbol,
                        regularity_check, symbol_inverse)
from .metric import (METRICS, WEIGHTS, check_axioms, check_weight, get_metric, get_weight,
                     japanese_weight, planck, sample_pairs)
from .polysym import PolySymbol, moyal_poly
from .quantize import AliasingWarning, aliasing_fraction, dequantize, moyal, weyl_quantize
from .report import (EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_PASS, EXIT_USAGE, ReportEnvelope,
                     locked, sigma_rows, write_csv, write_json)
from .symbols import BUILTINS, NATURAL_WEIGHT, partition_of_unity, sample

GAUSS = lambda x, xi: np.exp(-x * x - xi * xi)  # noqa: E731

# exact polynomial forms of the polynomial built-ins
_POLY_BUILTINS = {
    "one": PolySymbol.const(1),
    "zero": PolySymbol({}),
    "x": PolySymbol.x(),
    "xi": PolySymbol.xi(),
    "harmonic": PolySymbol.monomial(2, 0) + PolySymbol.monomial(0, 2),
    "harmonic+1": PolySymbol.monomial(2, 0) + PolySymbol.monomial(0, 2) + 1,
    "annihilation": PolySymbol.x() + PolySymbol.xi().scale(1j),
    "creation": PolySymbol.x() - PolySymbol.xi().scale(1j),
    "directional-degenerate": PolySymbol.x(),
}
_MONOMIAL = re.compile(r"^(?P<x>x(?:\^(?P<a>\d+))?)?\*?(?P<xi>xi(?:\^(?P<b>\d+))?)?$")

FAMILIES = {
    "perturbed-identity": lambda lam: (lambda x, xi: 1.0 + 0.3 * lam * GAUSS(x, xi)),
    "unitary-phase": lambda lam: (lambda x, xi: np.exp(1j * lam * GAUSS(x, xi))),
    "scalar-quadratic": lambda lam: (lambda x, xi: 1.0 + 0.3 * lam * lam * GAUSS(x, xi)),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def parse_symbol(text: str):
    """Built-in id or a monomial such as ``x^2``, ``xi^3``, ``x*xi``; returns (spec, poly)."""
    if text in BUILTINS:
        return text, _POLY_BUILTINS.get(text)
    m = _MONOMIAL.match(text)
    if text and m and (m["x"] or m["xi"]) and ("*" not in text or (m["x"] and m["xi"])):
        a = int(m["a"] or 1) if m["x"] else 0
        b = int(m["b"] or 1) if m["xi"] else 0
        p = PolySymbol.monomial(a, b)
        p.label = text
        return p, p
    raise SymbolError(f"unknown symbol id {text!r}; known: {sorted(BUILTINS)} or monomials x^a*xi^b")


def natural_weight(spec) -> "object":
    s = NATURAL_WEIGHT.get(spec if isinstance(spec, str) else "", None)
    if s is None:
        s = float(spec.degree) if isinstance(spec, PolySymbol) else 0.0
    return japanese_weight(s)


def _fraction(text: str) -> float:
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


# --------------------------------------------------------------------------
# commands; each returns (exit_code, body, side_tables)

class Context:
    def __init__(self, cfg: Config):
        self.cfg = cfg

    def grid(self, N: int | None = None) -> PhaseGrid:
        c = self.cfg
        N = N or c.N_x
        g = PhaseGrid.fourier(c.L_x, N)
        if c.L_xi is not None and N == c.N_x and abs(c.L_xi - g.L_xi) > 1e-9 * g.L_xi:
            raise ConfigError(f"grid.L_xi = {c.L_xi:g} is not Fourier-compatible with L_x = "
                              f"{c.L_x:g}, N_x = {N} (expected {g.L_xi:g} or null)")
        return g

    @property
    def metric(self):
        return get_metric(self.cfg.metric)


def cmd_metric_check(ctx: Context, args):
    m = ctx.metric
    samples = sample_pairs(args.box, args.pairs, seed=ctx.cfg.seed)
    ggrid = PhaseGrid.square(args.box + 0.5, args.geodesic_n)
    rep = check_axioms(m, samples, grid=ggrid)
    wrep = check_weight(m, get_weight(ctx.cfg.M), samples)
    P = np.array([[0.0, 0.0], [3.0, 4.0]])
    body = {"axioms": rep.to_dict(), "weight": wrep.to_dict(),
            "planck": {"points": P, "values": planck(m, P)},
            "box": args.box, "pairs": args.pairs, "geodesic_grid": ggrid.to_dict()}
    return (EXIT_PASS if rep.passed else EXIT_FAIL), body, {}


def cmd_quantize(ctx: Context, args):
    spec, _ = parse_symbol(args.symbol)
    g = ctx.grid()
    a = sample(spec, g)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasingWarning)
        A = weyl_quantize(a, window=args.window)
    back = dequantize(A)
    mask = g.core_mask()
    rt = (back - a).sup_norm(mask) / max(a.sup_norm(mask), 1e-300)
    path = ctx.out / f"quantize-{_slug(args.symbol)}.bin"
    write_container(path, A.matrix, {"grid": g.to_dict(), "d": A.d, "symbol": args.symbol,
                                     "flags": sorted(A.flags)})
    body = {"symbol": args.symbol, "grid": g.to_dict(), "d": A.d, "flags": sorted(A.flags),
            "aliasing_fraction": aliasing_fraction(a), "norm": A.norm(),
            "hermiticity_residual": A.hermiticity_residual(),
            "roundtrip_relative_error_core": rt, "container": path.name}
    return EXIT_PASS, body, {}


def _moyal_vs_oracle(sa: str, sb: str, g: PhaseGrid, tol: float) -> dict:
    spec_a, pa = parse_symbol(sa)
    spec_b, pb = parse_symbol(sb)
    c = moyal(sample(spec_a, g), sample(spec_b, g))
    out = {"a": sa, "b": sb, "N": g.N_x, "tolerance": tol}
    if pa is None or pb is None:
        out.update(oracle=None, error=None, passed=None)
        return out
    exact = moyal_poly(pa, pb)
    mask = g.core_mask()
    err = (c - sample(exact, g)).sup_norm(mask)
    out.update(oracle=repr(exact), error=err, passed=bool(err <= tol))
    return out


def cmd_moyal(ctx: Context, args):
    body = _moyal_vs_oracle(args.a, args.b, ctx.grid(args.N), args.tol)
    # without a polynomial oracle the product is reported, not judged
    return (EXIT_FAIL if body["passed"] is False else EXIT_PASS), body, {}


def _sigma_table(tables):
    return {"sigma": (["truncation", "k", "sigma"], list(sigma_rows(tables)))}


def cmd_index(ctx: Context, args):
    spec, _ = parse_symbol(args.symbol)
    c = ctx.cfg
    M = natural_weight(spec)
    try:
        if c.M1 == "one" and M.label == japanese_weight(0.0).label:
            rep = numerical_index(spec, c.rank_tol, c.truncations, L=c.L_x)
        else:
            rep = fredholm_check(spec, M, get_weight(c.M1), rank_tol=c.rank_tol,
                                 truncations=c.truncations, L=c.L_x)
    except NoSpectralGapError as exc:
        body = {"symbol": args.symbol, "M": M.label, "M1": c.M1, "status": "no spectral gap",
                "message": str(exc), "details": exc.details}
        return EXIT_INCONCLUSIVE, body, {}
    body = {"symbol": args.symbol, "M": M.label, "M1": c.M1, "report": rep.to_dict()}
    return (EXIT_PASS if rep.stable else EXIT_FAIL), body, _sigma_table(rep.sigma_tables)


def cmd_riesz(ctx: Context, args):
    spec, _ = parse_symbol(args.symbol)
    A = weyl_quantize(sample(spec, ctx.grid()))
    B = riesz_projector(A, radius=args.radius)
    ok = (B.idempotency <= args.tol and B.selfadjointness <= args.tol
          and (B.principal_angle is None or B.principal_angle <= 1e-6))
    body = {"symbol": args.symbol, "N": A.grid.N_x, "tolerance": args.tol,
            "angle_tolerance": 1e-6, "projector": B.to_dict()}
    return (EXIT_PASS if ok else EXIT_FAIL), body, {}


def cmd_parametrix(ctx: Context, args):
    spec, _ = parse_symbol(args.symbol)
    a = sample(spec, ctx.grid())
    M = natural_weight(spec)
    try:
        _, rep = parametrix(a, M, ctx.metric, args.K)
    except EllipticityError as exc:
        return EXIT_FAIL, {"symbol": args.symbol, "elliptic": False, "message": str(exc)}, {}
    ok = rep.weighted_sup <= args.bound and rep.decreasing
    body = {"symbol": args.symbol, "M": M.label, "metric": ctx.cfg.metric, "bound": args.bound,
            "report": rep.to_dict()}
    return (EXIT_PASS if ok else EXIT_FAIL), body, {}


def cmd_converse(ctx: Context, args):
    spec, _ = parse_symbol(args.symbol)
    c = ctx.cfg
    rep = converse_experiment(spec, ctx.metric, truncations=c.truncations, L=c.L_x,
                              K_radius=args.K, rank_tol=c.rank_tol)
    body = {"symbol": args.symbol, "report": rep.to_dict()}
    if rep.inconclusive:
        return EXIT_INCONCLUSIVE, body, {}
    return (EXIT_PASS if rep.consistent else EXIT_FAIL), body, {}


def sobolev_constant(metric, grid: PhaseGrid, M, *, count=50, seed=0, r=1.0):
    fam = partition_of_unity(grid, metric, r, confinement_k=None)
    U = random_test_functions(grid, count, seed)
    vals = sobolev_norms(U, M, fam, grid)
    l2 = np.sqrt(np.sum(np.abs(U) ** 2, axis=0) * grid.dx)
    return norm_equivalence_constant(vals, l2), vals / l2, len(fam)


def cmd_sobolev(ctx: Context, args):
    g = ctx.grid(args.N)
    M = get_weight(args.weight)
    C, ratios, n = sobolev_constant(ctx.metric, g, M, count=args.count, seed=ctx.cfg.seed, r=args.r)
    body = {"metric": ctx.cfg.metric, "weight": M.label, "N": g.N_x, "r": args.r,
            "functions": args.count, "members": n, "constant": C, "bound": args.bound,
            "ratio_min": float(np.min(ratios)), "ratio_max": float(np.max(ratios))}
    return (EXIT_PASS if C <= args.bound else EXIT_FAIL), body, {}


def cmd_invert(ctx: Context, args):
    spec, _ = parse_symbol(args.symbol)
    g = ctx.grid()
    tol = ctx.cfg.residual_tol
    a = sample(spec, g)
    b = symbol_inverse(a, trace=not args.no_trace, residual_tol=tol)
    ref = matrix_inverse_symbol(a)
    agree = (b - ref).sup_norm(g.core_mask())
    info = dict(b.info)
    ratios = [v for v in info["neumann"]["fitted_ratio"].values() if v is not None]
    ok = (info["residual_left"] <= tol and info["residual_right"] <= tol and agree <= tol
          and info["neumann"]["converged"] and all(v < 1 for v in ratios))
    body = {"symbol": args.symbol, "grid": g.to_dict(), "residual_tol": tol,
            "agreement_with_matrix_inverse": agree, "info": info}
    return (EXIT_PASS if ok else EXIT_FAIL), body, {}


def load_manifest(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read manifest ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    keys = {"family", "lambda_min", "lambda_max", "step", "N"}
    if not isinstance(raw, dict) or set(raw) - keys or keys - set(raw):
        raise ConfigError(f"manifest must have exactly the keys {sorted(keys)}")
    if raw["family"] not in FAMILIES:
        raise ConfigError(f"manifest.family: unknown {raw['family']!r}; known: {sorted(FAMILIES)}")
    step = float(raw["step"])
    lo, hi = float(raw["lambda_min"]), float(raw["lambda_max"])
    if step <= 0 or hi <= lo:
        raise ConfigError("manifest: need step > 0 and lambda_max > lambda_min")
    count = int(round((hi - lo) / step)) + 1
    if abs(lo + (count - 1) * step - hi) > 1e-9 * max(1.0, abs(hi)):
        raise ConfigError("manifest: (lambda_max - lambda_min) must be a multiple of step")
    if not isinstance(raw["N"], int) or not 1 <= raw["N"] <= 3:
        raise ConfigError("manifest.N: regularity order must be an integer in 1..3")
    return {"family": raw["family"], "lambda_min": lo, "lambda_max": hi, "step": step,
            "N": raw["N"], "count": count}


def build_family(man: dict, grid: PhaseGrid) -> SymbolFamily:
    f = FAMILIES[man["family"]]
    return SymbolFamily.from_function(lambda t: sample(f(t), grid), man["lambda_min"],
                                      man["lambda_max"], man["count"], N=man["N"],
                                      label=man["family"])


def _run_family(ctx, man, with_regularity: bool):
    g = ctx.grid()
    tol = ctx.cfg.residual_tol
    fam = build_family(man, g)
    inv = family_inverse(fam, residual_tol=tol)
    body = {"manifest": man, "grid": g.to_dict(), "residual_tol": tol,
            "residuals": inv.info["residuals"], "continuity_ratio": inv.info["continuity_ratio"]}
    ok = max(inv.info["residuals"]) <= tol
    if with_regularity:
        rep = regularity_check(fam, inv, man["N"])
        body["regularity"] = rep.to_dict()
    return ok, body, fam, inv


def cmd_invert_family(ctx: Context, args):
    man = load_manifest(args.manifest)
    ok, body, _, _ = _run_family(ctx, man, with_regularity=False)
    return (EXIT_PASS if ok else EXIT_FAIL), body, {}


def cmd_regularity(ctx: Context, args):
    if args.manifest:
        man = load_manifest(args.manifest)
    else:
        h = args.h
        half = args.order + 2
        man = {"family": args.family, "lambda_min": args.center - half * h,
               "lambda_max": args.center + half * h, "step": h, "N": args.order,
               "count": 2 * half + 1}
    ok, body, _, _ = _run_family(ctx, man, with_regularity=True)
    orders = body["regularity"]["orders"]
    o1 = orders["1"]
    ok = ok and o1["error_h"] <= args.tol and o1["slope"] >= args.min_slope
    body.update(tolerance=args.tol, min_slope=args.min_slope)
    return (EXIT_PASS if ok else EXIT_FAIL), body, {}


def demo_composition(ctx: Context, args):
    g = ctx.grid(args.N or 512)
    tol = 1e-6
    checks = [_moyal_vs_oracle("x", "xi", g, tol), _moyal_vs_oracle("x^2", "xi^2", g, tol)]
    G = sample(GAUSS, g)
    err = (moyal(G, G) - 0.5 * G).sup_norm(g.core_mask())
    checks.append({"a": "gaussian", "b": "gaussian", "N": g.N_x, "tolerance": tol,
                   "oracle": "exp(-x^2-xi^2)/2", "error": err, "passed": bool(err <= tol)})
    ok = all(c["passed"] for c in checks)
    return (EXIT_PASS if ok else EXIT_FAIL), {"checks": checks}, {}


def demo_index_invariance(ctx: Context, args):
    c = ctx.cfg
    rows, tables = [], {}
    for M1 in ("one", "japanese", "japanese2"):
        try:
            rep = fredholm_check("annihilation", japanese_weight(1.0), get_weight(M1),
                                 rank_tol=c.rank_tol, truncations=c.truncations, L=c.L_x)
        except NoSpectralGapError as exc:
            rows.append({"M1": M1, "index": None, "stable": False, "message": str(exc)})
            continue
        rows.append({"M1": M1, "index": rep.index, "stable": rep.stable, "report": rep.to_dict()})
        tables.update({f"sigma-{M1}": (["truncation", "k", "sigma"],
                                       list(sigma_rows(rep.sigma_tables)))})
    idx = {r["index"] for r in rows}
    if any(r["index"] is None for r in rows):
        code = EXIT_INCONCLUSIVE
    else:
        code = EXIT_PASS if idx == {1} and all(r["stable"] for r in rows) else EXIT_FAIL
    return code, {"symbol": "annihilation", "runs": rows, "indices": sorted(
        i for i in idx if i is not None)}, tables


def demo_compactness(ctx: Context, args):
    c = ctx.cfg
    van = compactness_probe("vanishing", c.truncations, L=c.L_x)
    one = compactness_probe("one", c.truncations, L=c.L_x)
    dev = max(float(np.max(np.abs(t - 1.0))) for t in one.tables.values())
    ok = all(v < 1e-2 for v in van.sigma_k.values()) and van.stable and van.monotone and dev <= 1e-10
    body = {"vanishing": van.to_dict(), "one": one.to_dict(), "one_max_deviation": dev,
            "sigma_threshold": 1e-2}
    return (EXIT_PASS if ok else EXIT_FAIL), body, _sigma_table(van.tables)


def demo_harmonic(ctx: Context, args):
    g = ctx.grid(args.N or 512)
    A = weyl_quantize(sample("harmonic", g))
    ev = np.sort(np.linalg.eigvalsh(0.5 * (A.matrix + A.matrix.conj().T)))[:10]
    exact = 2 * np.arange(10) + 1
    err = float(np.max(np.abs(ev - exact)))
    body = {"N": g.N_x, "L": g.L_x, "eigenvalues": ev, "oracle": exact, "error": err,
            "tolerance": 1e-6}
    return (EXIT_PASS if err <= 1e-6 else EXIT_FAIL), body, {}


DEMOS = {"composition": demo_composition, "index-invariance": demo_index_invariance,
         "compactness": demo_compactness, "harmonic": demo_harmonic}


def cmd_demo(ctx: Context, args):
    return DEMOS[args.name](ctx, args)


def _slug(s: str) -> str:
    return re.sub(r"[^A-Za-z0-9.+-]+", "_", s)


# --------------------------------------------------------------------------
# parser

def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", metavar="PATH", default=d)
    p.add_argument("--out", metavar="DIR", default=d)
    p.add_argument("--grid", metavar="N", type=int, default=d, help="N_x")
    p.add_argument("--metric", metavar="ID", default=d, help=f"one of {sorted(METRICS)}")
    p.add_argument("--seed", metavar="U64", type=_u64, default=d)
    p.add_argument("--fast-delta", action="store_true", default=d if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="weylcalc", description="Weyl-Hörmander calculus experiments.")
    p.add_argument("--version", action="version", version=f"weylcalc {__version__}")
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        _global_flags(sp, suppress=True)
        sp.set_defaults(func=func)
        return sp

    sp = add("metric-check", cmd_metric_check, "fit Hörmander axiom constants of a metric")
    sp.add_argument("--box", type=float, default=6.0)
    sp.add_argument("--pairs", type=int, default=500)
    sp.add_argument("--geodesic-n", type=int, default=64)

    sp = add("quantize", cmd_quantize, "Weyl matrix of a symbol (binary container + diagnostics)")
    sp.add_argument("--symbol", required=True)
    sp.add_argument("--window", choices=["auto", "on", "off"], default="auto")

    sp = add("moyal", cmd_moyal, "grid # product, compared with the exact polynomial product")
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--N", type=int, default=None)
    sp.add_argument("--tol", type=float, default=1e-6)

    sp = add("index", cmd_index, "numerical Fredholm index across truncations")
    sp.add_argument("--symbol", required=True)

    sp = add("riesz", cmd_riesz, "Riesz projector onto the kernel")
    sp.add_argument("--symbol", default="annihilation")
    sp.add_argument("--radius", type=float, default=0.5)
    sp.add_argument("--tol", type=float, default=1e-8)

    sp = add("parametrix", cmd_parametrix, "parametrix and weighted remainder decay")
    sp.add_argument("--symbol", default="annihilation")
    sp.add_argument("--K", type=float, default=1.0)
    sp.add_argument("--bound", type=float, default=10.0)

    sp = add("converse", cmd_converse, "ellipticity versus numerical Fredholmness")
    sp.add_argument("--symbol", required=True)
    sp.add_argument("--K", type=float, default=1.0)

    sp = add("sobolev", cmd_sobolev, "H(M, g) norm versus L2 on random test functions")
    sp.add_argument("--weight", default="one", choices=sorted(WEIGHTS))
    sp.add_argument("--N", type=int, default=128)
    sp.add_argument("--r", type=float, default=1.0)
    sp.add_argument("--count", type=int, default=50)
    sp.add_argument("--bound", type=float, default=10.0)

    sp = add("invert", cmd_invert, "# inverse by the Neumann route, checked against LU")
    sp.add_argument("--symbol", default="perturbed-identity")
    sp.add_argument("--no-trace", action="store_true")

    sp = add("invert-family", cmd_invert_family, "invert a lambda family from a manifest")
    sp.add_argument("--manifest", required=True)

    sp = add("regularity", cmd_regularity, "derivative identity and Richardson slopes in lambda")
    sp.add_argument("--manifest", default=None)
    sp.add_argument("--family", choices=sorted(FAMILIES), default="perturbed-identity")
    sp.add_argument("--order", type=int, choices=[1, 2, 3], default=1)
    sp.add_argument("--h", type=_fraction, default=1.0 / 64)
    sp.add_argument("--center", type=float, default=0.5)
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.add_argument("--min-slope", type=float, default=1.9)

    sp = add("demo", cmd_demo, "preset experiments")
    sp.add_argument("name", choices=sorted(DEMOS))
    sp.add_argument("--N", type=int, default=None)
    return p


def resolve_config(args) -> Config:
    cfg = load_config(args.config) if getattr(args, "config", None) else Config()
    over = {"out": getattr(args, "out", None), "N_x": getattr(args, "grid", None),
            "metric": getattr(args, "metric", None), "seed": getattr(args, "seed", None)}
    if getattr(args, "fast_delta", False):
        over["fast_delta"] = True
    return cfg.replace(**over)


def run_command(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        if getattr(args, "window", None) in ("on", "off"):
            args.window = args.window == "on"
    except (UsageError, ConfigError, SymbolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    ctx = Context(cfg)
    out = Path(cfg.out)
    command = args.command + (f" {args.name}" if args.command == "demo" else "")
    try:
        with locked(out):
            ctx.out = out
            code, body, tables = args.func(ctx, args)
            body = dict(body, config=cfg.to_dict())
            env = ReportEnvelope(command, config_hash(cfg), body, code)
            stem = _slug(command.replace(" ", "-"))
            write_json(out / f"{stem}.json", env)
            for name, (header, rows) in tables.items():
                write_csv(out / f"{stem}-{name}.csv", header, rows)
    except (ConfigError, SymbolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except WeylCalcError as exc:
        print(f"{command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(f"{command}: {env.status} (report: {out / (stem + '.json')})")
    return code


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
