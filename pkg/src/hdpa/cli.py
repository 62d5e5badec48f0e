"""Command-line interface: ``hdpa {estimate,simulate,limits,region,curves}``.

Exit codes: 0 success, 2 unreadable input or bad usage, 3 violated
precondition.  Options may also come from ``--config FILE``, a flat
``key = value`` file using long option names; flags on the command line win.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import AspectRatios, SpikedModel, h_jump_limit, inconsistency_boundary, limit_profile
from .errors import ContractViolation, DataParseError, DomainError
from .estimators import hdpa_estimate, pa_estimate
from .simharness import (
    REGIME_CELLS,
    CSV_SCHEMA_LINE,
    GeneratorSpec,
    FULL_GAMMA_PS,
    FULL_GAMMA_RS,
    FULL_NS,
    DEFAULT_SPIKES,
    SimulationGrid,
    average_phi_curves,
    generate,
    run_grid,
)
from .spectral import RngSeed, derive_seed, read_matrix_csv, write_matrix_csv
from .svg import Series, line_chart

log = logging.getLogger("hdpa")

EXIT_PARSE = 2
EXIT_PRECONDITION = 3

DESK_NS = (500, 1000)
DESK_GAMMA_PS = (0.05, 0.5)
DESK_GAMMA_RS = (0.5, 5.0)


class CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return "nan" if math.isnan(x) else format(x, ".17g")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [CSV_SCHEMA_LINE, ",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _formats(text: str) -> tuple[str, ...]:
    out = tuple(v.strip().lower() for v in text.split(",") if v.strip())
    bad = set(out) - {"csv", "json", "svg"}
    if bad:
        raise argparse.ArgumentTypeError(f"unknown output format(s): {', '.join(sorted(bad))}")
    return out


def _sigma2_option(text: str) -> float | str:
    text = text.strip().lower()
    if text in ("estimate", "estimated"):
        return "estimate"
    if text.startswith("oracle:"):
        text = text[len("oracle:"):]
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'estimate' or 'oracle:<value>'") from None
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError("oracle noise variance must be positive")
    return value


def _sim_sigma2_option(text: str) -> tuple[str, float | None]:
    text = text.strip().lower()
    if text in ("estimate", "estimated"):
        return ("estimated", None)
    if text == "oracle":
        return ("oracle", None)
    value = _sigma2_option(text)
    return ("oracle", value)


def _cell(text: str) -> tuple[int, float, float]:
    keys = {}
    for part in text.split(","):
        k, _, v = part.partition("=")
        keys[k.strip().lower()] = v.strip()
    try:
        return int(keys["n"]), float(keys["gp"]), float(keys["gr"])
    except (KeyError, ValueError):
        raise argparse.ArgumentTypeError(f"cell must look like n=1000,gp=0.5,gr=5; got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdpa", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, help="flat key = value file of default options")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate the signal dimension of a CSV data set")
    est.add_argument("--input", "-i", type=Path, required=True)
    est.add_argument("--method", choices=("pa", "hdpa"), default="hdpa")
    grp = est.add_mutually_exclusive_group(required=True)
    grp.add_argument("--r", type=int, help="number of augmented noise columns")
    grp.add_argument("--gamma-r", type=float, help="augmented columns as a multiple of n")
    est.add_argument("--sigma2", type=_sigma2_option, default="estimate", help="estimate | oracle:<value>")
    est.add_argument("--K", type=int, default=None)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--n-aug", type=int, default=1, help="average block norms over this many augmentations")
    est.add_argument("--out", type=Path, default=Path("."))
    est.add_argument("--format", type=_formats, default=("json",))

    sim = sub.add_parser("simulate", help="run the Monte Carlo study or emit a synthetic data set")
    sim.add_argument("--cell", type=_cell, action="append", help="n=<int>,gp=<ratio>,gr=<ratio>; repeatable")
    sim.add_argument("--full", action="store_true", help="run the full n x gamma_p x gamma_r grid")
    sim.add_argument("--m", type=int, default=100)
    sim.add_argument("--method", choices=("pa", "hdpa"), action="append")
    sim.add_argument("--sigma2", type=_sim_sigma2_option, action="append",
                     help="oracle | oracle:<value> | estimate; repeatable (default both)")
    sim.add_argument("--model", choices=("gaussian", "bernoulli"), action="append")
    sim.add_argument("--spikes", type=_floats, default=None, help="spike sizes (default 5, 4.8, ..., 3)")
    sim.add_argument("--noise", type=float, default=1.0, help="true noise variance")
    sim.add_argument("--K", type=int, default=None)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--threads", type=int, default=None, help="worker processes (default HDPA_THREADS, 0 = auto)")
    sim.add_argument("--out", type=Path, default=Path("."))
    sim.add_argument("--format", type=_formats, default=("csv", "json"))
    sim.add_argument("--timing", action="store_true", help="include wall times in the JSON report")
    sim.add_argument("--emit-data", type=Path, default=None, help="write one generated data set here and exit")
    sim.add_argument("--n", type=int, default=1000, help="rows for --emit-data")
    sim.add_argument("--p", type=int, default=None, help="columns for --emit-data")
    sim.add_argument("--gamma-p", type=float, default=0.25, help="columns/rows for --emit-data when --p is absent")

    lim = sub.add_parser("limits", help="tabulate probability limits of the statistics")
    lim.add_argument("--gamma-p", type=float, required=True)
    lim.add_argument("--gamma-r", type=float, required=True)
    lim.add_argument("--spikes", type=_floats, required=True)
    lim.add_argument("--sigma2", type=float, default=1.0)
    lim.add_argument("--K", type=int, default=5)
    lim.add_argument("--out", type=Path, default=Path("."))
    lim.add_argument("--format", type=_formats, default=("csv",))

    reg = sub.add_parser("region", help="sweep the boundary of the inconsistency region")
    reg.add_argument("--sweep", choices=("lambda", "gamma_p"), default="lambda")
    reg.add_argument("--gamma-p", type=float, default=0.75, help="fixed gamma_p for a lambda sweep")
    reg.add_argument("--lambda", dest="lam", type=float, default=1.0, help="fixed spike for a gamma_p sweep")
    reg.add_argument("--min", dest="lo", type=float, default=None)
    reg.add_argument("--max", dest="hi", type=float, default=None)
    reg.add_argument("--steps", type=int, default=50)
    reg.add_argument("--sigma2", type=float, default=1.0)
    reg.add_argument("--out", type=Path, default=Path("."))
    reg.add_argument("--format", type=_formats, default=("csv",))

    cur = sub.add_parser("curves", help="average augmentation curves next to their limits")
    cur.add_argument("--n", type=int, default=400)
    cur.add_argument("--m", type=int, default=100)
    cur.add_argument("--lambda", dest="lam", type=float, default=1.0)
    cur.add_argument("--sigma2", type=float, default=1.0)
    cur.add_argument("--K", type=int, default=6)
    cur.add_argument("--seed", type=int, default=0)
    cur.add_argument("--threads", type=int, default=None)
    cur.add_argument("--out", type=Path, default=Path("."))
    cur.add_argument("--format", type=_formats, default=("csv", "svg"))
    return parser


def read_config(path: Path) -> dict[str, str]:
    out = {}
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_PARSE) from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"{path}:{lineno}: expected key = value", EXIT_PARSE)
        out[key.strip().replace("_", "-")] = value.strip()
    return out


def _merge_config(argv: list[str], config: dict[str, str]) -> list[str]:
    # Config entries become flags placed before the user's own, so that the
    # command line wins for single-valued options.
    try:
        cmd_at = next(i for i, a in enumerate(argv) if a in ("estimate", "simulate", "limits", "region", "curves"))
    except StopIteration:
        return argv
    given = {a.split("=", 1)[0] for a in argv[cmd_at + 1:] if a.startswith("--")}
    extra: list[str] = []
    for key, value in config.items():
        flag = f"--{key}"
        if flag in given:
            continue
        if value.lower() in ("true", "yes", "on"):
            extra.append(flag)
        elif value.lower() in ("false", "no", "off"):
            continue
        else:
            extra.extend([flag, value])
    return argv[: cmd_at + 1] + extra + argv[cmd_at + 1:]


def cmd_estimate(args) -> int:
    x = read_matrix_csv(args.input)
    n, p = x.shape
    if n < 3:
        raise DomainError(f"need at least 3 observations, got {n}")
    if args.K is not None and args.K > p:
        raise DomainError(f"K exceeds p: K={args.K}, p={p}")
    r = args.r if args.r is not None else int(round(args.gamma_r * n))
    if r < 1:
        raise DomainError(f"augmentation size r={r} must be at least 1")
    est = hdpa_estimate if args.method == "hdpa" else pa_estimate
    report = est(x, r, args.sigma2, args.K, RngSeed(args.seed), n_aug=args.n_aug)
    args.out.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload.update({"n": n, "p": p, "r": r, "seed": args.seed, "input": str(args.input)})
    stem = f"estimate_{args.method}"
    if "json" in args.format:
        (args.out / f"{stem}.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    key = "h_diff" if report.method == "HDPA" else "phi"
    seq = report.diagnostics[key]
    start = report.search_range[0]
    if "csv" in args.format:
        _write_csv(args.out / f"{stem}.csv", ["index", key], [[str(start + i), v] for i, v in enumerate(seq)])
    if "svg" in args.format:
        label = "h[j+1] - h[j]" if key == "h_diff" else "phi(k)"
        svg = line_chart([Series(label, [start + i for i in range(len(seq))], seq, "both")],
                         title=f"{report.method}: estimated dimension {report.d_hat}",
                         xlabel="index", ylabel=label)
        (args.out / f"{stem}.svg").write_text(svg, encoding="utf-8")
    print(f"{report.method} d_hat={report.d_hat} sigma2={report.sigma2_used:.6g} ({report.sigma2_source})")
    for note in report.warnings:
        print(f"note: {note}", file=sys.stderr)
    return 0


def _emit_data(args) -> int:
    p = args.p if args.p is not None else int(round(args.gamma_p * args.n))
    spikes = args.spikes or DEFAULT_SPIKES
    model = (args.model or ["gaussian"])[0]
    x = generate(GeneratorSpec(model, tuple(spikes), p, args.n, args.noise), RngSeed(args.seed))
    write_matrix_csv(args.emit_data, x)
    print(f"wrote {args.n}x{p} {model} sample to {args.emit_data}")
    return 0


def cmd_simulate(args) -> int:
    if args.emit_data is not None:
        return _emit_data(args)
    spikes = tuple(args.spikes) if args.spikes else DEFAULT_SPIKES
    methods = tuple(dict.fromkeys(m.upper() for m in (args.method or ["pa", "hdpa"])))
    modes = args.sigma2 or [("oracle", None), ("estimated", None)]
    oracle_values = {v for mode, v in modes if mode == "oracle" and v is not None}
    if len(oracle_values) > 1:
        raise DomainError("at most one oracle noise variance may be given")
    sigma2_modes = tuple(dict.fromkeys(mode for mode, _ in modes))
    models = tuple(dict.fromkeys(args.model or ["gaussian", "bernoulli"]))
    common = dict(m=args.m, models=models, methods=methods, sigma2_modes=sigma2_modes,
                  base_seed=args.seed, spikes=spikes, sigma2=args.noise, K=args.K,
                  oracle_sigma2=next(iter(oracle_values), None))
    if args.cell:
        grids = [SimulationGrid((n,), (gp,), (gr,), **common) for n, gp, gr in args.cell]
    elif args.full:
        grids = [SimulationGrid(FULL_NS, FULL_GAMMA_PS, FULL_GAMMA_RS, **common)]
    else:
        grids = [SimulationGrid(DESK_NS, DESK_GAMMA_PS, DESK_GAMMA_RS, **common)]
    records = []
    report = None
    for i, grid in enumerate(grids):
        # Distinct cells given by --cell get distinct seeds.
        if len(grids) > 1:
            grid = dataclasses.replace(grid, base_seed=derive_seed(grid.base_seed, i))
        report = run_grid(grid, threads=args.threads)
        records.extend(report.records)
    report.records = records
    report.metadata["base_seed"] = args.seed
    paths = report.write(args.out, formats=[f for f in args.format if f in ("csv", "json")],
                         include_timing=args.timing)
    if "svg" in args.format:
        hd = [rec for rec in records if rec.method == "HDPA"]
        series = [Series(f"{rec.model} n={rec.n} gp={rec.gamma_p:g} {rec.sigma2_mode}", [rec.gamma_r], [rec.proportion_wrong], "points") for rec in hd]
        (args.out / "simulation.svg").write_text(
            line_chart(series[:6], title="HDPA proportion of wrong estimates", xlabel="gamma_r", ylabel="proportion wrong"),
            encoding="utf-8")
    for rec in records:
        flag = " DEGRADED" if rec.degraded else ""
        print(f"{rec.model:9s} n={rec.n:<5d} gp={rec.gamma_p:<5g} gr={rec.gamma_r:<5g} {rec.method:4s} "
              f"{rec.sigma2_mode:9s} wrong={rec.proportion_wrong:.3f} mean_d={rec.mean_d_hat:.2f}{flag}")
    for path in paths:
        log.info("wrote %s", path)
    return 0


def cmd_limits(args) -> int:
    model = SpikedModel(tuple(sorted(args.spikes, reverse=True)), args.sigma2)
    ratios = AspectRatios(args.gamma_p, args.gamma_r)
    prof = limit_profile(model, ratios, args.K)
    rows = [["0", prof.phi_limits[0], None, None, None, None]]
    for k in range(1, args.K + 1):
        j = k - 1
        rows.append([str(k), prof.phi_limits[k], prof.c_norm_limits[j], prof.tau_limits_augmented[j],
                     prof.tau_limits_original[j], prof.h_limits[j]])
    args.out.mkdir(parents=True, exist_ok=True)
    if "csv" in args.format:
        _write_csv(args.out / "limits.csv",
                   ["k", "phi_limit", "c_norm_limit", "tau_augmented_limit", "tau_original_limit", "h_limit"], rows)
    if "json" in args.format:
        payload = {
            "spikes": list(model.lambdas), "sigma2": model.sigma2, "gamma_p": ratios.gamma_p,
            "gamma_r": ratios.gamma_r, "h_jump_limit": h_jump_limit(ratios, model.sigma2),
            "phi_limit": prof.phi_limits.tolist(), "c_norm_limit": prof.c_norm_limits[: args.K].tolist(),
            "phi_argmin": int(np.argmin(prof.phi_limits)),
        }
        (args.out / "limits.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if "svg" in args.format:
        ks = list(range(args.K + 1))
        (args.out / "limits.svg").write_text(
            line_chart([Series("phi limit", ks, prof.phi_limits.tolist(), "both")],
                       title=f"limiting objective, gamma_p={ratios.gamma_p:g}, gamma_r={ratios.gamma_r:g}",
                       xlabel="k", ylabel="phi(k)"), encoding="utf-8")
    print(f"phi limit argmin = {int(np.argmin(prof.phi_limits))}; "
          f"jump limit = {h_jump_limit(ratios, model.sigma2):.6g}")
    return 0


def cmd_region(args) -> int:
    s2 = args.sigma2
    rows = []
    if args.sweep == "lambda":
        lo = args.lo if args.lo is not None else math.sqrt(args.gamma_p) * s2 * 1.001
        hi = args.hi if args.hi is not None else 3.0
        xs = np.linspace(lo, hi, args.steps)
        header = ["lambda1", "gamma_r0", "feasible_max", "status"]
        for lam in xs:
            rows.append(_region_row(float(lam), args.gamma_p, s2))
    else:
        lo = args.lo if args.lo is not None else 0.01
        hi = args.hi if args.hi is not None else (args.lam / s2) ** 2 * 0.999
        xs = np.linspace(lo, hi, args.steps)
        header = ["gamma_p", "gamma_r0", "feasible_max", "status"]
        for gp in xs:
            row = _region_row(args.lam, float(gp), s2)
            row[0] = float(gp)
            rows.append(row)
    args.out.mkdir(parents=True, exist_ok=True)
    if "csv" in args.format:
        _write_csv(args.out / "region.csv", header, rows)
    if "svg" in args.format:
        xv = [r[0] for r in rows]
        bound = [r[1] if r[1] is not None else math.nan for r in rows]
        feas = [r[2] if r[2] is not None else math.nan for r in rows]
        (args.out / "region.svg").write_text(
            line_chart([Series("gamma_r0", xv, bound, "line"), Series("feasibility limit", xv, feas, "line")],
                       title="boundary of the inconsistency region", xlabel=header[0], ylabel="gamma_r"),
            encoding="utf-8")
    print(f"wrote {len(rows)} rows")
    return 0


def _region_row(lam: float, gamma_p: float, s2: float) -> list:
    feasible = lam**2 / s2**2 - gamma_p
    if feasible <= 0:
        return [lam, None, None, "infeasible"]
    root = inconsistency_boundary(SpikedModel((lam,), s2), gamma_p)
    return [lam, root, feasible, "boundary" if root is not None else "inconsistent_everywhere"]


def cmd_curves(args) -> int:
    rows = []
    series = []
    for gp, gr in REGIME_CELLS:
        curves = average_phi_curves(gp, gr, n=args.n, replicates=args.m, seed=args.seed, lam=args.lam,
                                    sigma2=args.sigma2, K=args.K, threads=args.threads)
        for k, mean, lim in curves.rows():
            rows.append([_fmt(gp), _fmt(gr), str(k), mean, lim])
        ks = list(range(args.K + 1))
        label = f"p={gp:g}n r={gr:g}n"
        series.append(Series(label + " mean", ks, curves.mean_phi.tolist(), "points"))
        series.append(Series(label + " limit", ks, curves.limit_phi.tolist(), "line"))
        print(f"{label}: empirical argmin {curves.empirical_argmin}, limit argmin {curves.limit_argmin}")
    args.out.mkdir(parents=True, exist_ok=True)
    if "csv" in args.format:
        _write_csv(args.out / "curves.csv", ["p_ratio", "r_ratio", "k", "mean_phi", "limit_phi"], rows)
    if "svg" in args.format:
        (args.out / "curves.svg").write_text(
            line_chart(series, title=f"average augmentation curves, n={args.n}, {args.m} replicates",
                       xlabel="k", ylabel="phi(k)"), encoding="utf-8")
    return 0


COMMANDS = {
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "limits": cmd_limits,
    "region": cmd_region,
    "curves": cmd_curves,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if "--config" in argv:
            i = argv.index("--config")
            if i + 1 >= len(argv):
                parser.error("--config needs a path")
            argv = _merge_config(argv, read_config(Path(argv[i + 1])))
        args = parser.parse_args(argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DataParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (DomainError, ContractViolation) as exc:
        print(f"error: precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
