"""Command-line interface: mesh, solve, query, tpd and compare."""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import OUTPUT_ENV, ConfigError, RunConfig, dump_config, load_config
from .errors import NumericalError, OutOfRangeError
from .fullrank import load_full_rank, save_full_rank, solve_full_rank
from .mesh import MeshError, make_mesh, save_mesh
from .pgd import (ModeInterpolator, load_modes, pgd_enrich, pgd_enrich_parametric,
                  reconstruct_macro, save_modes)
from .postprocess import (export_field, hydraulic_diameter, pgd_relative_amplitudes,
                          relative_error_field, svd_amplitudes, tpd_solve)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

# RunConfig field -> (flag, type, help)
_FLAGS = [
    ("domain", str, "square, trapezoid, circle or a mesh file"),
    ("refinement", int, "mesh refinement (n_div or n_ref)"),
    ("p", int, "DG polynomial order"),
    ("N_r", int, "number of v_r nodes"),
    ("N_z", int, "number of v_z nodes"),
    ("v_max", float, "velocity truncation"),
    ("stretch", float, "velocity grid clustering exponent"),
    ("N_theta", int, "number of angular nodes"),
    ("case", str, "driving case P or T"),
    ("solver", str, "full-rank, pgd or pgd-parametric"),
    ("delta", float, "rarefaction parameter"),
    ("delta_min", float, "lower end of the delta range"),
    ("delta_max", float, "upper end of the delta range"),
    ("N_delta", int, "number of delta nodes (odd)"),
    ("M_md", int, "maximum number of PGD modes"),
    ("N_in", int, "maximum fixed-point iterations per mode"),
    ("tol", float, "fixed-point amplitude tolerance"),
    ("max_iter", int, "full-rank iteration cap"),
    ("fr_tol", float, "full-rank convergence tolerance"),
    ("measure", str, "delta measure of the parametric projection: delta or log"),
    ("inner", str, "spatio-angular solver: direct, gmres or source"),
    ("output", str, f"output directory (overrides ${OUTPUT_ENV})"),
    ("seed", int, "seed for mode-initialization retries"),
]


def _flag(name: str) -> str:
    return "--" + name.lower().replace("_", "-")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value configuration file")
    for name, _, help_ in _FLAGS:
        p.add_argument(_flag(name), dest=name, default=None, help=help_)
    p.add_argument("--modes", dest="M_md", default=None, help="alias of --m-md")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rarefied-pgd", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="generate a mesh file")
    p.add_argument("--domain", default="square", choices=["square", "trapezoid", "circle"])
    p.add_argument("--refinement", type=int, default=8)
    p.add_argument("--out", required=True, help="output mesh file")

    p = sub.add_parser("solve", help="run a full-rank or PGD solve")
    _add_run_flags(p)

    p = sub.add_parser("query", help="flow rates from a stored mode set")
    p.add_argument("modeset")
    p.add_argument("--delta", type=float, nargs="+", required=True)
    p.add_argument("--export", help="directory for u/q field CSVs")

    p = sub.add_parser("tpd", help="thermomolecular pressure difference coefficients")
    p.add_argument("modeset")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--delta-1", type=float, nargs="+", dest="delta_1")
    g.add_argument("--delta-star", type=float, nargs="+", dest="delta_star",
                   help="inlet rarefaction based on the hydraulic diameter")
    p.add_argument("--temp-ratio", type=float, default=3.8)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--out", help="CSV file for (delta_1, eta)")

    p = sub.add_parser("compare", help="PGD versus full-rank error report")
    p.add_argument("full_rank")
    p.add_argument("pgd")
    p.add_argument("--out", help="output directory")
    return parser


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _manifest(out: Path, command: str, cfg: dict, seed) -> None:
    data = {
        "command": command,
        "config": cfg,
        "seed": seed,
        "versions": {"rarefied_pgd": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }
    (out / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def cmd_mesh(args) -> int:
    mesh = make_mesh(args.domain, args.refinement)
    save_mesh(mesh, args.out)
    print(f"{mesh.n_elements} triangles, area {mesh.area:.12g} -> {args.out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    overrides = {name: getattr(args, name) for name, _, _ in _FLAGS}
    cfg = load_config(args.config, overrides)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(cfg))
    _manifest(out, "solve", cfg.as_dict(), cfg.seed)
    disc = cfg.build_discretization()
    meta = {"case": cfg.case, "solver": cfg.solver}
    t0 = time.perf_counter()
    if cfg.solver == "full-rank":
        try:
            h, macro, report = solve_full_rank(disc, cfg.case, cfg.delta, tol=cfg.fr_tol, max_iter=cfg.max_iter)
        except NumericalError as exc:
            partial = getattr(exc, "partial", None)
            if partial is not None:
                _, macro, _ = partial
                export_field(macro.u, disc.dg, out / "u_partial.csv", dict(meta, delta=cfg.delta, partial=True))
            raise
        save_full_rank(h, macro, report, out / "fullrank.npz")
        rows = [(cfg.delta, macro.G_P, macro.G_T, report.iterations)]
        _write_csv(out / "summary.csv", ["delta", "G_P", "G_T", "iterations"],
                   [tuple("" if v is None else v for v in r) for r in rows])
        iterations = report.iterations
        _export_macro(out, macro, disc, dict(meta, delta=cfg.delta, modes=0))
    elif cfg.solver == "pgd":
        modes, report = pgd_enrich(disc, cfg.case, cfg.delta, M_md=cfg.M_md, N_in=cfg.N_in, tol=cfg.tol,
                                   seed=cfg.seed, inner=cfg.inner)
        save_modes(modes, out / "modes.npz")
        macro = reconstruct_macro(modes)
        iterations = sum(r.fixed_point_iterations for r in report.modes)
        _write_csv(out / "summary.csv", ["delta", "G_P", "G_T", "modes", "iterations"],
                   [(cfg.delta, "" if macro.G_P is None else macro.G_P,
                     "" if macro.G_T is None else macro.G_T, modes.n_modes, iterations)])
        _export_macro(out, macro, disc, dict(meta, delta=cfg.delta, modes=modes.n_modes))
        _write_modes_report(out, report)
    else:
        grid = cfg.delta_grid()
        modes, report = pgd_enrich_parametric(disc, cfg.case, grid, M_md=cfg.M_md, N_in=cfg.N_in,
                                              tol=cfg.tol, seed=cfg.seed, measure=cfg.measure,
                                              inner=cfg.inner)
        save_modes(modes, out / "modes.npz")
        interp = ModeInterpolator(modes)
        iu, iq = interp.flow_rates(grid.delta_nodes)
        _write_csv(out / "flow_rates.csv", ["delta", "int_u", "int_q", "G_P", "G_T"],
                   zip(grid.delta_nodes, iu, iq, -2 * iu, 2 * iq))
        iterations = sum(r.fixed_point_iterations for r in report.modes)
        _write_modes_report(out, report)
    wall = time.perf_counter() - t0
    _write_csv(out / "timing.csv", ["solver", "iterations", "wall_time"], [(cfg.solver, iterations, wall)])
    if getattr(report, "aborted", False):
        print(f"warning: {report.message}", file=sys.stderr)
        (out / "PARTIAL").write_text(report.message + "\n")
        return EXIT_NUMERIC
    print(f"{cfg.solver} case {cfg.case}: results in {out} ({wall:.1f} s)")
    with (out / ("summary.csv" if cfg.solver != "pgd-parametric" else "flow_rates.csv")).open() as fh:
        sys.stdout.write(fh.read())
    return EXIT_OK


def _export_macro(out: Path, macro, disc, meta) -> None:
    export_field(macro.u, disc.dg, out / "u.csv", dict(meta, field="u"))
    export_field(macro.q, disc.dg, out / "q.csv", dict(meta, field="q"))


def _write_modes_report(out: Path, report) -> None:
    rows = [(i + 1, r.fixed_point_iterations, r.residual, max(r.inner_iterations, default=0),
             r.update_residual, r.amplitude, int(r.retried)) for i, r in enumerate(report.modes)]
    _write_csv(out / "modes_report.csv",
               ["mode", "fixed_point_iterations", "residual", "max_inner_iterations",
                "update_residual", "amplitude", "retried"], rows)


def cmd_query(args) -> int:
    modes = load_modes(args.modeset)
    interp = ModeInterpolator(modes)
    deltas = np.asarray(args.delta, dtype=float)
    iu, iq = interp.flow_rates(deltas)
    print("delta,G_P,G_T" if modes.case == "P" else "delta,int_u,int_q")
    for d, a, b in zip(deltas.tolist(), iu.tolist(), iq.tolist()):
        if modes.case == "P":
            print(f"{d!r},{-2 * a!r},{2 * b!r}")
        else:
            print(f"{d!r},{a!r},{b!r}")
    if args.export:
        out = Path(args.export)
        out.mkdir(parents=True, exist_ok=True)
        for d in deltas:
            macro = reconstruct_macro(modes, d)
            meta = {"case": modes.case, "delta": d, "solver": "pgd", "modes": modes.n_modes}
            _export_macro_named(out, macro, modes.disc, meta, f"{d:g}")
    return EXIT_OK


def _export_macro_named(out, macro, disc, meta, tag) -> None:
    export_field(macro.u, disc.dg, out / f"u_delta{tag}.csv", dict(meta, field="u"))
    export_field(macro.q, disc.dg, out / f"q_delta{tag}.csv", dict(meta, field="q"))


def cmd_tpd(args) -> int:
    modes = load_modes(args.modeset)
    if modes.case != "P":
        raise ConfigError(["tpd needs a case P mode set (G_T follows from q_P)"])
    interp = ModeInterpolator(modes)
    if args.delta_star is not None:
        scale = hydraulic_diameter(modes.disc.mesh)
        pairs = [(ds, ds / scale) for ds in args.delta_star]
    else:
        pairs = [(d, d) for d in args.delta_1]
    rows = []
    for label, d1 in pairs:
        res = tpd_solve(interp.G_P, interp.G_T, d1, args.temp_ratio, n_steps=args.steps,
                        delta_range=modes.delta_grid.bounds)
        rows.append((label, res.eta, res.pressure_ratio))
        print(f"delta_1={label:g} eta={res.eta:.6f} P2/P1={res.pressure_ratio:.6f}")
    if args.out:
        _write_csv(Path(args.out), ["delta_1", "eta", "pressure_ratio"], rows)
    return EXIT_OK


def cmd_compare(args) -> int:
    h, full, header = load_full_rank(args.full_rank)
    modes = load_modes(args.pgd)
    if not h.disc.same_grids(modes.disc) or modes.case != header["case"]:
        raise ConfigError(["full-rank result and mode set use different discretizations or cases"])
    delta = float(header["delta"])
    if not modes.parametric and abs(modes.delta - delta) > 1e-12 * max(1.0, delta):
        raise ConfigError([f"mode set was built for delta={modes.delta}, full-rank for delta={delta}"])
    pgd = reconstruct_macro(modes, delta)
    err = relative_error_field(pgd.u, full.u)
    print(f"delta={delta:g} max_rel_error={np.nanmax(err):.6e} mean_rel_error={np.nanmean(err):.6e}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        export_field(np.nan_to_num(err, nan=np.nan), modes.disc.dg, out / "u_relative_error.csv",
                     {"delta": delta, "case": modes.case})
        n = min(modes.n_modes, 15)
        au, aq = pgd_relative_amplitudes(modes, delta)
        sv = svd_amplitudes(h).relative_amplitudes
        rows = [(i + 1, au[i], aq[i], sv[i] if i < len(sv) else float("nan")) for i in range(n)]
        _write_csv(out / "amplitudes.csv", ["index", "pgd_u", "pgd_q", "svd"], rows)
    return EXIT_OK


_COMMANDS = {"mesh": cmd_mesh, "solve": cmd_solve, "query": cmd_query, "tpd": cmd_tpd, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, OutOfRangeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, MeshError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
