"""Command-line front end.

Subcommands: solve, study, points, basis, check-smoothness, domains.
Flags mirror the run-configuration fields one-to-one; a JSON config file may
supply any of them and explicit flags win. Exit codes: 0 success, 2
configuration error, 3 I/O error, 4 numerical failure. Errors print one
machine-readable line `<class>: <message>` on stderr.

The environment variable MPCOLLOC_THREADS caps the BLAS worker threads; it
must take effect before the numerical libraries load, which is why it is
applied at import time.
"""

import json
import os
import sys

_threads = os.environ.get("MPCOLLOC_THREADS")
if _threads:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConstructionError,
    DomainError,
    DomainFileError,
    ParameterError,
    RegularityError,
    SolverError,
    TopologyError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


@dataclass
class RunConfig:
    domain: str = "unit-square"
    p: int = 5
    r: int = 2
    k: int = 4
    k_list: list = field(default_factory=list)
    points: str = "greville"
    solution: str = "onepatch"
    out: str | None = None
    quad_order: int | None = None
    topology_tol: float = 1e-9
    samples: int = 9


_CONFIG_KEYS = set(RunConfig.__dataclass_fields__)


def _load_config(args):
    cfg = RunConfig()
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except FileNotFoundError as exc:
            raise DomainFileError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise DomainFileError(f"config file is not valid JSON: {exc}") from exc
        for key, val in doc.items():
            norm = key.replace("-", "_")
            if norm not in _CONFIG_KEYS:
                raise ParameterError(f"unknown config field '{key}'")
            setattr(cfg, norm, val)
    for key in _CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if isinstance(cfg.k_list, str):
        cfg.k_list = [int(s) for s in cfg.k_list.split(",") if s]
    return cfg


def _get_domain(cfg):
    from .multipatch import builtin_domain, load_domain_file

    if os.path.exists(cfg.domain) or cfg.domain.endswith(".json"):
        return load_domain_file(cfg.domain)
    return builtin_domain(cfg.domain)


def _validate(cfg, need_klist=False):
    from .collocation import STRATEGIES
    from .smoothspace import SUPPORTED_PR

    if (cfg.p, cfg.r) not in SUPPORTED_PR:
        raise ParameterError(
            f"unsupported (p, r) = ({cfg.p}, {cfg.r}): p >= 5 and supported pairs are "
            f"{SUPPORTED_PR}"
        )
    if cfg.points not in STRATEGIES:
        raise ParameterError(f"unknown point strategy '{cfg.points}'; one of {STRATEGIES}")
    ks = cfg.k_list if need_klist else [cfg.k]
    if need_klist and not ks:
        raise ParameterError("study needs --k-list with at least one level")
    for k in ks:
        if cfg.points != "greville" and k < 2:
            raise ParameterError(f"superconvergent selections assume k >= 2, got k={k}")


def _write(path, text):
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise DomainFileError(f"cannot write output file {path}: {exc}") from exc


def cmd_solve(cfg):
    from .analysis import catalog, error_norms, solve_level

    _validate(cfg)
    dom = _get_domain(cfg)
    exact = catalog(cfg.solution)
    space, sol, points = solve_level(dom, cfg.p, cfg.r, cfg.k, cfg.points, exact)
    lines = [
        f"domain: {dom.name}",
        f"p, r, k: {cfg.p}, {cfg.r}, {cfg.k}",
        f"strategy: {cfg.points}",
        f"dim: {space.dim}",
        f"points: {points.size} ({points.boundary_idx.size} boundary)",
        f"stage residuals: boundary {sol.residual_boundary:.3e}, interior {sol.residual_interior:.3e}",
        f"coefficient range: [{sol.coeffs.min():.6e}, {sol.coeffs.max():.6e}]",
    ]
    errs = error_norms(space, sol.coeffs, exact, q=cfg.quad_order)
    lines.append(f"relative errors: L2 {errs[0]:.6e}, H1 {errs[1]:.6e}, H2 {errs[2]:.6e}")
    sys.stdout.write("\n".join(lines) + "\n")

    from .solver import eval_solution_grid

    ts = np.linspace(0.0, 1.0, cfg.samples)
    rows = ["patch,xi1,xi2,x,y,u"]
    for patch in dom.patches:
        vals = eval_solution_grid(space, sol.coeffs, patch.index, ts, ts, 0, 0)
        xy = patch.derivs_grid(ts, ts, 0, 0)
        for i, a in enumerate(ts):
            for j, b in enumerate(ts):
                rows.append(
                    f"{patch.index},{a!r},{b!r},{xy[i, j, 0]!r},{xy[i, j, 1]!r},{vals[i, j]!r}"
                )
    _write(cfg.out or "solution.csv", "\n".join(rows) + "\n")
    return EXIT_OK


def cmd_study(cfg):
    from .analysis import catalog, convergence_study

    _validate(cfg, need_klist=True)
    dom = _get_domain(cfg)
    exact = catalog(cfg.solution)

    def progress(row):
        sys.stderr.write(
            f"level k={row.k}: ndof={row.ndof} relL2={row.rel_l2:.3e} "
            f"relH1={row.rel_h1:.3e} relH2={row.rel_h2:.3e}\n"
        )

    report = convergence_study(
        dom, cfg.p, cfg.r, cfg.points, cfg.k_list, exact, q=cfg.quad_order, progress=progress
    )
    _write(cfg.out, report.to_csv())
    return EXIT_OK


def cmd_points(cfg):
    from .collocation import assemble_global

    _validate(cfg)
    dom = _get_domain(cfg)
    pts = assemble_global(dom, cfg.p, cfg.r, cfg.k, cfg.points)
    rows = ["x,y,patch,xi1,xi2,kind"]
    for j in range(pts.size):
        kind = "boundary" if pts.is_boundary[j] else "inner"
        rows.append(
            f"{pts.xy[j, 0]!r},{pts.xy[j, 1]!r},{pts.owner[j]},"
            f"{pts.local[j, 0]!r},{pts.local[j, 1]!r},{kind}"
        )
    _write(cfg.out, "\n".join(rows) + "\n")
    return EXIT_OK


def cmd_basis(cfg, dump_grid=None):
    from .smoothspace import build_space

    _validate(cfg)
    dom = _get_domain(cfg)
    space = build_space(dom, cfg.p, cfg.r, cfg.k)
    closed = space.closed_form_dim()
    check = "PASS" if closed == space.dim else "FAIL"
    lines = [
        f"domain: {dom.name}",
        f"p, r, k: {cfg.p}, {cfg.r}, {cfg.k}",
        *(f"{kind}: {count}" for kind, count in sorted(space.counts.items())),
        f"dim = {space.dim}",
        f"closed-form dim = {closed}",
        f"closed-form check: {check}",
    ]
    sys.stdout.write("\n".join(lines) + "\n")
    if dump_grid:
        ts = np.linspace(0.0, 1.0, cfg.samples)
        rows = ["fn,kind,patch,xi1,xi2,value"]
        for fn in space.basis:
            for pi in fn.support_patches:
                vals = fn.eval_grid(pi, ts, ts, 0, 0)
                for i, a in enumerate(ts):
                    for j, b in enumerate(ts):
                        rows.append(f"{fn.index},{fn.kind},{pi},{a!r},{b!r},{vals[i, j]!r}")
        _write(dump_grid, "\n".join(rows) + "\n")
    return EXIT_OK


def cmd_check_smoothness(cfg):
    from .smoothspace import audit_smoothness, build_space

    _validate(cfg)
    dom = _get_domain(cfg)
    space = build_space(dom, cfg.p, cfg.r, cfg.k)
    iface_max, vertex_max = audit_smoothness(space)
    ok = True
    lines = [f"domain: {dom.name}", f"p, r, k: {cfg.p}, {cfg.r}, {cfg.k}"]
    for i, worst in enumerate(iface_max):
        status = "ok" if worst <= 1e-9 else "VIOLATION"
        ok = ok and worst <= 1e-9
        lines.append(f"interface {i}: max matching residual {worst:.3e} [{status}]")
    for vid, worst in vertex_max.items():
        status = "ok" if worst <= 1e-8 else "VIOLATION"
        ok = ok and worst <= 1e-8
        lines.append(f"vertex {vid}: max jet mismatch {worst:.3e} [{status}]")
    lines.append("smoothness audit: " + ("PASS" if ok else "FAIL"))
    sys.stdout.write("\n".join(lines) + "\n")
    if not ok:
        raise ConstructionError("smoothness audit failed")
    return EXIT_OK


def cmd_domains(args):
    from .multipatch import BUILTIN_DOMAINS, builtin_domain, domain_to_dict

    if args.emit:
        dom = builtin_domain(args.emit)
        text = json.dumps(domain_to_dict(dom), indent=2)
        _write(args.out, text + "\n")
        return EXIT_OK
    names = sorted(BUILTIN_DOMAINS) + ["pinwheel<nu> (any valency >= 3)"]
    sys.stdout.write("\n".join(names) + "\n")
    return EXIT_OK


def _add_common(sub, klist=False):
    sub.add_argument("--config", help="JSON file supplying any flags (flags override)")
    sub.add_argument("--domain", help="builtin name or domain file path")
    sub.add_argument("--p", type=int)
    sub.add_argument("--r", type=int)
    if klist:
        sub.add_argument("--k-list", dest="k_list", help="comma-separated inner-knot counts")
    else:
        sub.add_argument("--k", type=int)
    sub.add_argument(
        "--points",
        choices=["greville", "all-superconvergent", "clustered-superconvergent"],
    )
    sub.add_argument("--solution", help="catalog name or expr:<formula>")
    sub.add_argument("--out", help="output file (default: stdout)")
    sub.add_argument("--quad-order", dest="quad_order", type=int)
    sub.add_argument("--samples", type=int, help="per-direction sample count for grids")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="mpcolloc",
        description="C2-smooth isogeometric collocation for the Poisson equation "
        "on planar multi-patch domains",
    )
    subs = ap.add_subparsers(dest="command", required=True)
    _add_common(subs.add_parser("solve", help="solve one problem instance"))
    _add_common(subs.add_parser("study", help="run a convergence study"), klist=True)
    _add_common(subs.add_parser("points", help="dump the global collocation points"))
    basis = subs.add_parser("basis", help="basis counts and dimension cross-check")
    _add_common(basis)
    basis.add_argument("--dump-grid", help="CSV path for sampled basis values")
    _add_common(subs.add_parser("check-smoothness", help="interface/vertex smoothness audit"))
    doms = subs.add_parser("domains", help="list builtin domains")
    doms.add_argument("--emit", help="write one builtin domain as JSON")
    doms.add_argument("--out")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "domains":
            return cmd_domains(args)
        cfg = _load_config(args)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "study":
            return cmd_study(cfg)
        if args.command == "points":
            return cmd_points(cfg)
        if args.command == "basis":
            return cmd_basis(cfg, dump_grid=getattr(args, "dump_grid", None))
        if args.command == "check-smoothness":
            return cmd_check_smoothness(cfg)
        raise AssertionError(f"unhandled command {args.command}")
    except (ParameterError, DomainError, TopologyError, RegularityError) as exc:
        sys.stderr.write(f"config-error: {exc}\n")
        return EXIT_CONFIG
    except (DomainFileError, OSError) as exc:
        sys.stderr.write(f"io-error: {exc}\n")
        return EXIT_IO
    except (SolverError, ConstructionError) as exc:
        sys.stderr.write(f"numerical-error: {exc}\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
