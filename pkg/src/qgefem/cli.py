"""Batch front-end: ``qgefem --config run.cfg [--mode M] [--out DIR]``.

The configuration is line-oriented ``key = value`` text; ``#`` starts a
comment.  Physical parameters may be given in a ``physical.`` block instead
of ``Re`` / ``Ro``.  Numbers accept fractions and ``pi``, e.g. ``k = 1/8192``
or ``T = pi/2``.

Exit status: 0 success, 2 configuration error, 3 solver failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import __version__, kernels
from .mms import fill_orders, records_to_csv, run_level, uniform_steps
from .physical import PhysicalParameters, nondimensionalize
from .timestepping import SolverConfig

log = logging.getLogger("qgefem")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
MODES = ("single-run", "study-test1", "study-test2", "custom-mms")
PROBLEMS = ("zero", "test1", "test2")
PHYSICAL_KEYS = {f.name for f in fields(PhysicalParameters)}


class ConfigError(ValueError):
    pass


def parse_number(text: str) -> float:
    """Float from ``1.5``, ``1/8192``, ``pi/2``, ``3*pi`` style expressions."""
    text = text.strip().replace(" ", "")
    if not text:
        raise ValueError("empty number")
    value = 1.0
    op = "*"
    token = ""
    for ch in text + "*":
        if ch in "*/" and token:
            x = math.pi if token == "pi" else float(token)
            value = value * x if op == "*" else value / x
            op, token = ch, ""
        elif ch in "*/":
            raise ValueError(f"malformed number {text!r}")
        else:
            token += ch
    return value


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


@dataclass
class RunConfig:
    mode: str = "study-test1"
    Re: float = 1.0
    Ro: float = 1.0
    physical: dict = field(default_factory=dict)
    h: list = field(default_factory=lambda: [1 / 2, 1 / 4, 1 / 8, 1 / 16])
    width: float = 1.0
    height: float = 1.0
    nx: int | None = None
    ny: int | None = None
    problem: str = "zero"
    k: float = 1 / 8192
    T: float | None = None
    newton_tol: float = 1e-8
    newton_max_iters: int = 25
    out: str = "qgefem-out"
    emit_plot: bool = False
    threads: int = 1

    def resolved_numbers(self):
        """``(Re, Ro)``, derived from the physical block when one is given."""
        if not self.physical:
            return self.Re, self.Ro
        scales = nondimensionalize(PhysicalParameters(**self.physical))
        return scales.Re, scales.Ro

    def manifest_lines(self) -> list[str]:
        Re, Ro = self.resolved_numbers()
        lines = [f"mode = {self.mode}"]
        for key, value in sorted(self.physical.items()):
            lines.append(f"physical.{key} = {value!r}")
        lines += [
            f"Re = {Re!r}",
            f"Ro = {Ro!r}",
            "h = " + ", ".join(repr(h) for h in self.h),
            f"width = {self.width!r}",
            f"height = {self.height!r}",
        ]
        if self.nx is not None:
            lines.append(f"nx = {self.nx}")
        if self.ny is not None:
            lines.append(f"ny = {self.ny}")
        lines += [
            f"problem = {self.problem}",
            f"k = {self.k!r}",
        ]
        if self.T is not None:
            lines.append(f"T = {self.T!r}")
        lines += [
            f"newton_tol = {self.newton_tol!r}",
            f"newton_max_iters = {self.newton_max_iters}",
            f"out = {self.out}",
            f"emit_plot = {str(self.emit_plot).lower()}",
            f"threads = {self.threads}",
        ]
        return lines


_CONVERTERS = {
    "mode": str, "problem": str, "out": str,
    "Re": parse_number, "Ro": parse_number, "width": parse_number, "height": parse_number,
    "k": parse_number, "T": parse_number, "newton_tol": parse_number,
    "nx": int, "ny": int, "newton_max_iters": int, "threads": int,
    "emit_plot": _parse_bool,
    "h": lambda s: [parse_number(x) for x in s.split(",") if x.strip()],
}


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key.startswith("physical."):
                name = key[len("physical."):]
                if name not in PHYSICAL_KEYS:
                    raise ValueError(f"unknown physical parameter {name!r}")
                cfg.physical[name] = parse_number(value)
            elif key in _CONVERTERS:
                setattr(cfg, key, _CONVERTERS[key](value))
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.mode not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {cfg.mode!r}")
    if cfg.problem not in PROBLEMS:
        raise ConfigError(f"problem must be one of {', '.join(PROBLEMS)}, got {cfg.problem!r}")
    if cfg.physical:
        missing = PHYSICAL_KEYS - {"f0"} - set(cfg.physical)
        if missing:
            raise ConfigError(f"physical block is missing {', '.join(sorted(missing))}")
    try:
        Re, Ro = cfg.resolved_numbers()
        SolverConfig(k=cfg.k, T=max(cfg.k, cfg.T or cfg.k), Re=Re, Ro=Ro,
                     newton_tol=cfg.newton_tol, newton_max_iters=cfg.newton_max_iters)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.mode == "single-run":
        if cfg.T is None:
            raise ConfigError("single-run needs T")
        if cfg.nx is None and not cfg.h:
            raise ConfigError("single-run needs nx (and ny) or h")
    elif not cfg.h:
        raise ConfigError(f"{cfg.mode} needs an h list")
    if cfg.threads < 1:
        raise ConfigError("threads must be at least 1")


PLOT_SCRIPT = '''\
"""Log-log error versus h from table.csv (generated by qgefem)."""
import csv
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

src = sys.argv[1] if len(sys.argv) > 1 else "table.csv"
with open(src) as fh:
    rows = [r for r in csv.DictReader(fh) if r["e_l2"] not in ("", "nan")]
h = [float(r["h"]) for r in rows]
fig, ax = plt.subplots()
for col, label in (("e_l2", "L2"), ("e_h1", "H1"), ("e_h2", "H2")):
    ax.loglog(h, [float(r[col]) for r in rows], "o-", label=label)
ax.set_xlabel("h")
ax.set_ylabel("error at final time")
ax.legend()
ax.grid(True, which="both", alpha=0.3)
fig.savefig(src.rsplit(".", 1)[0] + ".png", dpi=150)
'''


def _solver_config(cfg: RunConfig, T: float) -> SolverConfig:
    Re, Ro = cfg.resolved_numbers()
    n, k_eff = uniform_steps(T, cfg.k)
    return SolverConfig(k=k_eff, T=T, Re=Re, Ro=Ro, newton_tol=cfg.newton_tol,
                        newton_max_iters=cfg.newton_max_iters)


def _study_job(args):
    rec, _, diag = run_level(*args)
    return rec, diag


def run_study(cfg: RunConfig, out: Path, workers: int) -> int:
    test_id = {"study-test1": "test1", "study-test2": "test2", "custom-mms": "custom"}[cfg.mode]
    scfg = _solver_config(cfg, cfg.T or cfg.k)
    jobs = [(test_id, h, cfg.k, scfg, cfg.T) for h in cfg.h]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_study_job, jobs))
    else:
        results = []
        for job in jobs:
            log.info("level h=%r", job[1])
            results.append(_study_job(job))
    records = fill_orders([r for r, _ in results])
    with open(out / "table.csv", "w") as fh:
        records_to_csv(records, fh)
    for i, (rec, diag) in enumerate(results):
        if diag is not None:
            with open(out / f"diagnostics_level{i}.csv", "w") as fh:
                diag.to_csv(fh)
    failed = [r for r in records if r.failed]
    for r in failed:
        log.error("level h=%r failed: %s", r.h, r.failure)
    return EXIT_SOLVER if failed else EXIT_OK


def run_single(cfg: RunConfig, out: Path) -> int:
    from .argyris import build_space
    from .forms import assemble_linear_forms
    from .mesh import generate_rectangle_mesh
    from .mms import error_norms, get_solution, manufactured_forcing
    from .timestepping import run_simulation

    if cfg.nx is not None:
        nx, ny = cfg.nx, cfg.ny if cfg.ny is not None else cfg.nx
        width, height = cfg.width, cfg.height
    else:
        sol = get_solution(cfg.problem) if cfg.problem != "zero" else None
        width = sol.width if sol else cfg.width
        height = sol.height if sol else cfg.height
        nx, ny = round(width / cfg.h[0]), round(height / cfg.h[0])
    mesh = generate_rectangle_mesh(width, height, nx, ny)
    space = build_space(mesh)
    forms = assemble_linear_forms(space)
    scfg = _solver_config(cfg, cfg.T)
    if cfg.problem == "zero":
        sol, psi0, forcing = None, None, None
    else:
        sol = get_solution(cfg.problem)
        psi0 = sol.field(0.0)
        forcing = manufactured_forcing(sol, scfg.Re, scfg.Ro)
    final, diag = run_simulation(space, forms, psi0, scfg, forcing)
    with open(out / "diagnostics.csv", "w") as fh:
        diag.to_csv(fh)
    with open(out / "final.csv", "w") as fh:
        fh.write("t,dofs,grad_norm,lap_norm,e_l2,e_h1,e_h2\n")
        errs = error_norms(space, forms, final, sol, final.t) if sol else ("", "", "")
        fh.write(",".join([repr(final.t), str(space.n_free),
                           repr(math.sqrt(diag.grad_norm_sq[-1])),
                           repr(math.sqrt(diag.lap_norm_sq[-1]))]
                          + [repr(e) if e != "" else "" for e in errs]) + "\n")
    return EXIT_OK


def run(config_path, mode=None, out=None) -> int:
    started = time.time()
    try:
        text = Path(config_path).read_text()
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_IO
    try:
        cfg = parse_config(text)
        if mode is not None:
            cfg.mode = mode
        if out is not None:
            cfg.out = str(out)
        if os.environ.get("QGE_THREADS"):
            cfg.threads = int(os.environ["QGE_THREADS"])
        validate(cfg)
    except (ConfigError, ValueError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG

    outdir = Path(cfg.out)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory: %s", exc)
        return EXIT_IO

    status = EXIT_OK
    try:
        if cfg.mode == "single-run":
            status = run_single(cfg, outdir)
        else:
            status = run_study(cfg, outdir, cfg.threads)
        if cfg.emit_plot and cfg.mode != "single-run":
            (outdir / "plot_convergence.py").write_text(PLOT_SCRIPT)
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO
    except RuntimeError as exc:
        log.error("solver failure: %s", exc)
        status = EXIT_SOLVER
    finally:
        try:
            _write_manifest(cfg, outdir, time.time() - started)
        except OSError as exc:
            log.error("cannot write manifest: %s", exc)
            status = EXIT_IO
    return status


def _write_manifest(cfg: RunConfig, outdir: Path, elapsed: float) -> None:
    header = [
        f"# qgefem {__version__}, kernel backend {kernels.BACKEND}",
        f"# python {platform.python_version()} on {platform.platform()}",
        f"# wall_clock_seconds {elapsed:.3f}",
    ]
    (outdir / "manifest.txt").write_text("\n".join(header + cfg.manifest_lines()) + "\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qgefem", description=__doc__.splitlines()[0])
    parser.add_argument("--config", required=True, help="key=value run configuration")
    parser.add_argument("--mode", choices=MODES, help="override the configured mode")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    return run(args.config, args.mode, args.out)


if __name__ == "__main__":
    sys.exit(main())
