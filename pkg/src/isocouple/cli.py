"""Command-line front end: ``isocouple heat | overhead | beam | map``.

Every subcommand writes CSV (stdout unless ``--output`` is given). Settings
resolve as flags over ``--config`` file over built-in defaults; the config
file holds ``key=value`` lines using the long flag names. With ``--check``
the acceptance tolerances become the exit status: 0 when all hold, 1 when
any is violated. Invalid settings and runtime failures exit with 2.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import beam as beam_mod
from . import heat as heat_mod
from . import overhead as overhead_mod
from .bus import connect, listen, parse_endpoint
from .errors import ArgumentError, CouplingError
from .rbf import Kernel, build_mapping_matrix, check_consistency, read_cloud, write_cloud

FIELD_TOL = 1e-10
FLUX_TOL = 1e-12
BEAM_TOL = 1e-12
MAP_TOL = 1e-9


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in str(text).replace(",", " ").split())


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(v for v in str(text).replace(",", " ").split())


@dataclass
class RunConfig:
    """Resolved settings of one invocation; fields not used by a subcommand are ignored."""

    command: str = ""
    p: int = 2
    rD: int = 2
    rN: int = 4
    dt: float = 0.1
    T: float = 1.0
    alpha: float = 3.0
    beta: float = 1.3
    omega: float = 0.5
    tol: float = 1e-14
    max_iter: int = 100
    extrapolate: bool = True
    aitken: bool = True
    transport: str = "inproc"
    role: str = "dirichlet"
    r: tuple[int, ...] = overhead_mod.R_VALUES
    degrees: tuple[int, ...] = overhead_mod.P_VALUES
    modes: tuple[str, ...] = overhead_mod.MODES
    N_t: int = 1
    timing: bool = False
    timing_steps: int = 1000
    spans: int = 4
    fluid_refine: int = 1
    fluid_grid: tuple[int, ...] = (9, 17)
    width: float = 0.5
    height: float = 1.0
    kernel: str = "tps"
    dead_axes: tuple[int, ...] = ()
    source: str = ""
    target: str = ""
    output: str = ""
    check: bool = False

    def validate(self) -> None:
        positive = {"dt": self.dt, "T": self.T, "omega": self.omega, "tol": self.tol,
                    "width": self.width, "height": self.height}
        for name, value in positive.items():
            if not value > 0:
                raise ArgumentError(f"--{name} must be positive, got {value}")
        for name in ("p", "rD", "rN", "max_iter", "N_t", "timing_steps", "spans"):
            if getattr(self, name) < 1:
                raise ArgumentError(f"--{name.replace('_', '-')} must be at least 1")
        if self.omega > 1:
            raise ArgumentError(f"--omega must lie in (0, 1], got {self.omega}")
        if self.fluid_refine < 0:
            raise ArgumentError("--fluid-refine must be non-negative")
        if any(v < 1 for v in self.r) or any(v < 0 for v in self.degrees):
            raise ArgumentError("--r values must be positive and --degrees non-negative")
        if len(self.fluid_grid) != 2 or min(self.fluid_grid) < 2:
            raise ArgumentError("--fluid-grid takes two counts of at least 2")
        if set(self.modes) - set(overhead_mod.MODES):
            raise ArgumentError(f"--modes must be drawn from {overhead_mod.MODES}")
        if self.role not in (heat_mod.DIRICHLET, heat_mod.NEUMANN):
            raise ArgumentError("--role must be dirichlet or neumann")
        if self.transport not in ("inproc", "socket") and not self.transport.startswith("socket:"):
            raise ArgumentError("--transport must be inproc, socket or socket:HOST:PORT")
        Kernel.parse(self.kernel)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ArgumentError(f"expected a boolean, got {text!r}")


# field annotations are strings under postponed evaluation
_CONVERTERS = {
    "int": int,
    "float": float,
    "str": str,
    "bool": _bool,
    "tuple[int, ...]": _int_list,
    "tuple[str, ...]": _str_list,
}


def _converter(name: str):
    return _CONVERTERS[{f.name: f.type for f in fields(RunConfig)}[name]]


def read_config_file(path: str) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment, dashes in keys are allowed."""
    known = {f.name for f in fields(RunConfig)} - {"command"}
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ArgumentError(f"cannot read config file: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lstrip("-").replace("-", "_")
        if not sep or key not in known:
            raise ArgumentError(f"{path}:{lineno}: expected key=value with a known key, got {raw!r}")
        try:
            out[key] = _converter(key)(value.strip())
        except ValueError as exc:
            raise ArgumentError(f"{path}:{lineno}: {exc}") from exc
    return out


# --------------------------------------------------------------------------
# parser


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="key=value settings file (flags take precedence)")
    sp.add_argument("--output", "-o", help="CSV destination (default stdout)")
    sp.add_argument("--check", action="store_true", help="exit 1 if any acceptance tolerance is violated")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isocouple", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    heat = sub.add_parser("heat", argument_default=S, help="partitioned heat-conduction benchmark")
    heat.add_argument("--p", type=int, help="spline degree (default 2)")
    heat.add_argument("--rD", type=int, help="elements per direction on the Dirichlet side")
    heat.add_argument("--rN", type=int, help="elements per direction on the Neumann side")
    heat.add_argument("--dt", type=float)
    heat.add_argument("--T", type=float)
    heat.add_argument("--alpha", type=float)
    heat.add_argument("--beta", type=float)
    heat.add_argument("--omega", type=float, help="under-relaxation factor")
    heat.add_argument("--tol", type=float, help="relative coupling tolerance")
    heat.add_argument("--max-iter", dest="max_iter", type=int)
    heat.add_argument("--no-extrapolate", dest="extrapolate", action="store_false",
                      help="start each window from the last converged interface values")
    heat.add_argument("--no-aitken", dest="aitken", action="store_false",
                      help="keep the relaxation factor constant")
    heat.add_argument("--transport", help="inproc, socket, or socket:HOST:PORT to run one side")
    heat.add_argument("--role", choices=(heat_mod.DIRICHLET, heat_mod.NEUMANN),
                      help="side to run with socket:HOST:PORT; the Dirichlet side listens")
    _add_common(heat)

    ov = sub.add_parser("overhead", argument_default=S, help="communication-overhead sweep")
    ov.add_argument("--r", type=_int_list, help="refinements, e.g. 2,4,8")
    ov.add_argument("--degrees", type=_int_list, help="degrees, e.g. 2,3,4,5")
    ov.add_argument("--modes", type=_str_list, help="vertex,spline")
    ov.add_argument("--N-t", dest="N_t", type=int, help="exchanged steps per session (default 1)")
    ov.add_argument("--transport", help="inproc or socket")
    ov.add_argument("--timing", action="store_true", help="append a normalised timing table")
    ov.add_argument("--timing-steps", dest="timing_steps", type=int)
    _add_common(ov)

    bm = sub.add_parser("beam", argument_default=S, help="load round trips on the beam interface")
    bm.add_argument("--p", type=int)
    bm.add_argument("--spans", type=int)
    bm.add_argument("--fluid-refine", dest="fluid_refine", type=int)
    bm.add_argument("--fluid-grid", dest="fluid_grid", type=_int_list, help="e.g. 9,17")
    bm.add_argument("--width", type=float)
    bm.add_argument("--height", type=float)
    bm.add_argument("--kernel", help="tps or gaussian:SHAPE")
    _add_common(bm)

    mp = sub.add_parser("map", argument_default=S, help="RBF mapping between point-cloud files")
    mp.add_argument("source", help="cloud with data")
    mp.add_argument("target", help="cloud to map onto")
    mp.add_argument("--kernel", help="tps or gaussian:SHAPE")
    mp.add_argument("--dead-axes", dest="dead_axes", type=_int_list, help="coordinate axes to ignore")
    _add_common(mp)
    return parser


def resolve(argv=None) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    settings = {}
    if ns.get("config"):
        settings.update(read_config_file(ns.pop("config")))
    ns.pop("config", None)
    settings.update({k: v for k, v in ns.items() if v is not None})
    cfg = RunConfig(**settings)
    cfg.validate()
    return cfg


# --------------------------------------------------------------------------
# commands


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)


def _report(ok: bool, message: str) -> bool:
    print(f"{'PASS' if ok else 'FAIL'} {message}", file=sys.stderr)
    return ok


def cmd_heat(cfg: RunConfig) -> int:
    common = dict(p=cfg.p, dt=cfg.dt, T=cfg.T, alpha=cfg.alpha, beta=cfg.beta, omega=cfg.omega,
                  tol=cfg.tol, max_iter=cfg.max_iter, extrapolate=cfg.extrapolate,
                  aitken=cfg.aitken)
    if cfg.transport.startswith("socket:"):
        host, port = parse_endpoint(cfg.transport.split(":", 1)[1])
        if cfg.role == heat_mod.DIRICHLET:
            transport, r = listen(host, port), cfg.rD
        else:
            transport, r = connect(host, port), cfg.rN
        report = heat_mod.run_single_participant(cfg.role, transport, r, **common)
    else:
        report = heat_mod.run_benchmark(cfg.rD, cfg.rN, transport=cfg.transport, **common)
    _emit(cfg, report.to_csv())
    if not cfg.check:
        return 0
    field_err = max(
        (v for row in report.rows for v in (row.error_dirichlet, row.error_neumann) if np.isfinite(v)),
        default=0.0,
    )
    flux = [row.flux_error for row in report.rows if np.isfinite(row.flux_error)]
    ok = _report(field_err <= FIELD_TOL, f"field L2 error {field_err:.3e} <= {FIELD_TOL:g}")
    if flux:
        ok &= _report(max(flux) <= FLUX_TOL, f"flux relative error {max(flux):.3e} <= {FLUX_TOL:g}")
    return 0 if ok else 1


def cmd_overhead(cfg: RunConfig) -> int:
    cells = overhead_mod.sweep(cfg.r, cfg.degrees, cfg.modes, cfg.N_t, cfg.transport)
    text = overhead_mod.sweep_csv(cells)
    if cfg.timing:
        rows = overhead_mod.timing_table(cfg.r, cfg.degrees, cfg.modes, cfg.timing_steps)
        text += "\n" + overhead_mod.timing_csv(rows)
    _emit(cfg, text)
    if not cfg.check:
        return 0
    bad = [c for c in cells if c.report.measured_bytes != c.expected_bytes]
    ok = _report(not bad, f"{len(cells) - len(bad)}/{len(cells)} cells byte-exact")
    return 0 if ok else 1


def cmd_beam(cfg: RunConfig) -> int:
    setup = beam_mod.BeamSetup(cfg.width, cfg.height, cfg.p, cfg.spans, tuple(cfg.fluid_grid),
                               cfg.fluid_refine, Kernel.parse(cfg.kernel))
    results = beam_mod.run_beam(setup)
    _emit(cfg, beam_mod.to_csv(results))
    if not cfg.check:
        return 0
    worst = max(r.roundtrip_error for r in results)
    ok = _report(worst <= BEAM_TOL, f"worst round-trip error {worst:.3e} <= {BEAM_TOL:g}")
    return 0 if ok else 1


def cmd_map(cfg: RunConfig) -> int:
    if not cfg.source or not cfg.target:
        raise ArgumentError("map needs a source and a target cloud file")
    src = read_cloud(cfg.source)
    if src.data is None:
        raise ArgumentError(f"{cfg.source} carries no data columns")
    tgt = read_cloud(cfg.target, dim=src.d)
    M = build_mapping_matrix(src, tgt, Kernel.parse(cfg.kernel), cfg.dead_axes)
    mapped = tgt.with_data(M.entries @ src.data)
    if cfg.output:
        write_cloud(mapped, cfg.output)
    else:
        sys.stdout.write(f"# dim={mapped.d}\n")
        for row in np.hstack([mapped.points, mapped.data]):
            sys.stdout.write(" ".join(repr(float(v)) for v in row) + "\n")
    deviation = check_consistency(M)
    print(f"row_sum_deviation={deviation:.3e}", file=sys.stderr)
    if not cfg.check:
        return 0
    return 0 if _report(deviation <= MAP_TOL, f"row-sum deviation <= {MAP_TOL:g}") else 1


COMMANDS = {"heat": cmd_heat, "overhead": cmd_overhead, "beam": cmd_beam, "map": cmd_map}


def main(argv=None) -> int:
    try:
        cfg = resolve(argv)
        return COMMANDS[cfg.command](cfg)
    except CouplingError as exc:
        print(f"isocouple: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
