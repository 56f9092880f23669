"""Command-line driver: ``paraexp-em run|preset|validate``.

Configs are JSON objects mirroring :class:`ExperimentConfig`; any field can
be overridden with ``--set section.key=value`` (value parsed as JSON when
possible). Outputs go to ``--output-dir``, else ``output.directory``, else
$PARAEXP_OUTPUT_DIR, else ./paraexp-output.

Exit status: 0 success, 2 invalid config, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .expm import ExpmOverflow
from .leapfrog import IntegrationDiverged, integrate
from .paraexp import ParaExpError, make_partition, run, serial_leapfrog
from .problems import cfl_steps, ez_probe, snapped_steps, wave2d

ENV_OUTPUT = "PARAEXP_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
EXPERIMENTS = ("simulation", "energy", "spectrum", "cost-uniform", "cost-nonuniform")
GROWTH_LIMIT = 1e3


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


# --------------------------------------------------------------------------
# configuration schema


@dataclass
class GridConfig:
    lengths: list = field(default_factory=lambda: [20.0, 20.0, 1.0])
    counts: list = field(default_factory=lambda: [41, 41, 2])
    shrink: float = 1.0

    def check(self):
        if len(self.lengths) != 3 or len(self.counts) != 3:
            raise ConfigError("grid.lengths and grid.counts need three entries")
        if any(float(L) <= 0 for L in self.lengths):
            raise ConfigError("grid.lengths must be positive (m)")
        if any(int(n) != n or int(n) < 2 for n in self.counts):
            raise ConfigError("grid.counts must be integers >= 2")
        if self.shrink < 1:
            raise ConfigError("grid.shrink must be >= 1")


@dataclass
class MaterialConfig:
    eps_r: float = 1.0
    mu_r: float = 1.0

    def check(self):
        if self.eps_r <= 0 or self.mu_r <= 0:
            raise ConfigError("relative permittivity and permeability must be positive")


@dataclass
class SourceConfig:
    kind: str = "gaussian_pulse"
    i_max: float = 1.0
    sigma_t: float = 2e-8
    frequency: float = 0.0

    def check(self):
        if self.kind not in ("gaussian_pulse", "sine", "zero"):
            raise ConfigError(f"source.kind {self.kind!r} is not one of gaussian_pulse, sine, zero")
        if self.kind == "gaussian_pulse" and self.sigma_t <= 0:
            raise ConfigError("source.sigma_t must be positive (s)")


@dataclass
class TimeConfig:
    t0: float = 0.0
    t_end: float = 2e-7
    dt: float | None = None
    cfl_fraction: float = 1.0

    def check(self):
        if not self.t_end > self.t0:
            raise ConfigError("time.t_end must exceed time.t0")
        if self.dt is not None and self.dt <= 0:
            raise ConfigError("time.dt must be positive (s)")
        if self.cfl_fraction <= 0:
            raise ConfigError("time.cfl_fraction must be positive")


@dataclass
class ParaExpConfig:
    p: int = 6
    expm: str = "leja"
    eps_A: float | str = 1e-2
    beta: float = 1.0

    def check(self):
        if int(self.p) != self.p or self.p < 1:
            raise ConfigError("paraexp.p must be a positive integer")
        if self.expm not in ("leja", "taylor", "krylov_ref"):
            raise ConfigError("paraexp.expm must be leja, taylor or krylov_ref")
        if isinstance(self.eps_A, str):
            if self.eps_A != "auto":
                raise ConfigError("paraexp.eps_A must be a number in (0, 1) or 'auto'")
        elif not 0 < self.eps_A < 1:
            raise ConfigError("paraexp.eps_A must lie in (0, 1)")
        if self.beta <= 0:
            raise ConfigError("paraexp.beta must be positive")


@dataclass
class SweepConfig:
    nx: list = field(default_factory=lambda: [11, 21, 31, 41, 51, 61])
    nt: list = field(default_factory=lambda: [200, 500, 800])
    k: list = field(default_factory=lambda: [1, 2, 5, 10, 15, 20])
    eps_A: float = 1e-2


@dataclass
class OutputConfig:
    directory: str | None = None
    energy_stride: int = 1

    def check(self):
        if int(self.energy_stride) != self.energy_stride or self.energy_stride < 1:
            raise ConfigError("output.energy_stride must be a positive integer")


@dataclass
class ExperimentConfig:
    preset: str = "custom"
    experiment: str = "simulation"
    method: str = "paraexp"
    compare_serial: bool = True
    threads: int | None = None
    grid: GridConfig = field(default_factory=GridConfig)
    materials: MaterialConfig = field(default_factory=MaterialConfig)
    source: SourceConfig = field(default_factory=SourceConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    paraexp: ParaExpConfig = field(default_factory=ParaExpConfig)
    probes: list = field(default_factory=lambda: [[10.0, 10.0, 0.0], [15.0, 10.0, 0.0]])
    reference_counts: list = field(default_factory=lambda: [121, 121, 2])
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def check(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}")
        if self.method not in ("paraexp", "leapfrog"):
            raise ConfigError("method must be paraexp or leapfrog")
        if self.threads is not None and (int(self.threads) != self.threads or self.threads < 0):
            raise ConfigError("threads must be a non-negative integer")
        for p in self.probes:
            if len(p) != 3:
                raise ConfigError("every probe is a point [x, y, z] in meters")
        for sub in (self.grid, self.materials, self.source, self.time, self.paraexp, self.output):
            sub.check()
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return _build(cls, data, "").check()


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(prefix + k for k in unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{prefix}{name}.")
        else:
            _check_type(value, default, prefix + name, str(f.type))
            kwargs[name] = float(value) if isinstance(default, float) and _is_number(value) else value
    try:
        return cls(**kwargs)
    except TypeError as exc:  # pragma: no cover - guarded by the key check
        raise ConfigError(str(exc)) from exc


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_type(value, default, name, annotation=""):
    if default is None:
        if value is None:
            return
        if annotation.startswith("int"):
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif annotation.startswith("float"):
            ok = _is_number(value)
        else:
            ok = isinstance(value, str)
        if not ok:
            raise ConfigError(f"{name} has the wrong type ({type(value).__name__})")
        return
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = _is_number(value) or (name.endswith("eps_A") and isinstance(value, str))
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list) and all(_is_number(x) or isinstance(x, list) for x in value)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{name} has the wrong type ({type(value).__name__})")


PRESETS = {
    "wave2d": {"preset": "wave2d", "experiment": "simulation"},
    "wave2d-ref": {"preset": "wave2d-ref", "experiment": "simulation", "method": "leapfrog",
                   "compare_serial": False, "grid": {"counts": [121, 121, 2]},
                   "probes": [[10.0, 10.0, 0.0], [15.0, 10.0, 0.0]]},
    "cost-uniform": {"preset": "cost-uniform", "experiment": "cost-uniform"},
    "cost-nonuniform": {"preset": "cost-nonuniform", "experiment": "cost-nonuniform"},
    "energy": {"preset": "energy", "experiment": "energy"},
    "spectrum": {"preset": "spectrum", "experiment": "spectrum"},
}


def apply_override(data: dict, assignment: str) -> dict:
    """Set ``a.b.c=value`` inside a nested dict (value parsed as JSON if it can be)."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form path.key=value")
    path, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = path.strip().split(".")
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {path!r} crosses a non-object value")
    node[keys[-1]] = value
    return data


def load_config(path, overrides=()) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from(data, overrides)


def config_from(data: dict, overrides=()) -> ExperimentConfig:
    data = copy.deepcopy(data)
    for ov in overrides:
        apply_override(data, ov)
    return ExperimentConfig.from_dict(data)


def preset_config(name: str, overrides=()) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    return config_from(PRESETS[name], overrides)


# --------------------------------------------------------------------------
# CSV


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def emit_csv(series, path) -> Path:
    """Write columns to CSV: header row, 17 significant digits, LF endings.

    ``series`` maps column names to equal-length sequences.
    """
    names = list(series)
    cols = [list(series[n]) for n in names]
    if not cols or len({len(c) for c in cols}) != 1:
        raise ValueError("series must be rectangular")
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


# --------------------------------------------------------------------------
# experiments


def build_system(cfg: ExperimentConfig, counts=None):
    return wave2d(counts=tuple(int(n) for n in (counts or cfg.grid.counts)),
                  lengths=tuple(cfg.grid.lengths), i_max=cfg.source.i_max,
                  sigma_t=cfg.source.sigma_t, kind=cfg.source.kind,
                  frequency=cfg.source.frequency, eps_r=cfg.materials.eps_r,
                  mu_r=cfg.materials.mu_r, shrink=cfg.grid.shrink)


def time_steps(cfg: ExperimentConfig, sys) -> tuple:
    interval = (cfg.time.t0, cfg.time.t_end)
    if cfg.time.dt is not None:
        return snapped_steps(interval, cfg.time.dt)
    return cfl_steps(sys, interval, cfg.time.cfl_fraction)


def _leapfrog_monitored(sys, n_t, dt, t0, probes):
    """Serial Leapfrog that fails on non-finite fields or runaway energy."""
    zero = np.zeros(sys.n_dof)
    try:
        r = integrate(sys, zero, zero, t0, n_t, dt, None, probes, (), (), record_energy=True,
                      check_cfl=False)
    except IntegrationDiverged as exc:
        raise NumericalFailure(f"Leapfrog diverged: {exc}; dt = {dt:.6g} s") from exc
    E = np.abs(r.energy[1:-1])
    if E.size >= 4:
        half = E.size // 2
        ref = np.max(E[:half])
        late = np.max(E[half:]) if np.all(np.isfinite(E)) else np.inf
        growth = late / ref if ref > 0 else (np.inf if late > 0 else 1.0)
        if not growth <= GROWTH_LIMIT:
            raise NumericalFailure(f"Leapfrog energy grew by {growth:.3g}x between the first and "
                                   f"second half of the run; dt = {dt:.6g} s is beyond the "
                                   "stability limit")
    return r


def _paraexp(cfg, sys, n_t, dt, probes, **kw):
    part = make_partition((cfg.time.t0, cfg.time.t_end), int(cfg.paraexp.p), dt)
    try:
        return run(sys, None, part, eps_A=cfg.paraexp.eps_A, probes_e=probes,
                   propagator=cfg.paraexp.expm, beta=cfg.paraexp.beta,
                   threads=cfg.threads, **kw)
    except (ParaExpError, ExpmOverflow, IntegrationDiverged) as exc:
        raise NumericalFailure(f"ParaExp failed: {exc}") from exc


def _probe_names(probes):
    return [f"ez{p}" for p in probes]


def run_simulation(cfg, outdir: Path) -> dict:
    sys = build_system(cfg)
    n_t, dt = time_steps(cfg, sys)
    probes = [ez_probe(sys, pt) for pt in cfg.probes]
    t = cfg.time.t0 + dt * np.arange(n_t + 1)
    series = {"t": t}
    summary = {"preset": cfg.preset, "n_t": n_t, "dt": dt, "n_dof": sys.n_dof}
    if cfg.method == "leapfrog" or cfg.compare_serial:
        lf = _leapfrog_monitored(sys, n_t, dt, cfg.time.t0, probes)
        for i, name in enumerate(_probe_names(probes)):
            series[f"leapfrog_{name}"] = lf.e_probe[:, i]
        summary["leapfrog_smvp"] = 2 * n_t
    if cfg.method == "paraexp":
        r = _paraexp(cfg, sys, n_t, dt, probes)
        for i, name in enumerate(_probe_names(probes)):
            series[f"paraexp_{name}"] = r.e_probe[:, i]
        summary.update(ledger=r.ledger.as_dict(), eps_A=r.eps_A, spectral_bound=r.spectral_bound,
                       effective_cost=dg.effective_cost(r.ledger, r.partition.p, n_t),
                       p=r.partition.p)
    emit_csv(series, outdir / "probes.csv")
    return summary


def run_energy(cfg, outdir: Path) -> dict:
    sys = build_system(cfg)
    n_t, dt = time_steps(cfg, sys)
    stride = int(cfg.output.energy_stride)
    steps = [m for m in range(1, n_t - 1) if m % stride == 0]
    fsteps = sorted(set(steps) | {m + 1 for m in steps})
    lf = serial_leapfrog(sys, None, n_t, dt, cfg.time.t0, field_steps=fsteps)
    t_lf, E_lf = dg.energy_trace(sys, lf, "staggered")
    emit_csv({"t": t_lf, "E": E_lf}, outdir / "energy_leapfrog.csv")
    r = _paraexp(cfg, sys, n_t, dt, [], field_steps=steps, e_steps=steps,
                 h_steps=sorted({m - 1 for m in steps} | set(steps)))
    t_pe, E_pe = dg.energy_trace(sys, r, "averaged")
    emit_csv({"t": t_pe, "E": E_pe}, outdir / "energy_paraexp.csv")
    return {"preset": cfg.preset, "n_t": n_t, "dt": dt, "eps_A": r.eps_A}


def run_spectrum(cfg, outdir: Path) -> dict:
    sys = build_system(cfg)
    n_t, dt = time_steps(cfg, sys)
    probe = cfg.probes[0]
    lf = _leapfrog_monitored(sys, n_t, dt, cfg.time.t0, [ez_probe(sys, probe)])
    r = _paraexp(cfg, sys, n_t, dt, [ez_probe(sys, probe)])
    ref_sys = build_system(cfg, counts=cfg.reference_counts)
    n_ref, _ = cfl_steps(ref_sys, (cfg.time.t0, cfg.time.t_end), cfg.time.cfl_fraction)
    sub = -(-n_ref // n_t)  # reference steps per coarse step
    ref = _leapfrog_monitored(ref_sys, n_t * sub, dt / sub, cfg.time.t0, [ez_probe(ref_sys, probe)])
    t = cfg.time.t0 + dt * np.arange(n_t + 1)
    f, m_ref = dg.spectrum(dg.ProbeTrace(0, t, ref.e_probe[::sub, 0]))
    _, m_lf = dg.spectrum(dg.ProbeTrace(0, t, lf.e_probe[:, 0]))
    _, m_pe = dg.spectrum(dg.ProbeTrace(0, t, r.e_probe[:, 0]))
    emit_csv({"f": f, "magnitude_ref": m_ref, "magnitude_leapfrog": m_lf,
              "magnitude_paraexp": m_pe}, outdir / "spectrum.csv")
    return {"preset": cfg.preset, "n_t": n_t, "dt": dt, "reference_substeps": sub, "eps_A": r.eps_A}


def run_cost_uniform(cfg, outdir: Path) -> dict:
    rows = dg.uniform_cost_sweep(cfg.sweep.nx, cfg.sweep.nt, (cfg.time.t0, cfg.time.t_end),
                                 cfg.sweep.eps_A)
    cols = list(zip(*rows))
    emit_csv({"nx": cols[0], "nt": cols[1], "smvp_leapfrog": cols[2], "smvp_leja": cols[3]},
             outdir / "cost_uniform.csv")
    return {"preset": cfg.preset, "rows": len(rows)}


def run_cost_nonuniform(cfg, outdir: Path) -> dict:
    rows = dg.nonuniform_cost_sweep(cfg.sweep.k, tuple(cfg.grid.counts),
                                    (cfg.time.t0, cfg.time.t_end), cfg.sweep.eps_A)
    cols = list(zip(*rows))
    emit_csv({"k": cols[0], "nt": cols[1], "smvp_leapfrog": cols[2], "smvp_leja": cols[3],
              "R": cols[4]}, outdir / "cost_nonuniform.csv")
    return {"preset": cfg.preset, "rows": len(rows)}


RUNNERS = {"simulation": run_simulation, "energy": run_energy, "spectrum": run_spectrum,
           "cost-uniform": run_cost_uniform, "cost-nonuniform": run_cost_nonuniform}


def resolve_output_dir(cfg: ExperimentConfig, cli_dir=None) -> Path:
    return Path(cli_dir or cfg.output.directory or os.environ.get(ENV_OUTPUT) or "paraexp-output")


def run_experiment(cfg: ExperimentConfig, output_dir=None) -> int:
    """Run one configured experiment; returns the process exit status."""
    try:
        outdir = resolve_output_dir(cfg, output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            summary = RUNNERS[cfg.experiment](cfg, outdir)
        with open(outdir / "summary.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump({"config": cfg.to_dict(), "result": summary}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(outdir / "config.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote results to {outdir}")
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="paraexp-em", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="PATH=VALUE", help="override a config field, e.g. paraexp.p=4")
        p.add_argument("--threads", type=int, default=None,
                       help="cap on worker threads (0 runs intervals sequentially)")
        p.add_argument("--output-dir", default=None, help=f"output directory (default ${ENV_OUTPUT})")

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("config")
    common(p_run)
    p_pre = sub.add_parser("preset", help="run a named preset")
    p_pre.add_argument("name", choices=sorted(PRESETS))
    common(p_pre)
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config")
    p_val.add_argument("--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.verb == "preset":
            cfg = preset_config(args.name, args.overrides)
        else:
            cfg = load_config(args.config, args.overrides)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.verb == "validate":
        print("config ok")
        return EXIT_OK
    if args.threads is not None:
        if args.threads < 0:
            print("invalid config: --threads must be >= 0", file=sys.stderr)
            return EXIT_CONFIG
        cfg.threads = args.threads
    return run_experiment(cfg, args.output_dir)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
