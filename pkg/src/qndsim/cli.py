"""Command-line front end.

    qndsim <experiment> [--config PATH] [--seed N] [--out DIR] [--threads N]
                        [--set key=value ...]

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 degenerate
run.  Outputs are CSV files plus ``manifest.json``; the manifest is written
last, atomically, and lists every file with its SHA-256 digest.
"""

from __future__ import annotations

import argparse
import math
import platform
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import io
from .config import EXPERIMENTS, RunConfig, load_config, parse_config
from .errors import ConfigError, DegenerateRunError, QNDError
from .measurement import GaussianKernel, StateCoefficients, WindowKernel
from .sequence import SequenceConfig, ground_sigma, run_sequence
from .spectral import DoubleWell, Grid1D, Harmonic, compute_spectrum


@dataclass
class RunManifest:
    config: dict
    config_hash: str
    experiment: str
    seed: int
    files: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    version: str = __version__
    warnings: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "experiment": self.experiment, "seed": self.seed,
            "config": self.config, "config_hash": self.config_hash,
            "files": self.files, "summary": self.summary,
            "diagnostics": self.diagnostics, "timing": self.timing,
            "library_version": self.version,
            "python": platform.python_version(),
            "numpy": np.__version__, "warnings": self.warnings,
        }


def _potential(cfg: RunConfig):
    if cfg.potential_kind == "double_well":
        return DoubleWell(cfg.mu, cfg.lam, cfg.m)
    return Harmonic(cfg.m, cfg.omega)


def _spectrum(cfg: RunConfig):
    grid = Grid1D(*cfg.grid) if cfg.grid else None
    return compute_spectrum(_potential(cfg), cfg.M, cfg.hbar, grid,
                            richardson=cfg.richardson)


def _kernel(cfg: RunConfig, default_da: float):
    da = cfg.da if cfg.da is not None else default_da
    return WindowKernel(da) if cfg.kernel_kind == "window" else GaussianKernel(da)


def _default_da(cfg: RunConfig) -> float:
    from .experiments import well_sigma
    if cfg.potential_kind == "double_well":
        return well_sigma(DoubleWell(cfg.mu, cfg.lam, cfg.m), cfg.hbar)
    return ground_sigma(cfg.m, cfg.omega, cfg.hbar)


def _params(cfg: RunConfig) -> dict:
    return {**_potential(cfg).parameters(), "hbar": cfg.hbar}


def _run_spectrum(cfg, out, manifest, threads):
    spec = _spectrum(cfg)
    files = io.write_spectrum(spec, out)
    manifest.summary.update({
        "energies": spec.energies, "M": spec.size,
        "grid": {"x_min": spec.grid.x_min, "x_max": spec.grid.x_max,
                 "n": spec.grid.n},
        "richardson": spec.extrapolated, "potential": _params(cfg)})
    if isinstance(spec.potential, Harmonic):
        from .spectral import harmonic_oracle
        exact = harmonic_oracle(cfg.m, cfg.omega, cfg.hbar, spec.size)
        manifest.diagnostics["max_rel_error_vs_analytic"] = float(
            np.max(np.abs(spec.energies - exact) / exact))
    return files


def _curve_summary(curve, manifest):
    ok = [p for p in curve.points if p.error is None]
    manifest.diagnostics["max_leak"] = max((p.leak for p in ok), default=math.nan)
    manifest.diagnostics["point_errors"] = [
        {"dT": p.dT, "error": p.error} for p in curve.points if p.error]
    manifest.diagnostics["ambiguous_peaks_at_dT"] = [
        p.dT for p in curve.points if p.ambiguous]
    if ok:
        i = curve.argmin()
        manifest.summary["argmin_dT"] = curve.points[i].dT
        manifest.summary["min_da_eff"] = curve.points[i].da_eff
        manifest.summary["local_minima_dT"] = [
            curve.points[j].dT for j in curve.local_minima()[:6]]
    manifest.summary["run"] = curve.meta


def _run_qnd(cfg, out, manifest, threads):
    from .experiments import default_dT_grid, qnd_harmonic_scan
    spec = _spectrum(cfg)
    period = 2 * math.pi / cfg.omega
    grid = default_dT_grid(cfg.scan_dT_max or period, cfg.scan_points or 64)
    curve = qnd_harmonic_scan(cfg.m, cfg.omega, cfg.hbar,
                              _kernel(cfg, _default_da(cfg)), cfg.N, grid,
                              cfg.policy, cfg.mode, seed=cfg.seed,
                              threads=threads, spectrum=spec)
    _curve_summary(curve, manifest)
    manifest.summary["period"] = period
    return [io.write_curve(curve, out / "curve.csv")]


def _run_squid(cfg, out, manifest, threads):
    from .experiments import default_dT_grid, squid_scan
    from .spectral import reformation_time
    spec = _spectrum(cfg)
    T12 = reformation_time(spec, 1, 2)
    grid = default_dT_grid(cfg.scan_dT_max or 2.5 * T12, cfg.scan_points or 96)
    scan = squid_scan(cfg.mu, cfg.lam, cfg.m, cfg.hbar,
                      _kernel(cfg, _default_da(cfg)), cfg.N, grid, cfg.policy,
                      cfg.mode, seed=cfg.seed, threads=threads, spectrum=spec)
    _curve_summary(scan.curve, manifest)
    manifest.summary["T12"] = scan.T12
    return [io.write_curve(scan.curve, out / "curve.csv")]


def _run_lg(cfg, out, manifest, threads):
    from .experiments import LeggettGargConfig, leggett_garg_run
    from .spectral import reformation_time
    spec = _spectrum(cfg)
    T12 = reformation_time(spec, 1, 2)
    lg = LeggettGargConfig(
        DoubleWell(cfg.mu, cfg.lam, cfg.m), cfg.tau12 or T12 / 2,
        cfg.tau23 or T12 / 2, _kernel(cfg, _default_da(cfg)), cfg.trials,
        cfg.seed, cfg.mode, cfg.lg_measurement, cfg.lg_protocol,
        cfg.lg_a_points)
    result = leggett_garg_run(lg, spec)
    report = {**result.as_dict(), "T12": T12, "tau12": lg.tau12,
              "tau23": lg.tau23, "trials": lg.trials,
              "measurement": lg.measurement, "protocol": lg.protocol,
              "mode": lg.mode, "kernel": lg.kernel.parameters(),
              "potential": _params(cfg),
              "construction": "q = sign(result); K = C12 + C23 - C13; "
                              "violation when K > 1 + 2 se_K"}
    manifest.summary.update(report)
    return [io.write_lg_trials(result, out / "lg_trials.csv"),
            io.write_json_atomic(report, out / "lg_report.json")]


def _run_coupled(cfg, out, manifest, threads):
    from .coupled import CoupledConfig, coupled_sequence
    fields = {k: v for k, v in cfg.coupled.items() if k not in ("dT", "N")}
    cc = CoupledConfig(**fields)
    dT = cfg.coupled.get("dT", math.pi / cc.omega1)
    N = cfg.coupled.get("N", 10)
    policy = cfg.policy if cfg.policy != "fixed" else "most_probable"
    trace = coupled_sequence(cc, N, dT, policy, cfg.seed)
    manifest.summary.update({
        "coupled": fields, "dT": dT, "N": N, "policy": policy,
        "definition": "indirect spread = sqrt(2 Var(x2)) of the conditioned state"})
    manifest.diagnostics["max_leak"] = max(trace.leaks)
    return [io.write_trace(trace, out / "trace.csv")]


def _run_sequence(cfg, out, manifest, threads):
    from .experiments import squid_initial_state
    spec = _spectrum(cfg)
    initial = cfg.initial or ("left_well" if cfg.potential_kind == "double_well"
                              else "ground")
    c0 = squid_initial_state(spec) if initial == "left_well" \
        else StateCoefficients.basis(spec.size)
    dT = cfg.dT or 0.0
    seq = SequenceConfig(_kernel(cfg, _default_da(cfg)), dT, cfg.N, cfg.mode,
                         cfg.policy, cfg.seed, cfg.results,
                         a_points=cfg.a_points)
    path = out / "record.csv"
    try:
        result = run_sequence(spec, c0, seq)
    except DegenerateRunError as exc:
        if exc.partial is not None:
            io.write_record(exc.partial, dT, path)
        raise
    manifest.summary.update({
        "results": result.results, "da_eff": result.da_eff,
        "a_tilde": result.a_tilde, "log_likelihood": result.log_likelihood,
        "mode": result.mode, "initial": initial, "potential": _params(cfg)})
    manifest.diagnostics["max_leak"] = result.leak
    manifest.diagnostics["ambiguous_peaks_at_step"] = [
        k for k, a in enumerate(result.ambiguous) if a]
    return [io.write_record(result, dT, path)]


RUNNERS = {
    "spectrum": _run_spectrum,
    "qnd-harmonic": _run_qnd,
    "squid-scan": _run_squid,
    "leggett-garg": _run_lg,
    "coupled": _run_coupled,
    "sequence": _run_sequence,
}


def dispatch(config: RunConfig, out_dir: Path | str | None = None,
             threads: int = 1) -> RunManifest:
    """Run ``config.experiment`` and write its artifacts and manifest."""
    out = Path(out_dir or config.output_dir or f"runs/{config.experiment}")
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config.echo(), config.digest(), config.experiment,
                           config.seed)
    manifest.summary["mode"] = config.mode
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        files = RUNNERS[config.experiment](config, out, manifest, threads)
    manifest.warnings = sorted({str(w.message) for w in caught})
    manifest.timing = {"wall_seconds": time.perf_counter() - t0,
                       "threads": threads}
    manifest.files = [{"path": Path(f).name, "sha256": io.file_digest(f)}
                      for f in files]
    io.write_json_atomic(manifest.as_dict(), out / "manifest.json")
    return manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qndsim",
        description="Repeated impulsive position measurements: spectra, "
                    "effective-uncertainty scans, Leggett-Garg runs.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="key = value document")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="parallelism hint; never changes results")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError("--set", f"expected KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            overrides[k.strip()] = v.strip()
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2 ** 64:
                raise ConfigError("--seed", "must be an unsigned 64-bit integer")
            overrides["seed"] = str(args.seed)
        if args.threads < 1:
            raise ConfigError("--threads", "must be >= 1")
        if args.config is not None:
            cfg = load_config(args.config, args.experiment, overrides)
        else:
            cfg = parse_config("", args.experiment, overrides)
        manifest = dispatch(cfg, args.out, args.threads)
    except QNDError as exc:
        print(f"qndsim {args.experiment}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    s = manifest.summary
    print(f"{args.experiment}: wrote {len(manifest.files)} file(s) in "
          f"{manifest.timing['wall_seconds']:.2f} s (mode={s.get('mode')}, "
          f"seed={manifest.seed})")
    for key in ("T12", "argmin_dT", "min_da_eff", "K", "violation"):
        if key in s:
            print(f"  {key} = {s[key]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
