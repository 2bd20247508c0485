"""Run configuration documents.

A document is a list of ``key = value`` lines; ``#`` starts a comment.  Keys
are namespaced by module (``potential.mu``, ``kernel.da``, ...).  Unknown and
duplicate keys are rejected, values are type-checked, and every module
precondition is validated before a run is dispatched.

Example::

    experiment = squid-scan
    potential.kind = double_well
    spectral.hbar = 0.2
    kernel.da = 0.3
    sequence.N = 8
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, InvalidInputError

EXPERIMENTS = ("spectrum", "qnd-harmonic", "squid-scan", "leggett-garg",
               "coupled", "sequence")


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return parse


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("must be a boolean (true/false)")


def _int(text):
    try:
        return int(text)
    except ValueError:
        raise ValueError("must be an integer") from None


def _float(text):
    try:
        v = float(text)
    except ValueError:
        raise ValueError("must be a number") from None
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _floats(text):
    parts = [p.strip() for p in text.replace(";", ",").split(",") if p.strip()]
    if not parts:
        raise ValueError("must be a comma-separated list of numbers")
    return tuple(_float(p) for p in parts)


SCHEMA = {
    "experiment": _choice(*EXPERIMENTS),
    "seed": _int,
    "output.dir": str,
    "potential.kind": _choice("harmonic", "double_well"),
    "potential.m": _float,
    "potential.omega": _float,
    "potential.mu": _float,
    "potential.lambda": _float,
    "spectral.hbar": _float,
    "spectral.M": _int,
    "spectral.richardson": _bool,
    "grid.x_min": _float,
    "grid.x_max": _float,
    "grid.n": _int,
    "kernel.kind": _choice("gaussian", "window"),
    "kernel.da": _float,
    "sequence.N": _int,
    "sequence.dT": _float,
    "sequence.mode": _choice("linear", "literal"),
    "sequence.policy": _choice("most_probable", "sampled", "fixed"),
    "sequence.results": _floats,
    "sequence.a_points": _int,
    "sequence.initial": _choice("ground", "left_well"),
    "scan.points": _int,
    "scan.dT_max": _float,
    "lg.tau12": _float,
    "lg.tau23": _float,
    "lg.trials": _int,
    "lg.measurement": _choice("kernel", "projective"),
    "lg.protocol": _choice("standard", "sequential"),
    "lg.a_points": _int,
    "coupled.m1": _float,
    "coupled.m2": _float,
    "coupled.omega1": _float,
    "coupled.omega2": _float,
    "coupled.gamma": _float,
    "coupled.da1": _float,
    "coupled.n1": _int,
    "coupled.n2": _int,
    "coupled.dT": _float,
    "coupled.N": _int,
}


@dataclass(frozen=True)
class RunConfig:
    """Validated run settings; ``None`` means "experiment default"."""

    experiment: str
    seed: int = 0
    output_dir: str | None = None
    potential_kind: str = "harmonic"
    m: float = 1.0
    omega: float = 1.0
    mu: float = 1.0
    lam: float = 1.0
    hbar: float = 1.0
    M: int = 32
    richardson: bool = True
    grid: tuple[float, float, int] | None = None
    kernel_kind: str = "gaussian"
    da: float | None = None
    N: int = 8
    dT: float | None = None
    mode: str = "linear"
    policy: str = "most_probable"
    results: tuple[float, ...] | None = None
    a_points: int = 801
    initial: str | None = None
    scan_points: int | None = None
    scan_dT_max: float | None = None
    tau12: float | None = None
    tau23: float | None = None
    trials: int = 10000
    lg_measurement: str = "kernel"
    lg_protocol: str = "standard"
    lg_a_points: int = 400
    coupled: dict = field(default_factory=dict)
    source: tuple[tuple[str, str], ...] = ()

    def echo(self) -> dict:
        """Flat ``key -> value`` view of the settings as supplied."""
        return dict(self.source)

    def digest(self) -> str:
        text = "\n".join(f"{k} = {v}" for k, v in sorted(self.source))
        return hashlib.sha256(text.encode()).hexdigest()


def parse_document(text: str) -> dict[str, str]:
    """Split a document into raw ``key -> value`` strings."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}", "empty key")
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        if key in out:
            raise ConfigError(key, "duplicate key")
        if not value:
            raise ConfigError(key, "missing value")
        out[key] = value
    return out


def parse_config(text: str, experiment: str | None = None,
                 overrides: dict[str, str] | None = None) -> RunConfig:
    """Parse and validate a configuration document.

    ``experiment`` (from the CLI subcommand) fills in or must agree with the
    document's ``experiment`` key.  ``overrides`` replace document values.
    """
    raw = parse_document(text)
    for key, value in (overrides or {}).items():
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        raw[key] = value
    if experiment is not None:
        if "experiment" in raw and raw["experiment"] != experiment:
            raise ConfigError("experiment", f"document says {raw['experiment']!r} "
                              f"but the command is {experiment!r}")
        raw["experiment"] = experiment
    if "experiment" not in raw:
        raise ConfigError("experiment", "missing required key")

    values = {}
    for key, text_value in raw.items():
        try:
            values[key] = SCHEMA[key](text_value)
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
    return _build(values, tuple(sorted(raw.items())))


def _positive(values, key):
    if key in values and not values[key] > 0:
        raise ConfigError(key, "must be > 0")


def _build(v: dict, source) -> RunConfig:
    exp = v["experiment"]
    bistable = exp in ("squid-scan", "leggett-garg")
    kind = v.get("potential.kind", "double_well" if bistable else "harmonic")
    if exp == "qnd-harmonic" and kind != "harmonic":
        raise ConfigError("potential.kind", "qnd-harmonic needs a harmonic potential")
    if bistable and kind != "double_well":
        raise ConfigError("potential.kind", f"{exp} needs a double_well potential")
    for key in ("potential.m", "potential.omega", "spectral.hbar", "kernel.da",
                "sequence.dT", "scan.dT_max", "lg.tau12", "lg.tau23"):
        _positive(v, key)
    if kind == "double_well":
        if "potential.mu" in v and not v["potential.mu"] > 0:
            raise ConfigError("potential.mu", "must be > 0 (DoubleWell needs mu > 0)")
        if "potential.lambda" in v and not v["potential.lambda"] > 0:
            raise ConfigError("potential.lambda",
                              "must be > 0 (DoubleWell needs lambda > 0)")
    M = v.get("spectral.M", 16 if bistable else 32)
    if M < 1:
        raise ConfigError("spectral.M", "must be >= 1")
    grid = None
    if any(k.startswith("grid.") for k in v):
        missing = [k for k in ("grid.x_min", "grid.x_max", "grid.n") if k not in v]
        if missing:
            raise ConfigError(missing[0], "missing required key (grid needs x_min, x_max, n)")
        if not v["grid.x_max"] > v["grid.x_min"]:
            raise ConfigError("grid.x_max", "must be > grid.x_min")
        if v["grid.n"] < 3:
            raise ConfigError("grid.n", "must be >= 3")
        if M > v["grid.n"] - 2:
            raise ConfigError("spectral.M", f"must be <= grid.n - 2 = {v['grid.n'] - 2}")
        if v.get("spectral.richardson", True) and v["grid.n"] % 2 == 0:
            raise ConfigError("grid.n", "must be odd when spectral.richardson is true")
        grid = (v["grid.x_min"], v["grid.x_max"], v["grid.n"])
    N = v.get("sequence.N", 8)
    if N < 0:
        raise ConfigError("sequence.N", "must be >= 0")
    policy = v.get("sequence.policy", "most_probable")
    results = v.get("sequence.results")
    if policy == "fixed" and exp in ("sequence", "qnd-harmonic", "squid-scan"):
        if results is None or len(results) != N + 1:
            raise ConfigError("sequence.results",
                              f"fixed policy needs N + 1 = {N + 1} results")
    if exp == "sequence" and "sequence.dT" not in v and N > 0:
        raise ConfigError("sequence.dT", "missing required key")
    for key, low in (("sequence.a_points", 3), ("scan.points", 1),
                     ("lg.trials", 1), ("lg.a_points", 3)):
        if key in v and v[key] < low:
            raise ConfigError(key, f"must be >= {low}")

    coupled = {k.split(".", 1)[1]: val for k, val in v.items()
               if k.startswith("coupled.")}
    if exp == "coupled":
        from .coupled import CoupledConfig
        fields = {k: val for k, val in coupled.items() if k not in ("dT", "N")}
        try:
            CoupledConfig(**fields)
        except InvalidInputError as exc:
            name = str(exc).split(" ", 1)[0].rstrip(":")
            key = name if name.startswith("coupled.") else "coupled"
            raise ConfigError(key, str(exc)) from None
        if "N" in coupled and coupled["N"] < 0:
            raise ConfigError("coupled.N", "must be >= 0")
        if "dT" in coupled and not coupled["dT"] >= 0:
            raise ConfigError("coupled.dT", "must be >= 0")

    return RunConfig(
        experiment=exp, seed=v.get("seed", 0), output_dir=v.get("output.dir"),
        potential_kind=kind, m=v.get("potential.m", 1.0),
        omega=v.get("potential.omega", 1.0), mu=v.get("potential.mu", 1.0),
        lam=v.get("potential.lambda", 1.0), hbar=v.get("spectral.hbar", 1.0),
        M=M, richardson=v.get("spectral.richardson", True), grid=grid,
        kernel_kind=v.get("kernel.kind", "gaussian"), da=v.get("kernel.da"),
        N=N, dT=v.get("sequence.dT"), mode=v.get("sequence.mode", "linear"),
        policy=policy, results=results,
        a_points=v.get("sequence.a_points", 801),
        initial=v.get("sequence.initial"),
        scan_points=v.get("scan.points"), scan_dT_max=v.get("scan.dT_max"),
        tau12=v.get("lg.tau12"), tau23=v.get("lg.tau23"),
        trials=v.get("lg.trials", 10000),
        lg_measurement=v.get("lg.measurement", "kernel"),
        lg_protocol=v.get("lg.protocol", "standard"),
        lg_a_points=v.get("lg.a_points", 400),
        coupled=coupled, source=source)


def load_config(path: Path | str, experiment: str | None = None,
                overrides: dict[str, str] | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, experiment, overrides)
