"""Run configuration: an INI file parsed into nested dataclasses.

Grammar (``key = value`` under ``[section]`` headers, ``#`` comments)::

    [grid]      n, x_min, x_max, boundary (periodic | reflecting)
    [physics]   hbar, m, kappa, gamma, kT, dl, convention (quantum | smoluchowski)
    [equation]  kind (modular | hj_classical | heat_forward | heat_backward | fokker_planck)
    [potential] kind (zero | harmonic | inverted_harmonic | quartic | custom_table),
                omega, a, center, sign (confining | scattering), table
    [drift]     kind (zero | ou | quartic | custom_table), rate, a, center, table
                (Smoluchowski potential; drift is -grad / (m gamma))
    [initial]   kind (gaussian | plane_wave | eigenstate_guess | custom_table),
                sigma, x0, p0, k, table, perturbation
    [time]      dt, t_end, output_every, snapshot_every, filter_k
    [checks]    suites (comma list; empty means the defaults of the equation)
    [duality]   map (none | wick_quantum_to_heat | kappa_reduce | scale_fields | hyperbolic_mix),
                compare (true | false), beta, alpha
    [run]       seed, output_dir, label

Relative ``table`` paths resolve against the config file's directory.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

from .errors import ConfigInvalid

EQUATIONS = ("modular", "hj_classical", "heat_forward", "heat_backward", "fokker_planck")
POTENTIALS = ("zero", "harmonic", "inverted_harmonic", "quartic", "custom_table")
DRIFTS = ("zero", "ou", "quartic", "custom_table")
INITIALS = ("gaussian", "plane_wave", "eigenstate_guess", "custom_table")
MAPS = ("none", "wick_quantum_to_heat", "kappa_reduce", "scale_fields", "hyperbolic_mix")
SUITES = (
    "norm",
    "hamiltonian",
    "on_shell",
    "f_rate",
    "lyapunov",
    "q_identity",
    "entropy_rate",
    "mass",
    "positivity",
    "free_energy",
    "kl",
    "de_bruijn",
    "relaxation",
    "heat_kernel",
)


@dataclass
class GridConfig:
    n: int = 1024
    x_min: float = -20.0
    x_max: float = 20.0
    boundary: str = "periodic"


@dataclass
class PhysicsConfig:
    hbar: float = 1.0
    m: float = 1.0
    kappa: float = 0.0
    gamma: float = 1.0
    kT: float = 1.0
    dl: float = 1.0
    convention: str = "quantum"


@dataclass
class EquationConfig:
    kind: str = "modular"


@dataclass
class PotentialConfig:
    kind: str = "zero"
    omega: float = 1.0
    a: float = 1.0
    center: float = 0.0
    sign: str = "confining"
    table: str = ""


@dataclass
class DriftConfig:
    kind: str = "zero"
    rate: float = 1.0
    a: float = 1.0
    center: float = 0.0
    table: str = ""


@dataclass
class InitialConfig:
    kind: str = "gaussian"
    sigma: float = 1.0
    x0: float = 0.0
    p0: float = 0.0
    k: float = 1.0
    table: str = ""
    perturbation: float = 0.0


@dataclass
class TimeConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    output_every: int = 100
    snapshot_every: int = 0
    filter_k: float = 0.0


@dataclass
class ChecksConfig:
    suites: list = field(default_factory=list)


@dataclass
class DualityConfig:
    map: str = "none"
    compare: bool = False
    beta: float = 2.0
    alpha: float = 0.5


@dataclass
class RunSection:
    seed: int = 0
    output_dir: str = ""
    label: str = "run"


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    equation: EquationConfig = field(default_factory=EquationConfig)
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    drift: DriftConfig = field(default_factory=DriftConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    checks: ChecksConfig = field(default_factory=ChecksConfig)
    duality: DualityConfig = field(default_factory=DualityConfig)
    run: RunSection = field(default_factory=RunSection)
    base_dir: str = "."

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def steps(self) -> int:
        return int(round(self.time.t_end / self.time.dt))

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def with_value(self, dotted: str, value) -> "RunConfig":
        """Copy with one ``section.key`` replaced; the value is coerced to the field type."""
        section, _, key = dotted.partition(".")
        errors: list[str] = []
        if not hasattr(self, section) or not is_dataclass(getattr(self, section)):
            raise ConfigInvalid(f"unknown section {section!r}")
        sub = getattr(self, section)
        types = {f.name: f.type for f in fields(sub)}
        if key not in types:
            raise ConfigInvalid(f"unknown key {dotted!r}")
        coerced = _coerce(types[key], str(value), dotted, errors)
        if errors:
            raise ConfigInvalid(errors)
        return replace(self, **{section: replace(sub, **{key: coerced})})


def _coerce(typ, raw: str, where: str, errors: list[str]):
    raw = raw.strip()
    name = typ if isinstance(typ, str) else getattr(typ, "__name__", str(typ))
    try:
        if name == "int":
            return int(raw)
        if name == "float":
            return float(raw)
        if name == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if name == "list":
            return [item.strip() for item in raw.split(",") if item.strip()]
        return raw
    except ValueError:
        errors.append(f"{where}: cannot read {raw!r} as {name}")
        return None


def parse_config(text: str, base_dir: str = ".") -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigInvalid(f"syntax: {exc}") from exc
    cfg = RunConfig(base_dir=base_dir)
    errors: list[str] = []
    for section in parser.sections():
        if section == "base_dir" or not hasattr(cfg, section):
            errors.append(f"[{section}]: unknown section")
            continue
        sub = getattr(cfg, section)
        types = {f.name: f.type for f in fields(sub)}
        updates = {}
        for key, raw in parser.items(section):
            if key not in types:
                errors.append(f"{section}.{key}: unknown key")
                continue
            value = _coerce(types[key], raw, f"{section}.{key}", errors)
            if value is not None:
                updates[key] = value
        setattr(cfg, section, replace(sub, **updates))
    if errors:
        raise ConfigInvalid(errors)
    validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path.parent))


def validate(cfg: RunConfig) -> None:
    """Collect every field-level problem and raise them together."""
    e: list[str] = []
    g, ph, t = cfg.grid, cfg.physics, cfg.time
    if g.n < 64 or g.n & (g.n - 1):
        e.append(f"grid.n: must be a power of two >= 64, got {g.n}")
    if not g.x_max > g.x_min:
        e.append("grid.x_max: must exceed grid.x_min")
    if g.boundary not in ("periodic", "reflecting"):
        e.append(f"grid.boundary: unknown {g.boundary!r}")
    for key in ("hbar", "m", "dl"):
        if not getattr(ph, key) > 0:
            e.append(f"physics.{key}: must be positive")
    if ph.kappa < 0:
        e.append("physics.kappa: must be non-negative")
    if ph.convention not in ("quantum", "smoluchowski"):
        e.append(f"physics.convention: unknown {ph.convention!r}")
    if ph.convention == "smoluchowski" and not (ph.gamma > 0 and ph.kT > 0):
        e.append("physics.gamma/kT: must be positive in the smoluchowski convention")
    kind = cfg.equation.kind
    if kind not in EQUATIONS:
        e.append(f"equation.kind: unknown {kind!r}")
    if kind == "hj_classical" and ph.kappa != 1.0:
        e.append("physics.kappa: hj_classical requires kappa = 1")
    if kind in ("heat_forward", "heat_backward") and ph.kappa != 2.0:
        e.append(f"physics.kappa: {kind} belongs to the kappa = 2 sector")
    if cfg.potential.kind not in POTENTIALS:
        e.append(f"potential.kind: unknown {cfg.potential.kind!r}")
    if cfg.potential.sign not in ("confining", "scattering"):
        e.append(f"potential.sign: unknown {cfg.potential.sign!r}")
    if cfg.potential.kind in ("harmonic", "inverted_harmonic") and not cfg.potential.omega > 0:
        e.append("potential.omega: must be positive")
    if cfg.potential.kind == "custom_table" and not cfg.potential.table:
        e.append("potential.table: required for custom_table")
    if cfg.drift.kind not in DRIFTS:
        e.append(f"drift.kind: unknown {cfg.drift.kind!r}")
    if cfg.drift.kind == "custom_table" and not cfg.drift.table:
        e.append("drift.table: required for custom_table")
    if cfg.initial.kind not in INITIALS:
        e.append(f"initial.kind: unknown {cfg.initial.kind!r}")
    if cfg.initial.kind == "custom_table" and not cfg.initial.table:
        e.append("initial.table: required for custom_table")
    if not cfg.initial.sigma > 0:
        e.append("initial.sigma: must be positive")
    if not t.dt > 0:
        e.append("time.dt: must be positive")
    if not t.t_end > 0:
        e.append("time.t_end: must be positive")
    if t.output_every < 1:
        e.append("time.output_every: must be >= 1")
    if t.snapshot_every < 0:
        e.append("time.snapshot_every: must be >= 0")
    if t.filter_k < 0:
        e.append("time.filter_k: must be >= 0 (0 selects the automatic cutoff)")
    for s in cfg.checks.suites:
        if s not in SUITES:
            e.append(f"checks.suites: unknown suite {s!r}")
    if cfg.duality.map not in MAPS:
        e.append(f"duality.map: unknown {cfg.duality.map!r}")
    if cfg.duality.map == "kappa_reduce" and abs(ph.kappa - 1.0) < 1e-12:
        e.append("duality.map: kappa_reduce is undefined at kappa = 1")
    if cfg.duality.map == "wick_quantum_to_heat" and cfg.duality.compare and ph.kappa != 2.0:
        e.append("duality.compare: the quantum-to-heat comparison needs kappa = 2")
    if cfg.duality.map in ("kappa_reduce", "wick_quantum_to_heat") and kind != "modular":
        e.append(f"duality.map: {cfg.duality.map} applies to modular runs")
    if not cfg.duality.beta > 0:
        e.append("duality.beta: must be positive")
    if e:
        raise ConfigInvalid(e)
