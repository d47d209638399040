"""INI run configuration: defaults, parsing and whole-file validation."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from .basis import DomainSpec

EXIT_OK, EXIT_BLOWUP, EXIT_MISSING, EXIT_PARSE, EXIT_INVALID, EXIT_NOCONV, EXIT_CHECKS = (
    0, 1, 2, 3, 4, 5, 6)

DEFAULT_CHECKS = ("energy", "cancellation", "kinematics", "pressure", "lq", "apriori",
                  "barotropic", "monotone", "checkpoint")

# section -> key -> (type, default); None default means "derived"
SCHEMA: dict[str, dict[str, tuple]] = {
    "domain": {
        "h": (float, 1.0), "Lx": (float, 1.0), "Ly": (float, 1.0),
        "Mx": (int, 8), "My": (int, 8), "K": (int, 8),
        "Nq_x": (int, None), "Nq_y": (int, None), "Nq_z": (int, None),
    },
    "integrator": {
        "dt": (float, 1e-3), "scheme": (str, "cnab2"), "T_end": (float, 1.0),
        "diag_every": (int, 10), "checkpoint_every": (int, 0),
        "nonlinear": (bool, True), "cfl": (float, 0.5), "blowup": (float, 1e6),
    },
    "forcing": {
        "variant": (str, "zero"), "profile": (str, "random"), "amplitude": (float, 0.0),
        "seed": (int, 1), "decay": (float, 1.0), "component": (int, 0), "k": (int, 1),
        "mode": (int, 0), "period": (float, 1.0), "phase": (float, 0.0),
        "checkpoint": (str, ""),
    },
    "initial": {
        "profile": (str, "random"), "amplitude": (float, 0.05), "seed": (int, 0),
        "decay": (float, 1.0), "component": (int, 0), "k": (int, 1), "mode": (int, 0),
        "checkpoint": (str, ""), "regularity": (str, "strong"),
    },
    "output": {
        "directory": (str, "run"), "csv": (str, "diagnostics.csv"),
        "q_list": (str, "2,4,6,8"), "eta": (float, 2.0), "pressure": (bool, True),
        "final_checkpoint": (str, "final.pehv"),
    },
    "periodic": {
        "T": (float, 1.0), "damping": (float, 1.0), "tol": (float, 1e-8),
        "max_iter": (int, 50), "contraction_ensemble": (int, 10), "anderson": (bool, False),
        "delta": (float, 0.0), "seed": (int, 0), "checkpoint": (str, "periodic.pehv"),
    },
    "verify": {
        "checks": (str, ",".join(DEFAULT_CHECKS)), "csv": (str, ""),
        "energy_tol": (float, 1e-6), "cancellation_tol": (float, 1e-10),
        "kinematic_tol": (float, 1e-10), "pressure_tol": (float, 1e-10),
        "bound_tol": (float, 1e-8),
    },
}

PROFILES = ("zero", "random", "mode", "barotropic", "baroclinic", "checkpoint")


class ConfigError(Exception):
    """Carries an exit code and the full list of problems found."""

    def __init__(self, code: int, problems: list[str]):
        super().__init__("; ".join(problems))
        self.code = code
        self.problems = problems


@dataclass
class RunConfig:
    domain: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=dict)
    forcing: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    periodic: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    path: Path | None = None

    def domain_spec(self) -> DomainSpec:
        return DomainSpec(**self.domain)

    @property
    def q_list(self) -> tuple:
        return tuple(float(q) for q in self.output["q_list"].split(",") if q.strip())

    @property
    def checks(self) -> list[str]:
        return [c.strip() for c in self.verify["checks"].split(",") if c.strip()]

    def out_dir(self) -> Path:
        d = Path(self.output["directory"])
        if not d.is_absolute() and self.path is not None:
            d = self.path.parent / d
        return d

    def resolve(self, p: str) -> Path:
        q = Path(p)
        if not q.is_absolute() and self.path is not None:
            q = self.path.parent / q
        return q

    def as_dict(self) -> dict:
        return {s: dict(getattr(self, s)) for s in SCHEMA}


def _convert(kind, raw: str):
    if kind is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return kind(raw.strip())


def _validate(cfg: RunConfig) -> list[str]:
    bad = []
    try:
        spec = cfg.domain_spec()
        bad += spec.violations()
    except (TypeError, ValueError) as exc:
        bad.append(f"[domain] {exc}")
    it = cfg.integrator
    if not it["dt"] > 0:
        bad.append("[integrator] dt must be > 0")
    if it["scheme"] not in ("cnab2", "imex-euler"):
        bad.append("[integrator] scheme must be cnab2 or imex-euler")
    if it["T_end"] < 0:
        bad.append("[integrator] T_end must be >= 0")
    elif it["dt"] > 0:
        n = it["T_end"] / it["dt"]
        if abs(n - round(n)) > 1e-9 * max(n, 1):
            bad.append("[integrator] T_end must be a whole number of steps")
    if it["diag_every"] < 1 or it["checkpoint_every"] < 0:
        bad.append("[integrator] diag_every must be >= 1 and checkpoint_every >= 0")
    if not it["blowup"] > 0 or not it["cfl"] > 0:
        bad.append("[integrator] blowup and cfl must be > 0")
    fo = cfg.forcing
    if fo["variant"] not in ("zero", "steady", "time_periodic"):
        bad.append("[forcing] variant must be zero, steady or time_periodic")
    if fo["variant"] != "zero":
        if fo["profile"] not in ("random", "mode", "checkpoint"):
            bad.append("[forcing] profile must be random, mode or checkpoint")
        if fo["profile"] == "checkpoint" and not fo["checkpoint"]:
            bad.append("[forcing] profile = checkpoint needs a checkpoint path")
    if fo["variant"] == "time_periodic" and not fo["period"] > 0:
        bad.append("[forcing] period must be > 0")
    ini = cfg.initial
    if ini["profile"] not in PROFILES:
        bad.append(f"[initial] profile must be one of {', '.join(PROFILES)}")
    if ini["profile"] == "checkpoint" and not ini["checkpoint"]:
        bad.append("[initial] profile = checkpoint needs a checkpoint path")
    if ini["regularity"] not in ("strong", "z-weak"):
        bad.append("[initial] regularity must be strong or z-weak")
    for sec in (fo, ini):
        if sec["component"] not in (0, 1):
            bad.append("component must be 0 or 1")
        if not math.isfinite(sec["amplitude"]):
            bad.append("amplitude must be finite")
    try:
        qs = cfg.q_list
        if any(q < 1 for q in qs):
            bad.append("[output] q_list entries must be >= 1")
    except ValueError:
        bad.append("[output] q_list must be a comma separated list of numbers")
    if not cfg.output["eta"] > 0:
        bad.append("[output] eta must be > 0")
    pe = cfg.periodic
    if not pe["T"] > 0:
        bad.append("[periodic] T must be > 0")
    if not 0 < pe["damping"] <= 1:
        bad.append("[periodic] damping must lie in (0, 1]")
    if not pe["tol"] > 0 or pe["max_iter"] < 1 or pe["contraction_ensemble"] < 0:
        bad.append("[periodic] need tol > 0, max_iter >= 1, contraction_ensemble >= 0")
    if pe["delta"] < 0:
        bad.append("[periodic] delta must be >= 0 (0 selects the default)")
    unknown = [c for c in cfg.checks if c not in DEFAULT_CHECKS]
    if unknown:
        bad.append(f"[verify] unknown checks: {', '.join(unknown)}")
    return bad


def parse_config(path) -> RunConfig:
    """Read and validate an INI run file; raise ConfigError listing every problem."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(EXIT_MISSING, [f"config file not found: {path}"])
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str           # keys are case sensitive (Mx, Nq_x)
    try:
        parser.read_string(path.read_text(), source=str(path))
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(EXIT_PARSE, [f"cannot parse {path}: {exc}"]) from None
    return build_config(parser, path)


def parse_string(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(EXIT_PARSE, [str(exc)]) from None
    return build_config(parser, None)


def build_config(parser: configparser.ConfigParser, path: Path | None) -> RunConfig:
    problems = []
    for sec in parser.sections():
        if sec not in SCHEMA:
            problems.append(f"unknown section [{sec}]")
    values = {}
    for sec, keys in SCHEMA.items():
        vals = {}
        given = parser[sec] if parser.has_section(sec) else {}
        for key in given:
            if key not in keys:
                problems.append(f"unknown key '{key}' in [{sec}]")
        for key, (kind, default) in keys.items():
            if key in given:
                try:
                    vals[key] = _convert(kind, given[key])
                except ValueError:
                    problems.append(f"[{sec}] {key}: cannot read {given[key]!r} as {kind.__name__}")
                    vals[key] = default
            else:
                vals[key] = default
        values[sec] = vals
    if problems:
        raise ConfigError(EXIT_INVALID, problems)
    cfg = RunConfig(**values, path=path)
    # fill derived quadrature defaults so the report shows what was used
    spec = None
    try:
        spec = cfg.domain_spec()
    except (TypeError, ValueError):
        pass
    if spec is not None:
        cfg.domain.update(Nq_x=spec.Nq_x, Nq_y=spec.Nq_y, Nq_z=spec.Nq_z)
    problems = _validate(cfg)
    if problems:
        raise ConfigError(EXIT_INVALID, problems)
    return cfg
