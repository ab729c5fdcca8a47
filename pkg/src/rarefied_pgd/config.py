"""Run configuration: flat key=value files, validation and discretization setup."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .discretization import DEFAULT_REFINEMENT, DiscretizationSet, build_discretization
from .grids import build_delta_grid
from .mesh import make_mesh

OUTPUT_ENV = "RAREFIED_PGD_OUTPUT"
DOMAINS = ("square", "trapezoid", "circle")
SOLVERS = ("full-rank", "pgd", "pgd-parametric")


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every offending field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass
class RunConfig:
    domain: str = "square"
    refinement: int | None = None
    p: int = 3
    N_r: int = 24
    N_z: int = 24
    v_max: float = 4.0
    stretch: float = 2.0
    N_theta: int = 48
    case: str = "P"
    solver: str = "full-rank"
    delta: float = 1.0
    delta_min: float = 0.01
    delta_max: float = 100.0
    N_delta: int = 33
    M_md: int = 15
    N_in: int = 10
    tol: float = 1e-3
    max_iter: int = 20000
    fr_tol: float = 1e-5
    measure: str = "delta"
    inner: str = "direct"
    output: str = "output"
    seed: int = 0

    def validate(self) -> "RunConfig":
        problems = []

        def need(cond, msg):
            if not cond:
                problems.append(msg)

        need(self.domain in DOMAINS or Path(self.domain).is_file(),
             f"domain: expected one of {DOMAINS} or an existing mesh file, got {self.domain!r}")
        need(self.refinement is None or self.refinement >= 1, f"refinement: must be >= 1, got {self.refinement!r}")
        need(1 <= self.p <= 4, f"p: must be in [1, 4], got {self.p!r}")
        need(self.N_r >= 4, f"N_r: must be >= 4, got {self.N_r!r}")
        need(self.N_z >= 4, f"N_z: must be >= 4, got {self.N_z!r}")
        need(self.v_max > 0, f"v_max: must be positive, got {self.v_max!r}")
        need(self.stretch >= 1, f"stretch: must be >= 1, got {self.stretch!r}")
        need(self.N_theta >= 4 and self.N_theta % 2 == 0, f"N_theta: must be even and >= 4, got {self.N_theta!r}")
        need(self.case in ("P", "T"), f"case: must be 'P' or 'T', got {self.case!r}")
        need(self.solver in SOLVERS, f"solver: expected one of {SOLVERS}, got {self.solver!r}")
        need(self.delta >= 0, f"delta: must be non-negative, got {self.delta!r}")
        need(0 < self.delta_min < self.delta_max,
             f"delta_min/delta_max: need 0 < delta_min < delta_max, got {self.delta_min!r}, {self.delta_max!r}")
        need(self.N_delta >= 3 and self.N_delta % 2 == 1, f"N_delta: must be odd and >= 3, got {self.N_delta!r}")
        need(self.M_md >= 1, f"M_md: must be >= 1, got {self.M_md!r}")
        need(self.N_in >= 1, f"N_in: must be >= 1, got {self.N_in!r}")
        need(self.tol > 0, f"tol: must be positive, got {self.tol!r}")
        need(self.max_iter >= 1, f"max_iter: must be >= 1, got {self.max_iter!r}")
        need(self.fr_tol > 0, f"fr_tol: must be positive, got {self.fr_tol!r}")
        need(self.measure in ("delta", "log"), f"measure: must be 'delta' or 'log', got {self.measure!r}")
        need(self.inner in ("direct", "gmres", "source"),
             f"inner: must be 'direct', 'gmres' or 'source', got {self.inner!r}")
        if problems:
            raise ConfigError(problems)
        return self

    def as_dict(self) -> dict:
        return asdict(self)

    def build_discretization(self) -> DiscretizationSet:
        refinement = self.refinement
        if refinement is None:
            refinement = DEFAULT_REFINEMENT.get(self.domain, 0)
        mesh = make_mesh(self.domain, refinement)
        disc = build_discretization(mesh, self.p, self.N_r, self.N_z, self.v_max, self.stretch, self.N_theta)
        disc.meta["refinement"] = refinement
        return disc

    def delta_grid(self):
        return build_delta_grid(self.N_delta, self.delta_min, self.delta_max)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _key(name: str) -> str:
    k = name.strip().replace("-", "_")
    for f in _FIELDS:
        if f.lower() == k.lower():
            return f
    return k


def _convert(name: str, raw):
    if raw is None:
        return None
    f = _FIELDS[name]
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if kind.startswith("int"):
            if isinstance(raw, str) and raw.strip().lower() == "none":
                return None
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        if kind == "float":
            return float(raw)
    except (TypeError, ValueError):
        raise ValueError(f"{name}: cannot interpret {raw!r} as {kind.split(' ')[0]}") from None
    return str(raw)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values, problems = {}, []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"{source}:{n}: expected key=value, got {line!r}")
            continue
        k, v = (s.strip() for s in line.split("=", 1))
        name = _key(k)
        if name not in _FIELDS:
            problems.append(f"{source}:{n}: unknown key {k!r}")
            continue
        try:
            values[name] = _convert(name, v)
        except ValueError as exc:
            problems.append(f"{source}:{n}: {exc}")
    if problems:
        raise ConfigError(problems)
    return values


def load_config(path=None, overrides: dict | None = None, env=None) -> RunConfig:
    """Defaults < config file < environment (output only) < explicit overrides."""
    env = os.environ if env is None else env
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc}") from exc
        values.update(parse_config_text(text, str(path)))
    if env.get(OUTPUT_ENV):
        values["output"] = env[OUTPUT_ENV]
    problems = []
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        name = _key(k)
        try:
            values[name] = _convert(name, v)
        except ValueError as exc:
            problems.append(str(exc))
    if problems:
        raise ConfigError(problems)
    return RunConfig(**values).validate()


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{k}={v}\n" for k, v in cfg.as_dict().items())
