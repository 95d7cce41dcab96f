"""Run configuration: a flat ``key = value`` text file with dotted keys.

Example::

    # 16 x 16 unit square, three levels
    mesh.dim = 2
    mesh.n = 16
    hierarchy.levels = 3
    sampler.sigma = 0.5
    mlmc.epsilon = 0.01
    seed = 7

Blank lines and ``#`` comments are ignored. Every key must appear in
``SCHEMA``; values are converted to the schema type and range-checked before
anything is computed.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .amge import HierarchyConfig
from .darcy import BoundaryConfig
from .sampler import FieldParams


class ConfigError(ValueError):
    pass


def _bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (attribute, type, default, check)
SCHEMA = {
    "mesh.dim": ("dim", int, 2, lambda v: v in (2, 3)),
    "mesh.n": ("n", int, 16, lambda v: v >= 1),
    "hierarchy.levels": ("n_levels", int, 3, lambda v: v >= 1),
    "hierarchy.factor": ("factor", int, 8, lambda v: v >= 2),
    "hierarchy.beta_c": ("beta_c", int, 8, lambda v: v >= 2),
    "hierarchy.min_local": ("min_local", int, 64, lambda v: v >= 1),
    "hierarchy.n_cores": ("n_cores", int, 1, lambda v: v >= 1),
    "hierarchy.balance_tol": ("balance_tol", float, 0.1, lambda v: 0 <= v < 1),
    "hierarchy.redistribution": ("redistribution", _bool, True, None),
    "sampler.sigma": ("sigma", float, 0.5, lambda v: v >= 0),
    "sampler.corr_len": ("corr_len", float, 0.1, lambda v: v > 0),
    "sampler.nu": ("nu", float, 1.0, lambda v: v > 0),
    "sampler.n_modes": ("n_modes", int, 64, lambda v: v >= 1),
    "boundary.p_in": ("p_in", float, 1.0, None),
    "boundary.p_out": ("p_out", float, 0.0, None),
    "mlmc.epsilon": ("epsilon", float, 0.01, lambda v: v > 0),
    "mlmc.pilot": ("pilot", int, 10, lambda v: v >= 2),
    "mlmc.floor": ("floor", int, 2, lambda v: v >= 1),
    "mlmc.cost_model": ("cost_model", str, "ops", lambda v: v in ("ops", "walltime")),
    "mlmc.message_cost": ("message_cost", float, 8.0, lambda v: v >= 0),
    "mlmc.timing_solves": ("timing_solves", int, 10, lambda v: v >= 1),
    "mlmc.compare": ("compare", _bool, False, None),
    "seed": ("seed", int, 0, lambda v: v >= 0),
    "output": ("output", str, "", None),
}


@dataclass(frozen=True)
class RunConfig:
    dim: int = 2
    n: int = 16
    n_levels: int = 3
    factor: int = 8
    beta_c: int = 8
    min_local: int = 64
    n_cores: int = 1
    balance_tol: float = 0.1
    redistribution: bool = True
    sigma: float = 0.5
    corr_len: float = 0.1
    nu: float = 1.0
    n_modes: int = 64
    p_in: float = 1.0
    p_out: float = 0.0
    epsilon: float = 0.01
    pilot: int = 10
    floor: int = 2
    cost_model: str = "ops"
    message_cost: float = 8.0
    timing_solves: int = 10
    compare: bool = False
    seed: int = 0
    output: str = ""

    @property
    def n_elements(self):
        return self.n ** self.dim

    def hierarchy(self, redistribution=None) -> HierarchyConfig:
        return HierarchyConfig(n_levels=self.n_levels, factor=self.factor, beta_c=self.beta_c,
                               min_local=self.min_local, n_cores=self.n_cores,
                               redistribution=self.redistribution if redistribution is None else redistribution,
                               balance_tol=self.balance_tol, seed=self.seed)

    def field(self) -> FieldParams:
        return FieldParams(self.sigma, self.corr_len, self.nu, self.n_modes)

    def boundary(self) -> BoundaryConfig:
        return BoundaryConfig(self.p_in, self.p_out)

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    def to_dict(self):
        attr_key = {spec[0]: key for key, spec in SCHEMA.items()}
        return {attr_key[f.name]: getattr(self, f.name) for f in fields(self)}


def parse_config(text) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        attr, typ, _, check = SCHEMA[key]
        try:
            v = typ(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
        if check is not None and not check(v):
            raise ConfigError(f"line {lineno}: value {value!r} out of range for {key}")
        values[key] = (attr, v)
    return RunConfig(**{attr: v for attr, v in values.values()})


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def format_config(cfg: RunConfig):
    return "".join(f"{k} = {str(v).lower() if isinstance(v, bool) else v}\n" for k, v in cfg.to_dict().items())
