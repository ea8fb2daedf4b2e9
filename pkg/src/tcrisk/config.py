"""Run configuration: YAML schema, validation and portfolio (de)serialization.

A config file has two top-level sections::

    portfolio: bundled:t_d2        # or a path (relative to the config) or an inline mapping
    run:
      methods: [NV, IS, SIS, QNV, QLT, QIS]
      target_prob: [0.05, 0.001]   # or tau: [...]; exactly one of the two
      n: 100000                    # MC sample size and RQMC budget n = N * M
      M: 40                        # RQMC outer replications
      converge_M: 1                # outer replications of RQMC SIS in convergence sweeps
      N: 2500                      # points per replication (default n // M)
      strata: [22, 22]
      schedule: [0.1, 0.2, 0.3, 0.4]
      seed: 0
      repetitions: 1
      reference_n: 10000000        # convergence reference budget
      out: null

A portfolio mapping holds ``name``, ``nu``, ``weights``, ``scales``,
``correlation`` (row-major list of rows), ``marginals`` (one mapping per
asset with ``kind: student_t`` and ``df``, or
``kind: generalized_hyperbolic`` with ``lambda``, ``alpha``, ``beta``,
``delta``, ``mu``) and optionally ``thresholds``
(target probability -> tau).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, DomainError
from .estim.sis import DEFAULT_SCHEDULE, DEFAULT_STRATA
from .dist import MarginalSpec
from .model import PortfolioModel

ALL_METHODS = ("NV", "IS", "SIS", "QNV", "QLT", "QIS", "QSIS")
TABLE_METHODS = ("NV", "IS", "SIS", "QNV", "QLT", "QIS")


@dataclass
class RunConfig:
    portfolio: str = ""
    methods: tuple = TABLE_METHODS
    tau: tuple | None = None
    target_prob: tuple | None = None
    n: int = 100_000
    M: int = 40
    N: int | None = None
    converge_M: int = 1
    strata: tuple = DEFAULT_STRATA
    schedule: tuple = DEFAULT_SCHEDULE
    seed: int = 0
    repetitions: int = 1
    reference_n: int = 10_000_000
    out: str | None = None
    base_dir: str = field(default=".", repr=False)

    def __post_init__(self):
        self.validate()

    @property
    def points_per_replication(self) -> int:
        return self.N if self.N is not None else max(self.n // self.M, 1)

    def validate(self):
        if (self.tau is None) == (self.target_prob is None):
            raise ConfigError("run: exactly one of 'tau' and 'target_prob' must be given")
        for name in ("tau", "target_prob"):
            vals = getattr(self, name)
            if vals is not None:
                vals = tuple(float(v) for v in np.atleast_1d(vals))
                if not vals or not all(math.isfinite(v) for v in vals):
                    raise ConfigError(f"run.{name}: expected finite numbers")
                setattr(self, name, vals)
        if self.target_prob is not None and not all(0 < p <= 0.5 for p in self.target_prob):
            raise ConfigError("run.target_prob: values must lie in (0, 0.5]")
        bad = [m for m in self.methods if m not in ALL_METHODS]
        if bad or not self.methods:
            raise ConfigError(f"run.methods: unknown or empty {bad}; choose from {ALL_METHODS}")
        self.methods = tuple(self.methods)
        for name in ("n", "M", "converge_M", "repetitions", "reference_n"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"run.{name}: expected a positive integer, got {v!r}")
        if self.N is not None and (not isinstance(self.N, (int, np.integer)) or self.N < 1):
            raise ConfigError(f"run.N: expected a positive integer, got {self.N!r}")
        if (len(self.strata) != 2
                or not all(isinstance(k, (int, np.integer)) and k >= 1 for k in self.strata)):
            raise ConfigError("run.strata: expected two positive integers")
        self.strata = tuple(int(k) for k in self.strata)
        sched = tuple(float(f) for f in self.schedule)
        if not sched or min(sched) <= 0 or abs(sum(sched) - 1.0) > 1e-9:
            raise ConfigError("run.schedule: fractions must be positive and sum to 1")
        self.schedule = sched
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) \
                or self.seed < 0:
            raise ConfigError(f"run.seed: expected a non-negative integer, got {self.seed!r}")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


RUN_KEYS = {f.name for f in dataclasses.fields(RunConfig)} - {"portfolio", "base_dir"}


def bundled_portfolios() -> list[str]:
    root = resources.files("tcrisk") / "data" / "portfolios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def _read_yaml(text, where):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{where}: not valid YAML ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping at top level")
    return data


def portfolio_from_dict(data: dict, where: str = "portfolio") -> PortfolioModel:
    for key in ("weights", "correlation", "marginals", "nu"):
        if key not in data:
            raise ConfigError(f"{where}.{key}: missing")
    d = len(data["weights"])
    if len(data["marginals"]) != d:
        raise ConfigError(f"{where}.marginals: expected {d} entries, got {len(data['marginals'])}")
    for i, m in enumerate(data["marginals"]):
        try:
            MarginalSpec.from_dict(m)
        except KeyError as exc:
            raise ConfigError(f"{where}.marginals[{i}]: missing field {exc}") from None
        except (AttributeError, TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.marginals[{i}]: {exc}") from None
    try:
        corr = np.asarray(data["correlation"], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.correlation: expected a numeric matrix") from None
    if corr.shape != (d, d):
        raise ConfigError(f"{where}.correlation: expected a {d}x{d} matrix, got shape {corr.shape}")
    try:
        return PortfolioModel.from_dict(data)
    except KeyError as exc:
        raise ConfigError(f"{where}: missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise ConfigError(f"{where}: {exc}") from None


def load_portfolio(ref, base_dir=".") -> PortfolioModel:
    """Portfolio from a mapping, ``bundled:<name>`` or a file path."""
    if isinstance(ref, dict):
        return portfolio_from_dict(ref)
    if not isinstance(ref, (str, Path)):
        raise ConfigError("portfolio: expected a path, 'bundled:<name>' or a mapping")
    ref = str(ref)
    if ref.startswith("bundled:"):
        name = ref.split(":", 1)[1]
        if name not in bundled_portfolios():
            raise ConfigError(f"portfolio: no bundled portfolio {name!r}; "
                              f"available {bundled_portfolios()}")
        path = resources.files("tcrisk") / "data" / "portfolios" / f"{name}.yaml"
        return portfolio_from_dict(_read_yaml(path.read_text(), ref), ref)
    path = Path(ref)
    if not path.is_absolute():
        path = Path(base_dir) / path
    if not path.is_file():
        raise ConfigError(f"portfolio: file not found: {path}")
    return portfolio_from_dict(_read_yaml(path.read_text(), str(path)), str(path))


def dump_portfolio(model: PortfolioModel) -> str:
    return yaml.safe_dump(model.to_dict(), sort_keys=False, default_flow_style=None)


def parse_config(data: dict, base_dir=".") -> tuple[RunConfig, PortfolioModel]:
    if "portfolio" not in data:
        raise ConfigError("portfolio: missing")
    unknown = set(data) - {"portfolio", "run"}
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown top-level section")
    run = data.get("run") or {}
    if not isinstance(run, dict):
        raise ConfigError("run: expected a mapping")
    unknown = set(run) - RUN_KEYS
    if unknown:
        raise ConfigError(f"run.{sorted(unknown)[0]}: unknown field")
    kw = dict(run)
    for key in ("methods", "strata", "schedule"):
        if key in kw:
            if not isinstance(kw[key], (list, tuple)):
                raise ConfigError(f"run.{key}: expected a list")
            kw[key] = tuple(kw[key])
    model = load_portfolio(data["portfolio"], base_dir)
    ref = data["portfolio"]
    cfg = RunConfig(portfolio=ref if isinstance(ref, str) else "<inline>",
                    base_dir=str(base_dir), **kw)
    return cfg, model


def load_config(path) -> tuple[RunConfig, PortfolioModel]:
    """Read, validate and default-fill a YAML run configuration."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config: file not found: {path}")
    return parse_config(_read_yaml(path.read_text(), str(path)), path.parent)
