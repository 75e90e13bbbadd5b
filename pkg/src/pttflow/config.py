"""Run configuration: key=value files plus command-line overrides.

The accepted keys mirror the ScenarioConfig fields.  The stress slip
parameter is spelled ``lambda`` in config files (the conventional name
for it) but stored as ``slip`` on the dataclass since ``lambda`` is a
Python keyword.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .model import ModelParams

SCENARIOS = ("blowup", "global", "linear", "verify")

_INT_KEYS = frozenset({"n", "seed"})
_STR_KEYS = frozenset({"scenario", "output_dir"})
_FLOAT_KEYS = frozenset(
    {
        "dt",
        "t_max",
        "delta0",
        "c0",
        "eps_tilde0",
        "eps",
        "a",
        "b",
        "lambda",
        "mu",
        "mu1",
        "mu2",
        "record_interval",
    }
)
_ALL_KEYS = _INT_KEYS | _STR_KEYS | _FLOAT_KEYS
_ATTR_FOR_KEY = {"lambda": "slip"}
_KEY_FOR_ATTR = {"slip": "lambda"}


class ConfigError(ValueError):
    """Malformed or invalid configuration; carries the key and line."""

    def __init__(self, message, key=None, line=None):
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if key is not None:
            prefix += f"key {key!r}: "
        super().__init__(prefix + message)
        self.message = message
        self.key = key
        self.line = line


@dataclass
class ScenarioConfig:
    """Everything one scenario run needs, with documented defaults."""

    scenario: str
    n: int = 32
    dt: float = 1e-3
    t_max: float = 1.0
    delta0: float = 0.01
    c0: Optional[float] = None
    eps_tilde0: float = 1.0
    eps: float = 0.1
    a: float = 0.0
    b: float = 1.0
    slip: float = 0.0
    mu: float = 1.0
    mu1: float = 1.0
    mu2: float = 1.0
    seed: int = 0
    record_interval: float = 0.05
    output_dir: str = "out"

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(
                f"must be one of {', '.join(SCENARIOS)}, got {self.scenario!r}",
                key="scenario",
            )
        if self.n < 8 or self.n % 2:
            raise ConfigError(f"grid size must be even and at least 8, got {self.n}", key="n")
        if self.dt <= 0:
            raise ConfigError(f"must be positive, got {self.dt}", key="dt")
        if self.t_max < 0:
            raise ConfigError(f"must be nonnegative, got {self.t_max}", key="t_max")
        if self.delta0 < 0:
            raise ConfigError(f"must be nonnegative, got {self.delta0}", key="delta0")
        if self.scenario == "global" and self.delta0 == 0:
            raise ConfigError("global scenario needs delta0 > 0", key="delta0")
        if self.c0 is not None:
            if self.scenario == "global" and self.c0 <= 0:
                raise ConfigError("global scenario needs c0 > 0", key="c0")
            if self.scenario == "blowup" and self.c0 >= 0:
                raise ConfigError("blowup scenario needs c0 < 0", key="c0")
        if not 0.0 < self.eps < 3.0:
            raise ConfigError(f"must lie in (0, 3), got {self.eps}", key="eps")
        if abs(self.slip) > 1.0:
            raise ConfigError(f"must lie in [-1, 1], got {self.slip}", key="lambda")
        if self.mu <= 0:
            raise ConfigError(f"must be positive, got {self.mu}", key="mu")
        if self.b < 0:
            raise ConfigError(f"must be nonnegative, got {self.b}", key="b")
        if self.seed < 0:
            raise ConfigError(f"must be nonnegative, got {self.seed}", key="seed")
        if self.record_interval <= 0:
            raise ConfigError(f"must be positive, got {self.record_interval}", key="record_interval")
        if not self.output_dir:
            raise ConfigError("must not be empty", key="output_dir")
        return self

    def model_params(self):
        """The physical constants as a ModelParams."""
        return ModelParams(
            a=self.a, b=self.b, slip=self.slip, mu=self.mu, mu1=self.mu1, mu2=self.mu2
        )

    def echo_items(self):
        """(config key, value) pairs in field order, for provenance headers.

        Unset optional keys (c0 left at None) are omitted so the echo
        round-trips through parse_config.  output_dir is omitted too: it
        says where artifacts land, not what was computed, and including it
        would make otherwise identical runs produce different file bytes.
        """
        items = []
        for name in self.__dataclass_fields__:
            if name == "output_dir":
                continue
            value = getattr(self, name)
            if value is None:
                continue
            items.append((_KEY_FOR_ATTR.get(name, name), value))
        return items


def _convert(key, value, lineno=None):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _STR_KEYS:
            return value
        return float(value)
    except ValueError:
        raise ConfigError(f"cannot parse value {value!r}", key=key, line=lineno) from None


def _parse_items(text):
    items = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {line!r}", line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _ALL_KEYS:
            raise ConfigError("unknown key", key=key, line=lineno)
        if not value:
            raise ConfigError("empty value", key=key, line=lineno)
        items.append((lineno, key, value))
    return items


def build_config(text="", overrides=None):
    """Assemble a validated ScenarioConfig from file text plus overrides.

    ``overrides`` maps dataclass field names to already-typed values
    (the command line supplies these); they win over the file.
    """
    values = {}
    lines = {}
    for lineno, key, value in _parse_items(text):
        attr = _ATTR_FOR_KEY.get(key, key)
        values[attr] = _convert(key, value, lineno)
        lines[key] = lineno
    if overrides:
        for name, value in overrides.items():
            if value is not None:
                values[name] = value
                lines.pop(_KEY_FOR_ATTR.get(name, name), None)
    if "scenario" not in values:
        raise ConfigError("scenario is required", key="scenario")
    try:
        return ScenarioConfig(**values).validate()
    except ConfigError as err:
        # point invariant violations back at the file line that set the key
        if err.line is None and err.key in lines:
            raise ConfigError(err.message, key=err.key, line=lines[err.key]) from None
        raise


def parse_config(text):
    """Parse key=value text (with '#' comments) into a ScenarioConfig."""
    return build_config(text)
