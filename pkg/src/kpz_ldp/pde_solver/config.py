"""Scheme parameters for the physical-coordinate solver and their text format."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from ..errors import ConfigurationError


@dataclass(frozen=True)
class SchemeParams:
    """Uniform-grid scheme settings.

    ``theta`` is the implicitness of the heat half-steps (0.5 is
    Crank-Nicolson). ``smoothing_steps`` full steps at the end of the run
    use backward Euler so that the adjoint, which starts from a discrete
    delta at the final time, is damped.
    """

    nt: int = 1025
    nx: int = 1281
    L: float = 10.0
    t0: float = 1.0 / 64.0
    theta: float = 0.5
    smoothing_steps: int = 2

    def __post_init__(self):
        if self.nt < 8:
            raise ConfigurationError("nt must be at least 8")
        if self.nx < 5 or self.nx % 2 == 0:
            raise ConfigurationError("nx must be odd (x = 0 is a node) and at least 5")
        if not self.L > 0:
            raise ConfigurationError("L must be positive")
        if not 0.0 < self.t0 <= 0.1:
            raise ConfigurationError("t0 must lie in (0, 0.1]")
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigurationError("theta must lie in [0, 1]")
        if self.smoothing_steps < 0:
            raise ConfigurationError("smoothing_steps must be nonnegative")

    @property
    def dt(self) -> float:
        return 2.0 / (self.nt - 1)

    @property
    def dx(self) -> float:
        return 2.0 * self.L / (self.nx - 1)

    def replace(self, **changes) -> "SchemeParams":
        data = asdict(self)
        data.update(changes)
        return SchemeParams(**data)


_CASTS = {f.name: f.type for f in fields(SchemeParams)}
_TYPES = {"int": int, "float": float}


def parse_key_values(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {number}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"line {number}: empty key")
        out[key] = value
    return out


def params_from_mapping(values: dict, base: SchemeParams | None = None) -> SchemeParams:
    base = base or SchemeParams()
    changes = {}
    for key, value in values.items():
        if key not in _CASTS:
            continue
        cast = _TYPES[_CASTS[key]] if isinstance(_CASTS[key], str) else _CASTS[key]
        try:
            number = float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad value for {key}: {value!r}") from exc
        if cast is int and not number.is_integer():
            raise ConfigurationError(f"{key} must be an integer, got {value!r}")
        changes[key] = int(number) if cast is int else number
    return base.replace(**changes)


def load_params(path) -> SchemeParams:
    return params_from_mapping(parse_key_values(Path(path).read_text()))
