"""Scenario configuration: everything a reproducible run is derived from.

A ScenarioConfig pins the environment (fleet size, horizon, traffic,
price interval, spectrum statistics) plus the control epsilon and the
base seed. Policies are configured separately; the same scenario is
shared by every policy under comparison so their traces match.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

from .env import to_microcents, unit_prices
from .errors import ConfigurationError

ARRIVAL_LAWS = ("deterministic", "poisson")


@dataclass(frozen=True)
class ScenarioConfig:
    """Immutable description of one simulated deployment.

    Prices are quoted in cents per packet; ``unit_prices`` scales them to
    transmission units internally. ``unit_size_packets`` defaults to the
    mean arrival rate so one unit carries one slot's traffic;
    ``arrival_bound`` (packets per slot, Poisson law only) defaults to four
    times the mean; ``epsilon`` defaults to the mean arrival rate. Defaults
    are resolved at construction, so every field reads as a concrete value
    afterwards.
    """

    k_concentrators: int = 60
    horizon: int = 10_000
    mean_arrival: int = 5
    unit_size_packets: int | None = None
    price_low_cents: float = 0.1
    price_high_cents: float = 1.0
    reduced_fraction: float = 0.5
    arrival_law: str = "deterministic"
    arrival_bound: int | None = None
    epsilon: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.unit_size_packets is None:
            object.__setattr__(
                self, "unit_size_packets", max(1, int(self.mean_arrival))
            )
        if self.arrival_bound is None:
            object.__setattr__(
                self, "arrival_bound", max(1, 4 * int(self.mean_arrival))
            )
        if self.epsilon is None:
            object.__setattr__(
                self,
                "epsilon",
                float(self.mean_arrival) if self.mean_arrival > 0 else 1.0,
            )

    def validate(self) -> None:
        if self.k_concentrators < 1:
            raise ConfigurationError("need at least one concentrator")
        if self.horizon < 2:
            raise ConfigurationError("horizon must span at least two slots")
        if self.mean_arrival < 0:
            raise ConfigurationError("mean arrival rate cannot be negative")
        if self.unit_size_packets < 1:
            raise ConfigurationError("unit size must be at least one packet")
        if not 0 < self.price_low_cents < self.price_high_cents:
            raise ConfigurationError(
                "per-packet price interval must satisfy 0 < low < high, got "
                f"[{self.price_low_cents}, {self.price_high_cents}]"
            )
        if not 0.0 < self.reduced_fraction < 1.0:
            raise ConfigurationError("reduced_fraction must lie strictly in (0, 1)")
        if self.arrival_law not in ARRIVAL_LAWS:
            raise ConfigurationError(
                f"arrival_law must be one of {ARRIVAL_LAWS}, got {self.arrival_law!r}"
            )
        if self.arrival_bound < max(1, self.mean_arrival):
            raise ConfigurationError(
                "arrival_bound must be at least max(1, mean_arrival)"
            )
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if self.seed < 0:
            raise ConfigurationError("seed must be nonnegative")
        # surface degenerate unit pricing at validation time, not mid-run
        unit_prices(
            to_microcents(self.price_low_cents),
            self.unit_size_packets,
            self.reduced_fraction,
        )

    def effective_arrival_bound(self) -> int:
        """Hard cap on packets arriving in one slot."""
        if self.arrival_law == "deterministic":
            return int(self.mean_arrival)
        return int(self.arrival_bound)

    def env_fields(self) -> dict:
        """The fields that determine trace content, in canonical form."""
        return {
            "arrival_bound": int(self.arrival_bound),
            "arrival_law": self.arrival_law,
            "horizon": int(self.horizon),
            "k_concentrators": int(self.k_concentrators),
            "mean_arrival": int(self.mean_arrival),
            "price_high_microcents": to_microcents(self.price_high_cents),
            "price_low_microcents": to_microcents(self.price_low_cents),
            "reduced_fraction": float(self.reduced_fraction),
            "unit_size_packets": int(self.unit_size_packets),
        }

    def env_digest(self) -> str:
        """Stable 16-hex-digit fingerprint of the environment fields.

        Excludes epsilon and seed: the same digest means two traces drawn
        with equal seeds are byte-identical.
        """
        canon = json.dumps(self.env_fields(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("ascii")).hexdigest()[:16]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("scenario config must be a JSON object")
        try:
            cfg = cls(**_coerce_fields(data))
        except TypeError as exc:
            raise ConfigurationError(f"bad scenario config: {exc}") from exc
        cfg.validate()
        return cfg

    def with_overrides(self, **changes) -> "ScenarioConfig":
        """Copy with some fields replaced; unknown names raise."""
        return dataclasses.replace(self, **_coerce_fields(changes))


_INT_FIELDS = frozenset(
    {
        "k_concentrators",
        "horizon",
        "mean_arrival",
        "unit_size_packets",
        "arrival_bound",
        "seed",
    }
)
_FLOAT_FIELDS = frozenset(
    {"price_low_cents", "price_high_cents", "reduced_fraction", "epsilon"}
)


def _coerce_fields(data: dict) -> dict:
    """Normalize JSON-sourced values to field types; unknown keys raise."""
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown scenario fields: {', '.join(unknown)}")
    out = {}
    for key, value in data.items():
        if value is None or isinstance(value, str):
            out[key] = value
            continue
        if isinstance(value, bool):
            raise ConfigurationError(f"scenario field {key} cannot be a boolean")
        if key in _INT_FIELDS:
            if isinstance(value, float) and not value.is_integer():
                raise ConfigurationError(f"scenario field {key} must be an integer")
            out[key] = int(value)
        elif key in _FLOAT_FIELDS:
            out[key] = float(value)
        else:
            out[key] = value
    return out
