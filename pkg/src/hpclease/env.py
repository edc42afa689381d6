"""Environment traces: spectrum availability, leasing prices, packet arrivals.

A trace fixes everything random about one simulated scenario so that every
policy can be replayed against identical conditions. Per slot it carries

* one free-spectrum level per concentrator (none / reduced / full),
* one base-station-wide leasing price, drawn per packet and expanded to
  full-size and reduced-size data-unit prices,
* one arrival batch per concentrator.

All currency is stored as integer micro-cents (1 cent = 1_000_000 micro-cents)
so accumulated costs never drift. Traces serialize to a versioned, seeded,
self-describing byte format; identical (config, seed) pairs produce
byte-identical traces.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigurationError, TraceFormatError

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, types only
    from .config import ScenarioConfig

MICROCENTS_PER_CENT = 1_000_000
MICROCENTS_PER_DOLLAR = 100 * MICROCENTS_PER_CENT

TRACE_FORMAT = "hpclease.trace"
TRACE_VERSION = 1

# ceil(reduced_fraction * unit_size) is evaluated with this slack so that a
# float product like 0.3 * 10 == 2.9999999999999996 still counts as 3.
_CEIL_GUARD = 1e-9


def to_microcents(cents: float) -> int:
    """Convert a price in dollar cents to integer micro-cents."""
    return round(cents * MICROCENTS_PER_CENT)


def to_cents(microcents: int) -> float:
    return microcents / MICROCENTS_PER_CENT


def to_dollars(microcents: int) -> float:
    return microcents / MICROCENTS_PER_DOLLAR


class SpectrumLevel(IntEnum):
    """Free spectrum available to one concentrator in one slot."""

    NONE = 0
    REDUCED = 1
    FULL = 2


@dataclass(frozen=True)
class PriceSample:
    """Leasing prices for one slot, per transmitted data unit.

    full_microcents is the price of a full-size unit, reduced_microcents the
    price of a reduced-size unit. A valid sample always satisfies
    full > reduced > 0.
    """

    full_microcents: int
    reduced_microcents: int

    def __post_init__(self) -> None:
        if not (self.full_microcents > self.reduced_microcents > 0):
            raise ConfigurationError(
                "price sample requires full > reduced > 0, got "
                f"full={self.full_microcents} reduced={self.reduced_microcents}"
            )

    @property
    def full_cents(self) -> float:
        return to_cents(self.full_microcents)

    @property
    def reduced_cents(self) -> float:
        return to_cents(self.reduced_microcents)


@dataclass(frozen=True)
class ArrivalBatch:
    """Packets arriving at one concentrator at the end of one slot."""

    slot: int
    packets: int

    def __post_init__(self) -> None:
        if self.slot < 0 or self.packets < 0:
            raise ConfigurationError(
                f"arrival batch requires slot >= 0 and packets >= 0, "
                f"got slot={self.slot} packets={self.packets}"
            )


def reduced_unit_packets(unit_size_packets: int, reduced_fraction: float) -> int:
    """Packet count of a reduced-size unit: ceil(fraction * unit_size)."""
    return math.ceil(reduced_fraction * unit_size_packets - _CEIL_GUARD)


def unit_prices(
    base_packet_microcents: int,
    unit_size_packets: int,
    reduced_fraction: float,
) -> PriceSample:
    """Expand a per-packet price into full and reduced unit prices.

    The full unit carries ``unit_size_packets`` packets, the reduced unit
    ``ceil(reduced_fraction * unit_size_packets)``. Raises ConfigurationError
    when the reduced unit would not be strictly cheaper than the full one
    (degenerate unit size).
    """
    if base_packet_microcents <= 0:
        raise ConfigurationError("per-packet price must be positive")
    if unit_size_packets < 1:
        raise ConfigurationError("unit size must be at least one packet")
    if not 0.0 < reduced_fraction < 1.0:
        raise ConfigurationError("reduced fraction must lie strictly in (0, 1)")
    reduced_packets = reduced_unit_packets(unit_size_packets, reduced_fraction)
    full = base_packet_microcents * unit_size_packets
    reduced = base_packet_microcents * reduced_packets
    if reduced >= full:
        raise ConfigurationError(
            f"degenerate unit size {unit_size_packets}: reduced unit of "
            f"{reduced_packets} packets is not cheaper than the full unit"
        )
    return PriceSample(full_microcents=full, reduced_microcents=reduced)


@dataclass(eq=False)
class Trace:
    """One fully materialized scenario.

    Arrays are indexed [concentrator, slot] or [slot]:

    * levels: uint8 SpectrumLevel codes, shape (k, horizon)
    * arrivals: int32 packet counts, shape (k, horizon)
    * price_packet: int64 per-packet micro-cents, shape (horizon,)
    * price_full / price_reduced: int64 per-unit micro-cents, shape (horizon,)
    """

    seed: int
    config_digest: str
    levels: np.ndarray
    arrivals: np.ndarray
    price_packet: np.ndarray
    price_full: np.ndarray
    price_reduced: np.ndarray

    @property
    def k(self) -> int:
        return int(self.levels.shape[0])

    @property
    def horizon(self) -> int:
        return int(self.levels.shape[1])

    def price_sample(self, slot: int) -> PriceSample:
        return PriceSample(
            full_microcents=int(self.price_full[slot]),
            reduced_microcents=int(self.price_reduced[slot]),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.config_digest == other.config_digest
            and np.array_equal(self.levels, other.levels)
            and np.array_equal(self.arrivals, other.arrivals)
            and np.array_equal(self.price_packet, other.price_packet)
            and np.array_equal(self.price_full, other.price_full)
            and np.array_equal(self.price_reduced, other.price_reduced)
        )


def generate_trace(config: "ScenarioConfig", seed: int) -> Trace:
    """Draw a trace for ``config`` from the deterministic stream of ``seed``.

    Draw order is fixed (levels, packet prices, arrivals) so identical inputs
    yield byte-identical traces. Spectrum levels are equiprobable over the
    three states per concentrator per slot. The per-packet price is uniform
    over the configured closed interval, one draw per slot shared by all
    concentrators. Arrivals follow the configured law: a constant
    ``mean_arrival`` per slot, or Poisson(``mean_arrival``) clipped at
    ``arrival_bound``.
    """
    config.validate()
    k = config.k_concentrators
    horizon = config.horizon
    lo = to_microcents(config.price_low_cents)
    hi = to_microcents(config.price_high_cents)
    if lo < 1 or lo >= hi:
        raise ConfigurationError(
            f"empty per-packet price interval [{config.price_low_cents}, "
            f"{config.price_high_cents}] cents"
        )
    # Fail early on unit pricing that could never be valid, independent of
    # the drawn base price.
    unit_prices(lo, config.unit_size_packets, config.reduced_fraction)

    rng = np.random.default_rng(seed)
    levels = rng.integers(0, 3, size=(k, horizon), dtype=np.uint8)
    price_packet = rng.integers(lo, hi, size=horizon, dtype=np.int64, endpoint=True)

    if config.arrival_law == "deterministic":
        arrivals = np.full((k, horizon), config.mean_arrival, dtype=np.int32)
    elif config.arrival_law == "poisson":
        bound = config.effective_arrival_bound()
        if config.mean_arrival > bound:
            raise ConfigurationError(
                f"mean arrival {config.mean_arrival} exceeds bound {bound}"
            )
        draws = rng.poisson(config.mean_arrival, size=(k, horizon))
        arrivals = np.minimum(draws, bound).astype(np.int32)
    else:  # pragma: no cover - config.validate() rejects other labels
        raise ConfigurationError(f"unknown arrival law {config.arrival_law!r}")

    reduced_packets = reduced_unit_packets(
        config.unit_size_packets, config.reduced_fraction
    )
    price_full = price_packet * config.unit_size_packets
    price_reduced = price_packet * reduced_packets

    return Trace(
        seed=seed,
        config_digest=config.env_digest(),
        levels=levels,
        arrivals=arrivals,
        price_packet=price_packet,
        price_full=price_full,
        price_reduced=price_reduced,
    )


def _encode_array(arr: np.ndarray) -> dict:
    return {
        "dtype": str(arr.dtype),
        "shape": list(arr.shape),
        "b64": base64.b64encode(np.ascontiguousarray(arr).tobytes()).decode("ascii"),
    }


def _decode_array(obj: dict, name: str) -> np.ndarray:
    try:
        raw = base64.b64decode(obj["b64"].encode("ascii"), validate=True)
        arr = np.frombuffer(raw, dtype=np.dtype(obj["dtype"]))
        return arr.reshape(obj["shape"]).copy()
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceFormatError(f"trace array {name!r} is corrupt: {exc}") from exc


def save_trace(trace: Trace) -> bytes:
    """Serialize a trace to its canonical versioned byte form."""
    envelope = {
        "format": TRACE_FORMAT,
        "version": TRACE_VERSION,
        "seed": trace.seed,
        "config_digest": trace.config_digest,
        "k": trace.k,
        "horizon": trace.horizon,
        "arrays": {
            "levels": _encode_array(trace.levels),
            "arrivals": _encode_array(trace.arrivals),
            "price_packet": _encode_array(trace.price_packet),
            "price_full": _encode_array(trace.price_full),
            "price_reduced": _encode_array(trace.price_reduced),
        },
    }
    return json.dumps(envelope, sort_keys=True, separators=(",", ":")).encode("utf-8")


def load_trace(data: bytes) -> Trace:
    """Parse bytes produced by save_trace. Raises TraceFormatError on damage."""
    try:
        envelope = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TraceFormatError(f"not a trace file: {exc}") from exc
    if not isinstance(envelope, dict) or envelope.get("format") != TRACE_FORMAT:
        raise TraceFormatError("not a trace file: missing format marker")
    if envelope.get("version") != TRACE_VERSION:
        raise TraceFormatError(
            f"unsupported trace version {envelope.get('version')!r}, "
            f"expected {TRACE_VERSION}"
        )
    try:
        arrays = envelope["arrays"]
        trace = Trace(
            seed=int(envelope["seed"]),
            config_digest=str(envelope["config_digest"]),
            levels=_decode_array(arrays["levels"], "levels"),
            arrivals=_decode_array(arrays["arrivals"], "arrivals"),
            price_packet=_decode_array(arrays["price_packet"], "price_packet"),
            price_full=_decode_array(arrays["price_full"], "price_full"),
            price_reduced=_decode_array(arrays["price_reduced"], "price_reduced"),
        )
    except (KeyError, TypeError) as exc:
        raise TraceFormatError(f"trace file is truncated or corrupt: {exc}") from exc
    _validate_trace_shape(trace, envelope)
    return trace


def _validate_trace_shape(trace: Trace, envelope: dict) -> None:
    k = envelope.get("k")
    horizon = envelope.get("horizon")
    if trace.levels.shape != (k, horizon) or trace.arrivals.shape != (k, horizon):
        raise TraceFormatError("trace array shapes disagree with header")
    for name in ("price_packet", "price_full", "price_reduced"):
        if getattr(trace, name).shape != (horizon,):
            raise TraceFormatError(f"trace array {name!r} has wrong shape")
    if trace.levels.size and int(trace.levels.max()) > int(SpectrumLevel.FULL):
        raise TraceFormatError("trace contains invalid spectrum level codes")
    if trace.arrivals.size and int(trace.arrivals.min()) < 0:
        raise TraceFormatError("trace contains negative arrival counts")
