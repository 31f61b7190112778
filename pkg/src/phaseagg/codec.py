"""Gradient quantization and phase-shift-keying transport.

Each gradient element is clipped to [-clip, +clip], quantized to one of
`levels` integer digits, and carried as one M-PSK constellation point on
the 2**32 grid.  M is chosen with enough headroom that a modulo-2**32 sum
of every client's symbols equals the plain integer digit sum - no
wraparound - which is what lets the aggregator decode exactly.

FEC here is structural bookkeeping: the simulated channel is noiseless,
so the code must be a lossless inverse pair and its redundancy r only
feeds the reported L + r bit metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import turns
from .errors import (
    CorruptedAggregateError,
    FramingError,
    InvalidDigitError,
    InvalidGradientError,
    ResidualMaskError,
)


@dataclass(frozen=True)
class QuantizationConfig:
    """Clipping range, digit count per element, and PSK order.

    `modulus` must be a power of two (so constellation points land exactly
    on the 2**32 grid) and at least max_clients*(levels-1)+1 for the
    deployment's client count, so digit sums never wrap.
    """

    clip: float
    levels: int
    modulus: int
    stochastic: bool = False

    def __post_init__(self):
        if not np.isfinite(self.clip) or self.clip <= 0:
            raise ValueError(f"clip must be positive and finite, got {self.clip}")
        if self.levels < 2:
            raise ValueError(f"need at least 2 quantization levels, got {self.levels}")
        m = self.modulus
        if m < 2 or (m & (m - 1)) != 0 or m > turns.MODULUS:
            raise ValueError(
                f"modulus must be a power of two dividing 2**32, got {m}"
            )
        if m < self.levels:
            raise ValueError(
                f"modulus {m} cannot carry digits up to {self.levels - 1}"
            )

    @property
    def step(self) -> int:
        """Grid units per constellation point: 2**32 / M, exact."""
        return turns.MODULUS // self.modulus

    @property
    def bits_per_digit(self) -> int:
        return max(1, (self.levels - 1).bit_length())

    def payload_bits(self, dimension: int) -> int:
        """L: bits to represent one quantized gradient vector."""
        return dimension * self.bits_per_digit

    def max_clients(self) -> int:
        """Largest client count whose digit sums cannot wrap."""
        return (self.modulus - 1) // (self.levels - 1)

    def require_headroom(self, num_clients: int) -> None:
        if self.modulus < num_clients * (self.levels - 1) + 1:
            raise ValueError(
                f"modulus {self.modulus} can wrap for {num_clients} clients at "
                f"{self.levels} levels; need at least "
                f"{num_clients * (self.levels - 1) + 1}"
            )

    @classmethod
    def with_auto_modulus(cls, clip: float, levels: int, max_clients: int,
                          stochastic: bool = False) -> "QuantizationConfig":
        """Smallest power-of-two modulus that cannot wrap for max_clients."""
        needed = max_clients * (levels - 1) + 1
        if needed > turns.MODULUS:
            raise ValueError(
                f"{max_clients} clients at {levels} levels exceed the 2**32 grid"
            )
        modulus = 1 << (needed - 1).bit_length()
        return cls(clip=clip, levels=levels, modulus=modulus, stochastic=stochastic)


@dataclass(frozen=True)
class QuantizedVector:
    """Integer digits of one gradient vector, each in [0, levels)."""

    digits: np.ndarray

    @property
    def dimension(self) -> int:
        return int(self.digits.shape[0])


@dataclass(frozen=True)
class SymbolVector:
    """Unmasked constellation points, one per gradient element.

    Values are exact multiples of the constellation step.
    """

    symbols: np.ndarray
    owner: int | None = None
    iteration: int | None = None

    @property
    def dimension(self) -> int:
        return int(self.symbols.shape[0])


def quantize(gradient, cfg: QuantizationConfig,
             rng: np.random.Generator | None = None) -> QuantizedVector:
    """Clip to [-clip, clip] and map to integer digits in [0, levels).

    Deterministic rounding by default (round-half-even), so the secure and
    plaintext paths stay bit-identical.  With cfg.stochastic, rounds up
    with probability equal to the fractional part; `rng` is then required.
    """
    g = np.asarray(gradient, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise InvalidGradientError("gradient contains non-finite elements")
    scaled = (np.clip(g, -cfg.clip, cfg.clip) + cfg.clip) * (cfg.levels - 1) / (2 * cfg.clip)
    if cfg.stochastic:
        if rng is None:
            raise ValueError("stochastic rounding requires a Generator")
        floor = np.floor(scaled)
        digits = floor + (rng.random(scaled.shape) < (scaled - floor))
    else:
        digits = np.rint(scaled)
    return QuantizedVector(digits=digits.astype(np.int64))


def dequantize_mean(digit_sums, num_contributors: int,
                    cfg: QuantizationConfig) -> np.ndarray:
    """Map summed digits back to the mean gradient of the contributors."""
    if num_contributors < 1:
        raise ValueError("need at least one contributor to form a mean")
    sums = np.asarray(digit_sums, dtype=np.int64)
    hi = num_contributors * (cfg.levels - 1)
    if np.any(sums < 0) or np.any(sums > hi):
        raise CorruptedAggregateError(
            f"digit sums outside [0, {hi}] for {num_contributors} contributors"
        )
    return (sums / num_contributors) * (2 * cfg.clip / (cfg.levels - 1)) - cfg.clip


def modulate(v: QuantizedVector, cfg: QuantizationConfig,
             owner: int | None = None, iteration: int | None = None) -> SymbolVector:
    """Map digits to constellation points: digit * (2**32 / M)."""
    digits = np.asarray(v.digits if isinstance(v, QuantizedVector) else v)
    if np.any(digits < 0) or np.any(digits >= cfg.levels):
        raise InvalidDigitError(
            f"digits must lie in [0, {cfg.levels}), got range "
            f"[{digits.min()}, {digits.max()}]"
        )
    symbols = digits.astype(np.uint64) * np.uint64(cfg.step)
    return SymbolVector(symbols=symbols, owner=owner, iteration=iteration)


def decode_sum(aggregate, cfg: QuantizationConfig) -> np.ndarray:
    """Recover integer digit sums from a mask-cancelled phase aggregate.

    The aggregate must be an exact multiple of the constellation step in
    every element; anything else means mask cancellation failed (for
    example an uncorrected dropout) and raises ResidualMaskError.
    """
    agg = turns.as_vector(aggregate)
    step = np.uint64(cfg.step)
    if np.any(agg % step != 0):
        off = int(np.count_nonzero(agg % step))
        raise ResidualMaskError(
            f"{off} aggregate element(s) off the constellation grid; "
            "a mask did not cancel"
        )
    return (agg // step).astype(np.int64)


def demodulate_nearest(symbols, cfg: QuantizationConfig) -> np.ndarray:
    """Nearest constellation point for possibly off-grid phases.

    This is the receiver an attacker runs after de-rotating a message: it
    returns values in [0, M), not clamped to the digit range.
    """
    arr = turns.as_vector(symbols)
    half = np.uint64(cfg.step // 2)
    return (((arr + half) // np.uint64(cfg.step)) % np.uint64(cfg.modulus)).astype(np.int64)


# --- bit-level bookkeeping -------------------------------------------------

@dataclass(frozen=True)
class FecConfig:
    """Structural channel code: identity, or repetition by `repeat`."""

    scheme: str = "none"
    repeat: int = 1

    def __post_init__(self):
        if self.scheme not in ("none", "repetition"):
            raise ValueError(f"unknown FEC scheme {self.scheme!r}")
        if self.scheme == "repetition" and self.repeat < 2:
            raise ValueError("repetition code needs repeat >= 2")
        if self.scheme == "none" and self.repeat != 1:
            raise ValueError("scheme 'none' takes no repeat factor")

    def redundancy_bits(self, payload_bits: int) -> int:
        """r: extra bits added on top of the L payload bits."""
        if self.scheme == "none":
            return 0
        return payload_bits * (self.repeat - 1)


def digits_to_bits(digits, cfg: QuantizationConfig) -> np.ndarray:
    """Big-endian fixed-width bit expansion of a digit vector."""
    d = np.asarray(digits, dtype=np.int64)
    if np.any(d < 0) or np.any(d >= cfg.levels):
        raise InvalidDigitError("digits out of range for bit expansion")
    width = cfg.bits_per_digit
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((d[:, None] >> shifts[None, :]) & 1).astype(np.uint8).reshape(-1)


def bits_to_digits(bits, cfg: QuantizationConfig) -> np.ndarray:
    """Inverse of digits_to_bits."""
    b = np.asarray(bits, dtype=np.int64)
    width = cfg.bits_per_digit
    if b.size % width != 0:
        raise FramingError(f"bit count {b.size} is not a multiple of width {width}")
    weights = 1 << np.arange(width - 1, -1, -1, dtype=np.int64)
    return (b.reshape(-1, width) * weights).sum(axis=1)


def fec_encode(bits, cfg: FecConfig) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    if cfg.scheme == "none":
        return bits.copy()
    return np.repeat(bits, cfg.repeat)


def fec_decode(bits, cfg: FecConfig) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    if cfg.scheme == "none":
        return bits.copy()
    if bits.size % cfg.repeat != 0:
        raise FramingError(
            f"bit count {bits.size} is not a multiple of repeat {cfg.repeat}"
        )
    blocks = bits.reshape(-1, cfg.repeat)
    # Majority vote; on the noiseless channel every copy agrees anyway.
    return (blocks.sum(axis=1) * 2 > cfg.repeat).astype(np.uint8)
