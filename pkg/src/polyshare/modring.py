"""Modular arithmetic over Z_Q and fixed-point encoding with scale tracking.

Every residue carries the power of the radix by which its integer value
overstates the real number it encodes. Products add scales, sums require
equal scales, and :func:`rescale` lifts a residue to a larger scale.
"""

from __future__ import annotations

import contextlib
import contextvars
import math
from dataclasses import dataclass
from fractions import Fraction

MAX_MODULUS = 2**63


class ScaleMismatchError(ValueError):
    """Two residues with different scales were combined additively."""


class RepresentationError(ValueError):
    """A real value is not an exact multiple of the format precision or is out of range."""


@dataclass(frozen=True)
class FixedPointFormat:
    beta: int = 10
    x_post: int = 2
    u_pre: int = 4
    degree_d: int = 3

    def __post_init__(self):
        if self.beta < 2:
            raise ValueError(f"radix must be >= 2, got {self.beta}")
        if self.x_post < 0:
            raise ValueError(f"x_post must be >= 0, got {self.x_post}")
        if self.u_pre < 1:
            raise ValueError(f"u_pre must be >= 1, got {self.u_pre}")
        if self.degree_d < 1:
            raise ValueError(f"degree must be >= 1, got {self.degree_d}")
        if self.Q > MAX_MODULUS:
            raise ValueError(f"modulus {self.Q} exceeds 2**63")

    @property
    def Q(self) -> int:
        return self.beta ** (self.u_pre + (self.degree_d + 1) * self.x_post)

    @property
    def delta(self) -> Fraction:
        return Fraction(1, self.beta**self.x_post)

    @property
    def q_sat(self) -> Fraction:
        return Fraction(self.Q, 2) * self.delta

    @property
    def target_scale(self) -> int:
        """Scale of a full-degree product: one coefficient times d state factors."""
        return (self.degree_d + 1) * self.x_post


@dataclass(frozen=True, slots=True)
class ScaledResidue:
    value: int
    scale: int

    def __post_init__(self):
        if self.value < 0:
            raise ValueError(f"residue value must be non-negative, got {self.value}")
        if self.scale < 0:
            raise ValueError(f"scale must be non-negative, got {self.scale}")


# -- operation counting ----------------------------------------------------

@dataclass
class OpCounts:
    adds: int = 0
    muls: int = 0
    draws: int = 0

    def __iadd__(self, other: "OpCounts") -> "OpCounts":
        self.adds += other.adds
        self.muls += other.muls
        self.draws += other.draws
        return self


_active: contextvars.ContextVar[OpCounts | None] = contextvars.ContextVar("polyshare_ops", default=None)


@contextlib.contextmanager
def counting(counts: OpCounts):
    """Attribute every modular operation inside the block to ``counts``."""
    token = _active.set(counts)
    try:
        yield counts
    finally:
        _active.reset(token)


def tally(adds: int = 0, muls: int = 0, draws: int = 0) -> None:
    """Record operations performed outside the residue helpers (bulk loops)."""
    c = _active.get()
    if c is not None:
        c.adds += adds
        c.muls += muls
        c.draws += draws


# -- quantization and encoding ----------------------------------------------

def _exact(x) -> Fraction:
    if isinstance(x, float) and not math.isfinite(x):
        raise ValueError(f"cannot quantize non-finite value {x}")
    return Fraction(x)


def _units_bounds(fmt: FixedPointFormat) -> tuple[int, int]:
    # largest and smallest integer multiples of delta that decode unchanged
    q = fmt.Q
    return (q + 1) // 2 - 1, -(q // 2)


def quantize(x_r, fmt: FixedPointFormat) -> Fraction:
    """Round ``x_r`` to the fixed-point grid with saturation.

    Returns ``delta * floor(x_r / delta + 1/2)`` inside the range and the
    saturation values ``q_sat - delta`` / ``-q_sat`` outside it. The
    computation is exact: a float input is taken at its binary value.
    """
    x = _exact(x_r)
    hi, lo = _units_bounds(fmt)
    d = fmt.delta
    if x >= hi * d:
        return hi * d
    if x <= lo * d:
        return lo * d
    return math.floor(x / d + Fraction(1, 2)) * d


def to_units(x, fmt: FixedPointFormat) -> int:
    """Integer count of ``delta`` in ``x``; raises if ``x`` is off-grid."""
    if isinstance(x, float):
        if not math.isfinite(x):
            raise RepresentationError(f"non-finite value {x}")
        # decimal literals such as 1.70 are meant, not their binary neighbours
        x = Fraction(repr(x))
    x = Fraction(x)
    units = x * fmt.beta**fmt.x_post
    if units.denominator != 1:
        raise RepresentationError(f"{x} is not a multiple of {fmt.delta}")
    hi, lo = _units_bounds(fmt)
    if not lo <= units.numerator <= hi:
        raise RepresentationError(f"{x} exceeds the saturation bound {fmt.q_sat}")
    return units.numerator


def encode(x, fmt: FixedPointFormat) -> ScaledResidue:
    """Map a fixed-point real into Z_Q at scale ``x_post`` (radix complement for negatives)."""
    return ScaledResidue(to_units(x, fmt) % fmt.Q, fmt.x_post)


def signed(value: int, q: int) -> int:
    return value if 2 * value < q else value - q


def decode(r: ScaledResidue, fmt: FixedPointFormat) -> Fraction:
    return decode_value(r, fmt.Q, fmt.beta)


def decode_value(r: ScaledResidue, q: int, beta: int) -> Fraction:
    if r.value >= q:
        raise ValueError(f"residue {r.value} not reduced modulo {q}")
    return Fraction(signed(r.value, q), beta**r.scale)


# -- ring operations ----------------------------------------------------------

def _same_scale(a: ScaledResidue, b: ScaledResidue) -> None:
    if a.scale != b.scale:
        raise ScaleMismatchError(f"scales differ: {a.scale} vs {b.scale}; rescale first")


def mod_add(a: ScaledResidue, b: ScaledResidue, q: int) -> ScaledResidue:
    _same_scale(a, b)
    tally(adds=1)
    return ScaledResidue((a.value + b.value) % q, a.scale)


def mod_sub(a: ScaledResidue, b: ScaledResidue, q: int) -> ScaledResidue:
    _same_scale(a, b)
    tally(adds=1)
    return ScaledResidue((a.value - b.value) % q, a.scale)


def mod_mul(a: ScaledResidue, b: ScaledResidue, q: int) -> ScaledResidue:
    # Python ints are arbitrary precision; no intermediate can overflow
    tally(muls=1)
    return ScaledResidue((a.value * b.value) % q, a.scale + b.scale)


def rescale(a: ScaledResidue, target_scale: int, fmt: FixedPointFormat) -> ScaledResidue:
    if target_scale < a.scale:
        raise ValueError(f"cannot downscale from {a.scale} to {target_scale}")
    if target_scale == a.scale:
        return a
    tally(muls=1)
    factor = pow(fmt.beta, target_scale - a.scale, fmt.Q)
    return ScaledResidue((a.value * factor) % fmt.Q, target_scale)
