"""Exact arithmetic for rates and unit conversions.

Inputs are parsed as decimals and carried as fractions, so products such
as 10^23 * 10^-15 come out exact rather than as nearby floats.
"""

from decimal import Decimal, InvalidOperation, localcontext
from fractions import Fraction

# reference scales used when quoting desk-scale parameters in physical units
PHYSICAL = {
    "sigma_m": Fraction(1, 10**7),           # collapse width, metres
    "lambda_per_s": Fraction(1, 10**15),     # collapse rate per particle, 1/s
    "particles_macroscopic": Fraction(10**23),
}


def exact(value):
    """Parse ``value`` (str, int, float, Fraction) into an exact Fraction.

    Strings may also name one of the ``PHYSICAL`` reference scales.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str) and value.strip() in PHYSICAL:
        return PHYSICAL[value.strip()]
    try:
        return Fraction(Decimal(str(value).strip()))
    except (InvalidOperation, ValueError, OverflowError):
        raise ValueError(f"{value!r} is not a finite decimal number or a known scale") from None


def flash_rate(particles, lam):
    """Total collapse (flash) rate N * lambda."""
    return exact(particles) * exact(lam)


def mean_waiting_time(particles, lam):
    return 1 / flash_rate(particles, lam)


def to_simulation_units(value, scale):
    """Express a physical quantity in units of ``scale`` (same dimension)."""
    return exact(value) / exact(scale)


def format_exact(q):
    """Plain integer when integral, else a decimal string if it terminates."""
    q = exact(q)
    if q.denominator == 1:
        return str(q.numerator)
    d = q.denominator
    for p in (2, 5):
        while d % p == 0:
            d //= p
    if d == 1:
        with localcontext() as ctx:
            ctx.prec = 200
            return format((Decimal(q.numerator) / Decimal(q.denominator)).normalize(), "E")
    return f"{q.numerator}/{q.denominator}"
