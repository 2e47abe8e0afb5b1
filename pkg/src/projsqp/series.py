"""Certified caps on the geometric weight sums behind momentum updates.

A momentum recursion weights the step from i iterations ago by decay^i, so
its analysis leans on finite sums of decay^k, decay^k * k, decay^k * k^2
and decay^k * sqrt(k+1), decay^k * sqrt(k) * (k+1) staying below closed-form
caps.  These helpers verify that numerically by direct term-by-term
summation.

The first family is subtle: the caps are exactly the infinite-series limits,
so at K = 1e5 the true slack is astronomically small (order decay^K) and
float64 summation can land exactly on the cap.  Certification therefore
sums with upward-directed rounding at a precision deep enough that the
computed upper bound on the sum still falls strictly below a downward-rounded
cap; for decay = 0.5 every term is an exact dyadic and blocks of terms are
accumulated in exact integer arithmetic first.  The square-root family has
order-one slack and plain float64 suffices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import gmpy2
import numpy as np
from gmpy2 import mpfr


@dataclass(frozen=True)
class SeriesCheck:
    """Outcome of one family of sum-vs-cap comparisons.

    `strict` records the comparison at full working precision; the float64
    projections in `sums`/`caps` are for display and can coincide when the
    true slack is below one ulp.
    """

    decay: float
    terms: int
    strict: bool
    sums: tuple[float, ...]        # upper bounds on the true sums
    caps: tuple[float, ...]        # lower bounds on the true caps
    log10_slacks: tuple[float, ...]


def _required_precision(decay: float, terms: int) -> int:
    # Rounding error of `terms` directed additions must stay below the true
    # slack, which is of order decay^terms.
    return int(terms * math.log2(1.0 / decay)) + 80


def _dyadic_blocks(terms: int, block: int = 64):
    """Exact integer partial sums of 2^-k, k 2^-k, k^2 2^-k over blocks.

    Within a block the terms share a power-of-two scale, so the three sums
    are exact machine integers; only the fold into the big accumulator
    rounds (upward, in the caller's context).
    """
    for k0 in range(0, terms, block):
        width = min(block, terms - k0)
        i0 = i1 = i2 = 0
        for j in range(width):
            w = 1 << (width - 1 - j)
            k = k0 + j
            i0 += w
            i1 += w * k
            i2 += w * k * k
        yield i0, i1, i2, k0 + width - 1


def check_geometric_sums(decay: float, terms: int = 100_000) -> SeriesCheck:
    """Verify sum(decay^k), sum(decay^k k), sum(decay^k k^2) over k < terms
    fall strictly below 1/(1-d), d/(1-d)^2, d(1+d)/(1-d)^3."""
    if not 0.0 < decay < 1.0:
        raise ValueError(f"decay must be in (0, 1), got {decay}")
    prec = _required_precision(decay, terms)
    saved = gmpy2.get_context()
    try:
        gmpy2.set_context(gmpy2.context(precision=prec, round=gmpy2.RoundUp))
        s0 = mpfr(0)
        s1 = mpfr(0)
        s2 = mpfr(0)
        if decay == 0.5:
            two = mpfr(2)
            for i0, i1, i2, e in _dyadic_blocks(terms):
                scale = two ** (-e)
                s0 += i0 * scale
                s1 += i1 * scale
                s2 += i2 * scale
        else:
            d = mpfr(decay)
            p = mpfr(1)
            for k in range(terms):
                if k:
                    p = p * d
                s0 += p
                pk = p * k
                s1 += pk
                s2 += pk * k
        gmpy2.set_context(gmpy2.context(precision=prec, round=gmpy2.RoundDown))
        d = mpfr(decay)
        one = mpfr(1)
        caps = (
            one / (one - d),
            d / ((one - d) * (one - d)),
            d * (one + d) / ((one - d) ** 3),
        )
        sums = (s0, s1, s2)
        slacks = tuple(
            float(gmpy2.log10(c - s)) if c > s else -math.inf
            for s, c in zip(sums, caps)
        )
        return SeriesCheck(
            decay, terms,
            strict=all(s < c for s, c in zip(sums, caps)),
            sums=tuple(float(s) for s in sums),
            caps=tuple(float(c) for c in caps),
            log10_slacks=slacks,
        )
    finally:
        gmpy2.set_context(saved)


def check_sqrt_weighted_sums(decay: float, terms: int = 100_000) -> SeriesCheck:
    """Verify sum(decay^j sqrt(j+1)) and sum(decay^j sqrt(j) (j+1)) over
    j < terms fall strictly below 2/(1-d)^1.5 and 4d/(1-d)^2.5.

    These caps sit well above the infinite-series limits, so float64 with
    a small safety margin for rounding is already a certification.
    """
    if not 0.0 < decay < 1.0:
        raise ValueError(f"decay must be in (0, 1), got {decay}")
    j = np.arange(terms, dtype=float)
    powers = np.concatenate([[1.0], np.cumprod(np.full(terms - 1, decay))])
    t1 = powers * np.sqrt(j + 1.0)
    t2 = powers * np.sqrt(j) * (j + 1.0)
    s1 = math.fsum(t1)
    s2 = math.fsum(t2)
    # float64 accumulation error margin (generous: ~1 ulp per magnitude level)
    margin1 = 1e-12 * terms * max(1.0, s1)
    margin2 = 1e-12 * terms * max(1.0, s2)
    caps = (2.0 / (1.0 - decay) ** 1.5, 4.0 * decay / (1.0 - decay) ** 2.5)
    sums = (s1 + margin1, s2 + margin2)
    slacks = tuple(
        math.log10(c - s) if c > s else -math.inf for s, c in zip(sums, caps)
    )
    return SeriesCheck(decay, terms, strict=all(s < c for s, c in zip(sums, caps)),
                       sums=sums, caps=caps, log10_slacks=slacks)
