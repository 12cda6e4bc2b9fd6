"""Statistical battery: proportions, exact tests, multiplicity correction.

Two-proportion z-tests carry their p-values in log10 space so that
extreme tails (z around 30 gives p near 1e-187) survive without
underflow; beyond the reach of math.erfc the tail is evaluated with the
asymptotic continued expansion of erfc.  Fisher exact p-values are
two-sided by the probability-mass convention: every table with the same
margins whose probability does not exceed the observed one (with a tiny
relative slack for floating-point ties) contributes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import InputError

_LN10 = math.log(10.0)
_SQRT2 = math.sqrt(2.0)
_LOG_SLACK = math.log1p(1e-7)  # tie tolerance for the two-sided Fisher sum
_ASYMPTOTIC_Z = 8.0

RATIO_UNDEFINED = "-"  # printed when the reference proportion is zero


def log10_erfc(x: float) -> float:
    """log10(erfc(x)) for x >= 0, stable far into the tail."""
    if x < _ASYMPTOTIC_Z / _SQRT2:
        return math.log10(math.erfc(x))
    # erfc(x) ~ exp(-x^2) / (x sqrt(pi)) * sum_n (-1)^n (2n-1)!! / (2x^2)^n.
    # The series is asymptotic: truncate just before the terms stop
    # shrinking; the error is bounded by the first omitted term.
    inv = 1.0 / (2.0 * x * x)
    term = 1.0
    total = 1.0
    n = 0
    while True:
        n += 1
        next_term = -term * (2 * n - 1) * inv
        if abs(next_term) >= abs(term):
            break
        term = next_term
        total += term
        if abs(term) < 1e-18 * abs(total):
            break
    ln_erfc = -x * x - math.log(x * math.sqrt(math.pi)) + math.log(total)
    return ln_erfc / _LN10


def two_tailed_log10_p(z: float) -> float:
    """log10 of the two-tailed normal p-value for statistic z."""
    return log10_erfc(abs(z) / _SQRT2)


@dataclass(frozen=True)
class ProportionTest:
    p1: float
    p2: float
    ratio: float | None  # None when p2 == 0 (fold change undefined)
    z: float
    log10_p: float

    @property
    def p_value(self) -> float:
        return 10.0 ** self.log10_p


def proportion_test(k1: int, n1: int, k2: int, n2: int) -> ProportionTest:
    """Pooled two-proportion z-test, two-tailed, no continuity correction."""
    if n1 <= 0 or n2 <= 0:
        raise InputError("cohort sizes must be positive")
    if not (0 <= k1 <= n1 and 0 <= k2 <= n2):
        raise InputError(f"counts out of range: {k1}/{n1}, {k2}/{n2}")
    p1, p2 = k1 / n1, k2 / n2
    ratio = (p1 / p2) if p2 > 0 else None
    pooled = (k1 + k2) / (n1 + n2)
    if pooled == 0.0 or pooled == 1.0:
        return ProportionTest(p1, p2, ratio, 0.0, 0.0)
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2))
    z = (p1 - p2) / se
    log10_p = two_tailed_log10_p(z) if z != 0.0 else 0.0
    return ProportionTest(p1, p2, ratio, z, log10_p)


# ---------------------------------------------------------------------------
# Fisher exact test

_logfact: list[float] = [0.0]


def _log_factorial(n: int) -> float:
    table = _logfact
    while len(table) <= n:
        table.append(math.lgamma(len(table) + 1))
    return table[n]


def fisher_exact_two_sided(a: int, b: int, c: int, d: int) -> float:
    """Two-sided Fisher exact p for the 2x2 table [[a, b], [c, d]]."""
    if min(a, b, c, d) < 0:
        raise InputError("contingency table entries must be non-negative")
    n = a + b + c + d
    if n == 0:
        raise InputError("contingency table is all zero")
    r1, r2, c1 = a + b, c + d, a + c
    lo = max(0, c1 - r2)
    hi = min(r1, c1)
    if lo == hi:
        return 1.0
    _log_factorial(n)
    lf = _logfact
    const = lf[r1] + lf[r2] + lf[c1] + lf[n - c1] - lf[n]
    lp_obs = const - (lf[a] + lf[r1 - a] + lf[c1 - a] + lf[r2 - c1 + a])
    cutoff = lp_obs + _LOG_SLACK

    selected: list[float] = []
    m = -math.inf
    for x in range(lo, hi + 1):
        lp = const - (lf[x] + lf[r1 - x] + lf[c1 - x] + lf[r2 - c1 + x])
        if lp <= cutoff:
            selected.append(lp)
            if lp > m:
                m = lp
    total = math.fsum(math.exp(lp - m) for lp in selected)
    return min(1.0, math.exp(m) * total)


# ---------------------------------------------------------------------------
# Benjamini-Hochberg step-up adjustment


def bh_adjust(p_values: Sequence[float], m: int | None = None) -> list[float]:
    """Step-up FDR adjustment; returns adjusted values in input order.

    ``m`` is the total number of hypotheses; it defaults to the number
    of p-values supplied and may be larger when only a subset of the
    tested family is being adjusted.
    """
    count = len(p_values)
    if count == 0:
        return []
    if m is None:
        m = count
    if m < count:
        raise InputError(f"m={m} is smaller than the number of p-values ({count})")
    for p in p_values:
        if not 0.0 < p <= 1.0:
            raise InputError(f"p-value {p!r} outside (0, 1]")
    order = sorted(range(count), key=p_values.__getitem__)
    adjusted = [0.0] * count
    running = 1.0
    for rank in range(count, 0, -1):
        idx = order[rank - 1]
        running = min(running, m * p_values[idx] / rank)
        # In real arithmetic min_{j>=rank} m*p(j)/j >= p(rank); the clamp
        # undoes the one-ulp float shortfall when m == rank.
        adjusted[idx] = max(running, p_values[idx])
    return adjusted


# ---------------------------------------------------------------------------
# Table assembly over per-group counts


@dataclass(frozen=True)
class EnrichmentRow:
    group_id: str
    k_pos: int
    k_neg: int
    n_pos: int
    n_neg: int
    p_pos: float
    p_neg: float
    ratio: float | None
    z: float
    log10_p: float

    @property
    def p_value(self) -> float:
        return 10.0 ** self.log10_p


@dataclass(frozen=True)
class DailyRow:
    group_id: str
    day: int
    k_pos: int
    k_neg: int
    pct_pos: float
    pct_neg: float
    ratio: float | None
    log10_p: float

    @property
    def p_value(self) -> float:
        return 10.0 ** self.log10_p


@dataclass(frozen=True)
class PairRow:
    group_a: str
    group_b: str
    k_pos: int
    k_neg: int
    n_pos: int
    n_neg: int
    pct_pos: float
    pct_neg: float
    ratio: float | None
    p_raw: float
    p_adjusted: float


@dataclass(frozen=True)
class StatConfig:
    window: tuple[int, int] = (-7, -1)
    m_tests: int | None = None  # BH family size; None = number of pairs tested
    ratio_undefined_marker: str = RATIO_UNDEFINED


def _ratio_sort_key(row: EnrichmentRow) -> tuple[float, str]:
    if row.ratio is None:
        # Undefined fold change (reference arm empty): above everything
        # when the study arm has signal, below when both arms are empty.
        value = math.inf if row.k_pos > 0 else -1.0
    else:
        value = row.ratio
    return (-value, row.group_id)


def enrichment_rows(
    counts: Iterable[tuple[str, int, int]], n_pos: int, n_neg: int
) -> list[EnrichmentRow]:
    """One row per group from (group_id, k_pos, k_neg) window counts.

    Rows come back sorted by descending fold change.
    """
    rows = []
    for group_id, k_pos, k_neg in counts:
        test = proportion_test(k_pos, n_pos, k_neg, n_neg)
        rows.append(
            EnrichmentRow(
                group_id=group_id,
                k_pos=k_pos,
                k_neg=k_neg,
                n_pos=n_pos,
                n_neg=n_neg,
                p_pos=test.p1,
                p_neg=test.p2,
                ratio=test.ratio,
                z=test.z,
                log10_p=test.log10_p,
            )
        )
    rows.sort(key=_ratio_sort_key)
    return rows


def daily_rows(
    counts: Iterable[tuple[str, int, int, int]], n_pos: int, n_neg: int
) -> list[DailyRow]:
    """Per-day rows from (group_id, day, k_pos, k_neg) counts."""
    rows = []
    for group_id, day, k_pos, k_neg in counts:
        test = proportion_test(k_pos, n_pos, k_neg, n_neg)
        rows.append(
            DailyRow(
                group_id=group_id,
                day=day,
                k_pos=k_pos,
                k_neg=k_neg,
                pct_pos=test.p1 * 100.0,
                pct_neg=test.p2 * 100.0,
                ratio=test.ratio,
                log10_p=test.log10_p,
            )
        )
    rows.sort(key=lambda r: (r.group_id, r.day))
    return rows


def pair_rows(
    counts: Iterable[tuple[str, str, int, int]],
    n_pos: int,
    n_neg: int,
    m_tests: int | None = None,
) -> list[PairRow]:
    """Fisher-tested pair rows with BH adjustment across all pairs.

    ``counts`` holds (group_a, group_b, k_pos, k_neg) where the k are
    patients exhibiting both phenotypes.  Pairs are canonicalized so
    group_a < group_b.  Rows come back sorted by raw p.
    """
    prepared: list[tuple[str, str, int, int]] = []
    for group_a, group_b, k_pos, k_neg in counts:
        if group_b < group_a:
            group_a, group_b = group_b, group_a
        prepared.append((group_a, group_b, k_pos, k_neg))

    raw_ps: list[float] = []
    for _a, _b, k_pos, k_neg in prepared:
        if k_pos == 0 and k_neg == 0:
            raw_ps.append(1.0)  # degenerate pair: no signal in either arm
        else:
            raw_ps.append(
                fisher_exact_two_sided(k_pos, n_pos - k_pos, k_neg, n_neg - k_neg)
            )
    adjusted = bh_adjust(raw_ps, m=m_tests) if raw_ps else []

    rows = []
    for (group_a, group_b, k_pos, k_neg), p_raw, p_adj in zip(prepared, raw_ps, adjusted):
        p_pos, p_neg = k_pos / n_pos, k_neg / n_neg
        rows.append(
            PairRow(
                group_a=group_a,
                group_b=group_b,
                k_pos=k_pos,
                k_neg=k_neg,
                n_pos=n_pos,
                n_neg=n_neg,
                pct_pos=p_pos * 100.0,
                pct_neg=p_neg * 100.0,
                ratio=(p_pos / p_neg) if p_neg > 0 else None,
                p_raw=p_raw,
                p_adjusted=p_adj,
            )
        )
    rows.sort(key=lambda r: (r.p_raw, r.group_a, r.group_b))
    return rows


# ---------------------------------------------------------------------------
# Number rendering shared by every exported table


def format_p(log10_p: float) -> str:
    """Scientific notation with two mantissa decimals, e.g. 2.95E-187."""
    if log10_p >= 0.0:
        return "1.00E+00"
    exponent = math.floor(log10_p)
    mantissa = 10.0 ** (log10_p - exponent)
    if round(mantissa, 2) >= 10.0:
        mantissa /= 10.0
        exponent += 1
    return f"{mantissa:.2f}E{exponent:+03d}"


def format_p_value(p: float) -> str:
    if p <= 0.0:
        raise InputError("p-value must be positive")
    return format_p(math.log10(p)) if p < 1.0 else "1.00E+00"


def format_ratio(ratio: float | None, marker: str = RATIO_UNDEFINED) -> str:
    return marker if ratio is None else f"{ratio:.2f}"


def format_fraction(value: float) -> str:
    return f"{value:.2f}"
