"""Assembly of the three cohort statistics tables from a presence map.

Thin bridges from the presence table to the counts-level row builders in
stats; the CLI and tests that start from pre-tabulated counts call the
stats layer directly.
"""

from __future__ import annotations

from .cohort import (
    DEFAULT_WINDOW,
    NEGATIVE,
    POSITIVE,
    SymptomPresenceTable,
    daily_counts,
    pair_counts,
    window_presence,
)
from .errors import InputError
from .stats import (
    DailyRow,
    EnrichmentRow,
    PairRow,
    StatConfig,
    daily_rows,
    enrichment_rows,
    pair_rows,
)


def _sizes(table: SymptomPresenceTable) -> tuple[int, int]:
    return table.cohort_sizes[POSITIVE], table.cohort_sizes[NEGATIVE]


def enrichment_table(
    table: SymptomPresenceTable, window: tuple[int, int] = DEFAULT_WINDOW
) -> list[EnrichmentRow]:
    """One row per phenotype group over the window, sorted by fold change."""
    n_pos, n_neg = _sizes(table)
    windowed = window_presence(table, window[0], window[1])
    counts = [(gid, len(pos), len(neg)) for gid, (pos, neg) in sorted(windowed.items())]
    return enrichment_rows(counts, n_pos, n_neg)


def daily_table(
    table: SymptomPresenceTable, window: tuple[int, int] = DEFAULT_WINDOW
) -> list[DailyRow]:
    """Per-(group, day) rows across the window."""
    n_pos, n_neg = _sizes(table)
    return daily_rows(daily_counts(table, window), n_pos, n_neg)


def pairwise_table(
    table: SymptomPresenceTable,
    window: tuple[int, int] = DEFAULT_WINDOW,
    config: StatConfig | None = None,
) -> list[PairRow]:
    """Every unordered group pair with Fisher p and BH adjustment."""
    if len(table.group_ids) < 2:
        raise InputError("pairwise analysis needs at least 2 phenotype groups")
    n_pos, n_neg = _sizes(table)
    m_tests = config.m_tests if config else None
    return pair_rows(pair_counts(table, window), n_pos, n_neg, m_tests=m_tests)
