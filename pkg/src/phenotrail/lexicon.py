"""Phenotype synonym lexicon and multi-pattern term matching.

A lexicon groups synonym phrases under named phenotype categories.  The
matcher locates every synonym occurrence inside a sentence in a single
scan (Aho-Corasick automaton over normalized text), keeps only matches
that sit on token boundaries, and reports the owning group(s) of each
surviving hit.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from typing import IO, Iterable, Mapping

from .bundled import LEXICON, data_path
from .errors import InputError

LEXICON_HEADER = ("group_id", "term")

# Human-readable labels for the groups shipped in the default lexicon.
# User lexicons fall back to the group_id itself.
DEFAULT_DISPLAY_NAMES = {
    "fever_chills": "Fever / chills",
    "taste_smell_change": "Altered or diminished sense of taste or smell",
    "diarrhea": "Diarrhea",
    "gi_upset": "GI upset",
    "wheezing": "Wheezing",
    "respiratory_difficulty": "Respiratory difficulty",
    "respiratory_failure": "Respiratory failure",
    "cough": "Cough",
    "hemoptysis": "Hemoptysis",
    "chest_pain_pressure": "Chest pain/pressure",
    "congestion": "Congestion",
    "rhinitis": "Rhinitis",
    "myalgia_arthralgia": "Myalgia/Arthralgia",
    "generalized_symptoms": "Generalized symptoms",
    "fatigue": "Fatigue",
    "diaphoresis": "Diaphoresis",
    "pharyngitis": "Pharyngitis",
    "headache": "Headache",
    "dry_mouth": "Dry mouth",
    "appetite_change": "Change in appetite/intake",
    "conjunctivitis": "Conjunctivitis",
    "neuro": "Neuro",
    "cardiac": "Cardiac",
    "otitis": "Otitis",
    "dermatitis": "Dermatitis",
    "dysuria": "Dysuria",
}


def is_word_char(ch: str) -> bool:
    """Letters, digits and the apostrophe form tokens; all else separates."""
    return ch.isalnum() or ch == "'"


def normalize_term(raw: str) -> str:
    """Lowercase, collapse internal whitespace, strip surrounding punctuation.

    Idempotent: normalize_term(normalize_term(x)) == normalize_term(x).
    """
    s = " ".join(raw.lower().split())
    start, end = 0, len(s)
    while start < end and not is_word_char(s[start]):
        start += 1
    while end > start and not is_word_char(s[end - 1]):
        end -= 1
    return s[start:end]


def _caps_only(raw: str) -> bool:
    # Short all-uppercase abbreviations ("HA") must appear uppercase in the
    # source text; otherwise ordinary words would trigger them.
    stripped = raw.strip()
    return len(stripped) <= 3 and stripped.isupper()


@dataclass(frozen=True)
class PhenotypeGroup:
    group_id: str
    display_name: str
    terms: tuple[str, ...]  # normalized synonym phrases


@dataclass(frozen=True)
class Mention:
    """One matched synonym inside a sentence."""

    term: str  # normalized form of the matched synonym
    start: int  # character offsets into the original sentence
    end: int
    group_ids: frozenset[str]


class Lexicon:
    """Validated phenotype groups plus the inverted term index."""

    def __init__(self, groups: Iterable[PhenotypeGroup]):
        self.groups: tuple[PhenotypeGroup, ...] = tuple(groups)
        if not self.groups:
            raise InputError("lexicon contains no groups")
        index: dict[str, set[str]] = {}
        for group in self.groups:
            if not group.terms:
                raise InputError(f"group {group.group_id!r} has no terms")
            for term in group.terms:
                index.setdefault(term, set()).add(group.group_id)
        self.term_index: dict[str, frozenset[str]] = {
            t: frozenset(g) for t, g in index.items()
        }
        self.display_names: dict[str, str] = {
            g.group_id: g.display_name for g in self.groups
        }
        # Terms that must appear uppercase in source text.  A term is
        # caps-restricted only if every raw spelling that produced it was.
        self._caps_required: frozenset[str] = frozenset()

    @property
    def group_ids(self) -> tuple[str, ...]:
        return tuple(g.group_id for g in self.groups)

    @property
    def caps_required(self) -> frozenset[str]:
        return self._caps_required

    def _set_caps_required(self, terms: frozenset[str]) -> None:
        self._caps_required = terms


def load_lexicon(
    source: IO[str] | str,
    display_names: Mapping[str, str] | None = None,
) -> Lexicon:
    """Parse a two-column ``group_id,term`` CSV stream into a Lexicon.

    Raises InputError (with the offending line number) for a missing or
    wrong header, blank fields, terms that normalize to nothing, or an
    exactly repeated record.
    """
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8", newline="") as handle:
            return load_lexicon(handle, display_names)

    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("lexicon file is empty") from None
    if tuple(h.strip() for h in header) != LEXICON_HEADER:
        raise InputError(
            f"lexicon header must be {','.join(LEXICON_HEADER)!r}, "
            f"got {','.join(header)!r}"
        )

    order: list[str] = []
    terms_by_group: dict[str, list[str]] = {}
    seen_records: set[tuple[str, str]] = set()
    caps_votes: dict[str, bool] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 2:
            raise InputError(f"lexicon line {lineno}: expected 2 fields, got {len(row)}")
        group_id, raw_term = row[0].strip(), row[1]
        if not group_id:
            raise InputError(f"lexicon line {lineno}: empty group_id")
        term = normalize_term(raw_term)
        if not term:
            raise InputError(f"lexicon line {lineno}: empty term")
        record = (group_id, term)
        if record in seen_records:
            raise InputError(
                f"lexicon line {lineno}: duplicate record {group_id},{term}"
            )
        seen_records.add(record)
        if group_id not in terms_by_group:
            order.append(group_id)
            terms_by_group[group_id] = []
        terms_by_group[group_id].append(term)
        caps = _caps_only(raw_term)
        caps_votes[term] = caps_votes.get(term, True) and caps

    names = dict(DEFAULT_DISPLAY_NAMES)
    if display_names:
        names.update(display_names)
    groups = [
        PhenotypeGroup(
            group_id=g,
            display_name=names.get(g, g),
            terms=tuple(terms_by_group[g]),
        )
        for g in order
    ]
    lexicon = Lexicon(groups)
    lexicon._set_caps_required(
        frozenset(t for t, caps in caps_votes.items() if caps)
    )
    return lexicon


def default_lexicon_path() -> str:
    return data_path(LEXICON)


def load_default_lexicon() -> Lexicon:
    return load_lexicon(default_lexicon_path())


class TermMatcher:
    """Immutable multi-pattern matcher built from a lexicon.

    Matching is case-insensitive except for caps-restricted terms, runs on
    token boundaries, and resolves overlaps by letting the longest match
    starting earliest win; matches beginning inside a winning span are
    suppressed.  The winning term reports every group that lists it.
    """

    def __init__(self, lexicon: Lexicon):
        self._terms: tuple[str, ...] = tuple(sorted(lexicon.term_index))
        self._groups: tuple[frozenset[str], ...] = tuple(
            lexicon.term_index[t] for t in self._terms
        )
        self._caps: tuple[bool, ...] = tuple(
            t in lexicon.caps_required for t in self._terms
        )
        self._build_automaton()

    @property
    def pattern_count(self) -> int:
        return len(self._terms)

    def _build_automaton(self) -> None:
        goto: list[dict[str, int]] = [{}]
        out: list[list[int]] = [[]]
        for idx, term in enumerate(self._terms):
            state = 0
            for ch in term:
                nxt = goto[state].get(ch)
                if nxt is None:
                    nxt = len(goto)
                    goto.append({})
                    out.append([])
                    goto[state][ch] = nxt
                state = nxt
            out[state].append(idx)

        fail = [0] * len(goto)
        queue: deque[int] = deque(goto[0].values())
        while queue:
            state = queue.popleft()
            for ch, child in goto[state].items():
                queue.append(child)
                f = fail[state]
                while f and ch not in goto[f]:
                    f = fail[f]
                fail[child] = goto[f].get(ch, 0)
                out[child].extend(out[fail[child]])

        self._goto = goto
        self._fail = fail
        self._out = out
        self._upper = tuple(
            t.upper() if caps else "" for t, caps in zip(self._terms, self._caps)
        )

    @staticmethod
    def _normalize_sentence(sentence: str) -> tuple[str, list[int] | None]:
        """Lowercased, whitespace-collapsed view plus index map to original.

        Returns (normalized, positions); positions is None when the
        normalized text aligns one-to-one with the original.
        """
        simple = True
        for ch in sentence:
            if ch.isspace() and ch != " ":
                simple = False
                break
        if simple and "  " not in sentence:
            lowered = sentence.lower()
            if len(lowered) == len(sentence):
                return lowered, None
        chars: list[str] = []
        positions: list[int] = []
        for i, ch in enumerate(sentence):
            if ch.isspace():
                if chars and chars[-1] == " ":
                    continue
                chars.append(" ")
                positions.append(i)
            else:
                low = ch.lower()
                chars.append(low if len(low) == 1 else ch)
                positions.append(i)
        return "".join(chars), positions

    def find_mentions(self, sentence: str) -> list[Mention]:
        if not sentence:
            return []
        norm, positions = self._normalize_sentence(sentence)
        goto, fail, out = self._goto, self._fail, self._out
        terms = self._terms

        candidates: list[tuple[int, int, int]] = []  # (start, -length, idx)
        state = 0
        n = len(norm)
        for i, ch in enumerate(norm):
            while state and ch not in goto[state]:
                state = fail[state]
            state = goto[state].get(ch, 0)
            if out[state]:
                end = i + 1
                if end < n and is_word_char(norm[end]):
                    continue
                for idx in out[state]:
                    length = len(terms[idx])
                    start = end - length
                    if start > 0 and is_word_char(norm[start - 1]):
                        continue
                    if self._caps[idx]:
                        ostart, oend = _orig_span(positions, start, end)
                        if sentence[ostart:oend] != self._upper[idx]:
                            continue
                    candidates.append((start, -length, idx))

        if not candidates:
            return []
        candidates.sort()
        mentions: list[Mention] = []
        consumed = 0
        for start, neg_len, idx in candidates:
            if start < consumed:
                continue
            end = start - neg_len
            consumed = end
            ostart, oend = _orig_span(positions, start, end)
            mentions.append(
                Mention(
                    term=terms[idx],
                    start=ostart,
                    end=oend,
                    group_ids=self._groups[idx],
                )
            )
        return mentions


def _orig_span(positions: list[int] | None, start: int, end: int) -> tuple[int, int]:
    if positions is None:
        return start, end
    return positions[start], positions[end - 1] + 1


def build_matcher(lexicon: Lexicon) -> TermMatcher:
    return TermMatcher(lexicon)
