"""Presence map: which patients showed which phenotype on which day.

The pipeline joins notes, the patient roster, the term matcher and an
assertion classifier.  Only mentions labeled YES count (optionally MAYBE
as a sensitivity mode); template sentences are dropped first.  The map
is keyed by (group_id, relative day) and holds sets of patient ids, so
repeated mentions of one phenotype by one patient on one day collapse.

Per-note work is embarrassingly parallel; partial tables from workers
merge by set union, so the result is identical for any worker count.
"""

from __future__ import annotations

import csv
import multiprocessing
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

from .assertion import AssertionLabel, Classifier
from .errors import InputError
from .lexicon import TermMatcher
from .textproc import (
    ClinicalNote,
    PatientRecord,
    collect_fingerprint_patients,
    fingerprint,
    merge_fingerprint_tables,
    relative_day,
    segment_sentences,
)

POSITIVE = "positive"
NEGATIVE = "negative"

DEFAULT_DAY_RANGE = (-14, 14)
DEFAULT_WINDOW = (-7, -1)

PRESENCE_HEADER = ("group_id", "relative_day", "cohort", "patient_count")
PRESENCE_LONG_HEADER = ("group_id", "relative_day", "cohort", "patient_id")
REJECTS_HEADER = ("note_id", "reason")


@dataclass
class SymptomPresenceTable:
    presence: dict[tuple[str, int], set[str]]
    cohort_sizes: dict[str, int]
    day_range: tuple[int, int]
    group_ids: tuple[str, ...]
    patient_arms: dict[str, str] = field(default_factory=dict)

    def patients(self, group_id: str, day: int) -> set[str]:
        return self.presence.get((group_id, day), set())


@dataclass(frozen=True)
class RejectedNote:
    note_id: str
    reason: str


def _validate_day_range(day_range: tuple[int, int]) -> None:
    if day_range[0] > day_range[1]:
        raise InputError(f"empty day range {day_range}")


def _scan_notes(
    notes: Sequence[ClinicalNote],
    patients: Mapping[str, PatientRecord],
    matcher: TermMatcher,
    classifier: Classifier,
    templates: frozenset[str],
    day_range: tuple[int, int],
    include_maybe: bool,
) -> tuple[dict[tuple[str, int], set[str]], list[RejectedNote]]:
    presence: dict[tuple[str, int], set[str]] = {}
    rejects: list[RejectedNote] = []
    accepted = {AssertionLabel.YES}
    if include_maybe:
        accepted.add(AssertionLabel.MAYBE)
    lo, hi = day_range
    for note in notes:
        record = patients.get(note.patient_id)
        if record is None:
            rejects.append(RejectedNote(note.note_id, f"unknown patient_id {note.patient_id!r}"))
            continue
        day = relative_day(note.date, record.pcr_date)
        if day < lo or day > hi:
            continue
        for sentence in segment_sentences(note):
            if templates and fingerprint(sentence.text) in templates:
                continue
            for mention in matcher.find_mentions(sentence.text):
                label, _confidence = classifier.classify(
                    sentence.text, (mention.start, mention.end)
                )
                if label not in accepted:
                    continue
                for group_id in mention.group_ids:
                    presence.setdefault((group_id, day), set()).add(note.patient_id)
    return presence, rejects


_WORKER_STATE: dict = {}


def _worker_init(patients, matcher, classifier, templates, day_range, include_maybe):
    _WORKER_STATE.update(
        patients=patients,
        matcher=matcher,
        classifier=classifier,
        templates=templates,
        day_range=day_range,
        include_maybe=include_maybe,
    )


def _worker_scan(notes: Sequence[ClinicalNote]):
    state = _WORKER_STATE
    return _scan_notes(
        notes,
        state["patients"],
        state["matcher"],
        state["classifier"],
        state["templates"],
        state["day_range"],
        state["include_maybe"],
    )


def _worker_fingerprints(notes: Sequence[ClinicalNote]):
    pairs = (
        (sentence.text, note.patient_id)
        for note in notes
        for sentence in segment_sentences(note)
    )
    return collect_fingerprint_patients(pairs)


def _chunks(notes: Sequence[ClinicalNote], size: int) -> list[Sequence[ClinicalNote]]:
    return [notes[i:i + size] for i in range(0, len(notes), size)]


def corpus_fingerprints(
    notes: Sequence[ClinicalNote], workers: int = 1
) -> dict[str, set[str]]:
    """Fingerprint -> distinct patients over the whole corpus."""
    if workers <= 1 or len(notes) < 2000:
        return _worker_fingerprints(notes)
    with multiprocessing.get_context("fork").Pool(workers) as pool:
        tables = pool.map(_worker_fingerprints, _chunks(notes, 2000))
    return merge_fingerprint_tables(tables)


def build_presence(
    notes: Sequence[ClinicalNote],
    patients: Mapping[str, PatientRecord],
    matcher: TermMatcher,
    classifier: Classifier,
    templates: Iterable[str] = (),
    day_range: tuple[int, int] = DEFAULT_DAY_RANGE,
    include_maybe: bool = False,
    workers: int = 1,
    group_ids: Sequence[str] | None = None,
) -> tuple[SymptomPresenceTable, list[RejectedNote]]:
    """Invert the corpus into (phenotype, day) -> patients with a YES mention.

    Notes for unknown patients are reported in the rejects list, never
    fatal.  Notes dated outside ``day_range`` are skipped.  The output is
    independent of note order and worker count.
    """
    _validate_day_range(day_range)
    template_set = frozenset(templates)

    if workers <= 1 or len(notes) < 2000:
        presence, rejects = _scan_notes(
            notes, patients, matcher, classifier, template_set, day_range, include_maybe
        )
    else:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(
            workers,
            initializer=_worker_init,
            initargs=(patients, matcher, classifier, template_set, day_range, include_maybe),
        ) as pool:
            partials = pool.map(_worker_scan, _chunks(notes, 2000))
        presence = {}
        rejects = []
        for partial_presence, partial_rejects in partials:
            for key, pids in partial_presence.items():
                presence.setdefault(key, set()).update(pids)
            rejects.extend(partial_rejects)

    sizes = {POSITIVE: 0, NEGATIVE: 0}
    arms: dict[str, str] = {}
    for patient_id, record in patients.items():
        sizes[record.pcr_result] += 1
        arms[patient_id] = record.pcr_result

    if group_ids is None:
        group_ids = tuple(sorted({gid for gid, _day in presence}))
    table = SymptomPresenceTable(
        presence=presence,
        cohort_sizes=sizes,
        day_range=day_range,
        group_ids=tuple(group_ids),
        patient_arms=arms,
    )
    rejects.sort(key=lambda r: r.note_id)
    return table, rejects


def window_presence(
    table: SymptomPresenceTable,
    from_day: int,
    to_day: int,
    group_ids: Sequence[str] | None = None,
) -> dict[str, tuple[set[str], set[str]]]:
    """Union daily sets over [from_day, to_day], split by PCR arm."""
    if from_day > to_day:
        raise InputError(f"empty window [{from_day}, {to_day}]")
    if from_day < table.day_range[0] or to_day > table.day_range[1]:
        raise InputError(
            f"window [{from_day}, {to_day}] outside day range {table.day_range}"
        )
    arms = table.patient_arms
    result: dict[str, tuple[set[str], set[str]]] = {}
    for group_id in group_ids if group_ids is not None else table.group_ids:
        pos: set[str] = set()
        neg: set[str] = set()
        for day in range(from_day, to_day + 1):
            for patient_id in table.presence.get((group_id, day), ()):
                if arms.get(patient_id) == POSITIVE:
                    pos.add(patient_id)
                else:
                    neg.add(patient_id)
        result[group_id] = (pos, neg)
    return result


def daily_counts(
    table: SymptomPresenceTable,
    window: tuple[int, int],
    group_ids: Sequence[str] | None = None,
) -> list[tuple[str, int, int, int]]:
    """(group_id, day, k_pos, k_neg) rows over the window."""
    per_day = []
    arms = table.patient_arms
    for group_id in group_ids if group_ids is not None else table.group_ids:
        for day in range(window[0], window[1] + 1):
            patients = table.presence.get((group_id, day), ())
            k_pos = sum(1 for p in patients if arms.get(p) == POSITIVE)
            k_neg = len(patients) - k_pos
            per_day.append((group_id, day, k_pos, k_neg))
    return per_day


def pair_counts(
    table: SymptomPresenceTable,
    window: tuple[int, int],
    group_ids: Sequence[str] | None = None,
) -> list[tuple[str, str, int, int]]:
    """Patients with both phenotypes at least once inside the window."""
    windowed = window_presence(table, window[0], window[1], group_ids)
    ordered = sorted(windowed)
    rows: list[tuple[str, str, int, int]] = []
    for i, group_a in enumerate(ordered):
        pos_a, neg_a = windowed[group_a]
        for group_b in ordered[i + 1:]:
            pos_b, neg_b = windowed[group_b]
            rows.append(
                (group_a, group_b, len(pos_a & pos_b), len(neg_a & neg_b))
            )
    return rows


# ---------------------------------------------------------------------------
# Exports


def write_presence_csv(table: SymptomPresenceTable, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(PRESENCE_HEADER)
    arms = table.patient_arms
    for (group_id, day), patients in sorted(table.presence.items()):
        k_pos = sum(1 for p in patients if arms.get(p) == POSITIVE)
        k_neg = len(patients) - k_pos
        for cohort, count in ((POSITIVE, k_pos), (NEGATIVE, k_neg)):
            if count:
                writer.writerow([group_id, day, cohort, count])


def write_presence_long_csv(table: SymptomPresenceTable, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(PRESENCE_LONG_HEADER)
    arms = table.patient_arms
    for (group_id, day), patients in sorted(table.presence.items()):
        for patient_id in sorted(patients):
            writer.writerow([group_id, day, arms.get(patient_id, "?"), patient_id])


def write_rejects_csv(rejects: Sequence[RejectedNote], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(REJECTS_HEADER)
    for reject in rejects:
        writer.writerow([reject.note_id, reject.reason])


def load_presence_long_csv(
    source: IO[str] | str,
    patients: Mapping[str, PatientRecord],
    day_range: tuple[int, int] = DEFAULT_DAY_RANGE,
    group_ids: Sequence[str] | None = None,
) -> SymptomPresenceTable:
    """Rebuild a presence table from the per-patient long export."""
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8", newline="") as handle:
            return load_presence_long_csv(handle, patients, day_range, group_ids)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("presence file is empty") from None
    if tuple(h.strip() for h in header) != PRESENCE_LONG_HEADER:
        raise InputError(
            f"presence header must be {','.join(PRESENCE_LONG_HEADER)!r}"
        )
    presence: dict[tuple[str, int], set[str]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise InputError(f"presence line {lineno}: expected 4 fields")
        group_id, raw_day, _cohort, patient_id = (f.strip() for f in row)
        try:
            day = int(raw_day)
        except ValueError:
            raise InputError(f"presence line {lineno}: bad relative_day {raw_day!r}") from None
        if patient_id not in patients:
            raise InputError(f"presence line {lineno}: unknown patient {patient_id!r}")
        presence.setdefault((group_id, day), set()).add(patient_id)

    sizes = {POSITIVE: 0, NEGATIVE: 0}
    arms: dict[str, str] = {}
    for patient_id, record in patients.items():
        sizes[record.pcr_result] += 1
        arms[patient_id] = record.pcr_result
    groups = tuple(group_ids) if group_ids is not None else tuple(
        sorted({gid for gid, _ in presence})
    )
    return SymptomPresenceTable(
        presence=presence,
        cohort_sizes=sizes,
        day_range=day_range,
        group_ids=groups,
        patient_arms=arms,
    )
