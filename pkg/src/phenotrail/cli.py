"""Command-line entry points for the curation and statistics pipeline.

Subcommands: curate, enrich, timeline, pairwise, eval, synth, coexpr.
Every run writes its outputs plus a manifest.json (inputs with SHA-256
digests, the resolved configuration and the argv needed to reproduce
the run) into the --out directory.  Exit codes: 0 success, 2 invalid
input, 1 internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import traceback
from typing import IO, Iterable, Sequence

from . import __version__
from . import assertion, cohort, coexpr, stats, synth, tables, textproc
from .errors import InputError
from .lexicon import Lexicon, build_matcher, default_lexicon_path, load_lexicon

POSITIVE, NEGATIVE = cohort.POSITIVE, cohort.NEGATIVE


def _parse_span(text: str) -> tuple[int, int]:
    parts = text.split("..")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}")
    try:
        lo, hi = int(parts[0]), int(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers in {text!r}") from None
    return lo, hi


def _add_window_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--window", type=_parse_span, default=cohort.DEFAULT_WINDOW,
        metavar="A..B", help="analysis window of relative days (default -7..-1)",
    )
    parser.add_argument(
        "--day-range", type=_parse_span, default=cohort.DEFAULT_DAY_RANGE,
        metavar="A..B", help="days kept during curation (default -14..14)",
    )


def _add_pipeline_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--notes", help="JSON-lines note corpus")
    parser.add_argument("--patients", help="patient roster CSV")
    parser.add_argument("--lexicon", help="phenotype lexicon CSV (default: bundled)")
    parser.add_argument(
        "--template-threshold", type=int, default=20, metavar="N",
        help="distinct patients before a sentence counts as boilerplate",
    )
    parser.add_argument(
        "--no-template-filter", action="store_true",
        help="keep boilerplate sentences in the analysis",
    )
    parser.add_argument(
        "--include-maybe", action="store_true",
        help="count suspected (MAYBE) mentions as presence",
    )
    parser.add_argument("--workers", type=int, default=1, metavar="N")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phenotrail",
        description="Clinical-note phenotype curation and temporal enrichment",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", help="notes -> symptom presence table")
    _add_pipeline_args(p)
    _add_window_args(p)
    p.add_argument("--per-patient", action="store_true",
                   help="also export the per-patient long presence table")
    p.add_argument("--dump-classification-requests", metavar="PATH",
                   help="write the classifier batch requests and stop")
    p.add_argument("--classification-responses", metavar="PATH",
                   help="use externally produced classifier responses")
    p.add_argument("--out", required=True)

    for name, help_text in (
        ("enrich", "window enrichment table (fold change + z-test)"),
        ("timeline", "per-day enrichment table"),
        ("pairwise", "phenotype-pair co-occurrence table (Fisher + BH)"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_pipeline_args(p)
        _add_window_args(p)
        p.add_argument("--from-counts", metavar="PATH",
                       help="skip curation; read pre-tabulated counts")
        p.add_argument("--presence", metavar="PATH",
                       help="skip curation; read a per-patient presence export")
        if name == "pairwise":
            p.add_argument("--m-tests", type=int, metavar="N",
                           help="BH family size (default: number of pairs)")
        p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score predicted labels against gold labels")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate a deterministic synthetic corpus")
    p.add_argument("--config", metavar="PATH", help="synth config JSON")
    p.add_argument("--calibrate-daily", metavar="PATH",
                   help="daily percentage table to calibrate from")
    p.add_argument("--n-pos", type=int)
    p.add_argument("--n-neg", type=int)
    p.add_argument("--negation-rate", type=float, default=0.0)
    p.add_argument("--uncertainty-rate", type=float, default=0.0)
    p.add_argument("--other-rate", type=float, default=0.0)
    p.add_argument("--template-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lexicon", help="phenotype lexicon CSV (default: bundled)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("coexpr", help="two-gene co-expression summary")
    p.add_argument("--matrix", required=True, help="sparse triplet counts")
    p.add_argument("--cells", required=True, help="cell annotation CSV")
    p.add_argument("--genes", required=True, help="gene symbol list")
    p.add_argument("--gene-a", required=True)
    p.add_argument("--gene-b", required=True)
    p.add_argument("--min-cells", type=int, default=coexpr.COEXPR_FILTER_MIN_CELLS)
    p.add_argument("--min-frac", type=float, default=coexpr.COEXPR_FILTER_MIN_FRAC)
    p.add_argument("--out", required=True)

    return parser


# ---------------------------------------------------------------------------
# Manifest


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(
    out_dir: str,
    argv: Sequence[str],
    inputs: Iterable[str],
    outputs: Iterable[str],
    config: dict,
) -> None:
    manifest = {
        "tool": "phenotrail",
        "version": __version__,
        "argv": list(argv),
        "inputs": {path: _sha256(path) for path in sorted(set(inputs))},
        "outputs": sorted(outputs),
        "config": config,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def rerun_from_manifest(manifest_path: str, out_dir: str) -> int:
    """Re-execute the run recorded in a manifest into a fresh out dir."""
    with open(manifest_path, "r", encoding="utf-8") as handle:
        manifest = json.load(handle)
    argv = list(manifest["argv"])
    for i, arg in enumerate(argv):
        if arg == "--out":
            argv[i + 1] = out_dir
    return run(argv)


# ---------------------------------------------------------------------------
# Shared pipeline plumbing


def _load_lexicon_arg(path: str | None) -> Lexicon:
    return load_lexicon(path or default_lexicon_path())


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise InputError(f"missing required arguments: {', '.join(missing)}")


def _check_window(window: tuple[int, int], day_range: tuple[int, int]) -> None:
    if window[0] > window[1]:
        raise InputError(f"empty window {window}")
    if window[0] < day_range[0] or window[1] > day_range[1]:
        raise InputError(f"window {window} outside day range {day_range}")


def _curate_table(args: argparse.Namespace):
    """Run notes+patients through curation; returns (table, rejects, lexicon)."""
    _require(args, "notes", "patients")
    lexicon = _load_lexicon_arg(args.lexicon)
    notes = textproc.load_notes(args.notes)
    patients = textproc.load_patients(args.patients)
    matcher = build_matcher(lexicon)

    templates: set[str] = set()
    if not args.no_template_filter:
        if args.template_threshold < 2:
            raise InputError(
                f"template threshold must be >= 2, got {args.template_threshold}"
            )
        fingerprints = cohort.corpus_fingerprints(notes, workers=args.workers)
        templates = {
            fp for fp, pats in fingerprints.items()
            if len(pats) >= args.template_threshold
        }

    classifier: assertion.Classifier
    dump_path = getattr(args, "dump_classification_requests", None)
    responses_path = getattr(args, "classification_responses", None)
    if dump_path:
        _dump_requests(notes, patients, matcher, templates, args, dump_path)
        return None, None, lexicon
    if responses_path:
        tasks = _classification_tasks(notes, patients, matcher, templates, args)
        responses = assertion.read_classification_responses(responses_path, len(tasks))
        classifier = assertion.PrecomputedClassifier(responses)
        # Replay requires the serial task order; workers stay at 1.
        workers = 1
    else:
        classifier = assertion.RuleClassifier()
        workers = args.workers

    table, rejects = cohort.build_presence(
        notes,
        patients,
        matcher,
        classifier,
        templates=templates,
        day_range=args.day_range,
        include_maybe=args.include_maybe,
        workers=workers,
        group_ids=lexicon.group_ids,
    )
    return table, rejects, lexicon


def _classification_tasks(notes, patients, matcher, templates, args):
    """Deterministic (sentence, span) task order shared by dump and replay."""
    lo, hi = args.day_range
    tasks: list[tuple[str, int, int]] = []
    for note in notes:
        record = patients.get(note.patient_id)
        if record is None:
            continue
        day = textproc.relative_day(note.date, record.pcr_date)
        if day < lo or day > hi:
            continue
        for sentence in textproc.segment_sentences(note):
            if templates and textproc.fingerprint(sentence.text) in templates:
                continue
            for mention in matcher.find_mentions(sentence.text):
                tasks.append((sentence.text, mention.start, mention.end))
    return tasks


def _dump_requests(notes, patients, matcher, templates, args, path: str) -> None:
    tasks = _classification_tasks(notes, patients, matcher, templates, args)
    with open(path, "w", encoding="utf-8") as handle:
        assertion.write_classification_requests(tasks, handle)


def _presence_table(args: argparse.Namespace):
    """Table from --presence export or by running curation."""
    if args.presence:
        _require(args, "patients")
        lexicon = _load_lexicon_arg(args.lexicon) if args.lexicon else None
        patients = textproc.load_patients(args.patients)
        table = cohort.load_presence_long_csv(
            args.presence,
            patients,
            day_range=args.day_range,
            group_ids=lexicon.group_ids if lexicon else None,
        )
        names = lexicon.display_names if lexicon else {}
        return table, names
    table, _rejects, lexicon = _curate_table(args)
    return table, lexicon.display_names


# ---------------------------------------------------------------------------
# Pre-tabulated count files


def _read_counts_csv(path: str, required: Sequence[str]) -> list[dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty counts file")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise InputError(f"{path}: missing columns {missing}")
        return [row for row in reader if any(v.strip() for v in row.values() if v)]


def _int_field(row: dict[str, str], key: str, path: str) -> int:
    try:
        return int(row[key])
    except (ValueError, TypeError):
        raise InputError(f"{path}: bad integer in column {key!r}: {row.get(key)!r}") from None


def _float_field(row: dict[str, str], key: str, path: str) -> float:
    try:
        return float(row[key])
    except (ValueError, TypeError):
        raise InputError(f"{path}: bad number in column {key!r}: {row.get(key)!r}") from None


def _uniform_totals(rows, path) -> tuple[int, int]:
    totals = {(
        _int_field(row, "pos_total", path), _int_field(row, "neg_total", path)
    ) for row in rows}
    if len(totals) != 1:
        raise InputError(f"{path}: pos_total/neg_total must be uniform")
    return totals.pop()


def derive_count(pct: float, total: int) -> int:
    """Recover an integer count from a printed percentage."""
    return round(pct * total / 100.0)


# ---------------------------------------------------------------------------
# Table writers


def _write_enrichment_csv(rows, names, n_pos, n_neg, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow([
        "Phenotype",
        f"COVID+ count (N={n_pos})",
        f"COVID- count (N={n_neg})",
        f"COVID+ proportion (N={n_pos})",
        f"COVID- proportion (N={n_neg})",
        "(COVID+/COVID-) relative ratio",
        "2-tailed p-value",
    ])
    for row in rows:
        writer.writerow([
            names.get(row.group_id, row.group_id),
            row.k_pos,
            row.k_neg,
            stats.format_fraction(row.p_pos),
            stats.format_fraction(row.p_neg),
            stats.format_ratio(row.ratio),
            stats.format_p(row.log10_p),
        ])


def _write_timeline_csv(rows, names, n_pos, n_neg, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow([
        "Phenotype",
        "Day",
        f"COVID+ % (n={n_pos})",
        f"COVID- % (n={n_neg})",
        "Ratio (Positive/Negative)",
        "p-value",
    ])
    for row in rows:
        writer.writerow([
            names.get(row.group_id, row.group_id),
            row.day,
            stats.format_fraction(row.pct_pos),
            stats.format_fraction(row.pct_neg),
            stats.format_ratio(row.ratio),
            stats.format_p(row.log10_p),
        ])


def _write_pairwise_csv(rows, names, n_pos, n_neg, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow([
        "Phenotype 1",
        "Phenotype 2",
        f"COVID+ count (N={n_pos})",
        f"COVID- count (N={n_neg})",
        f"COVID+ % (N={n_pos})",
        f"COVID- % (N={n_neg})",
        "(COVID+)/(COVID-) ratio",
        "raw p-value",
        "BH-corrected p-value",
    ])
    for row in rows:
        writer.writerow([
            names.get(row.group_a, row.group_a),
            names.get(row.group_b, row.group_b),
            row.k_pos,
            row.k_neg,
            stats.format_fraction(row.pct_pos),
            stats.format_fraction(row.pct_neg),
            stats.format_ratio(row.ratio),
            stats.format_p_value(row.p_raw),
            stats.format_p_value(row.p_adjusted),
        ])


def _write_metrics_csv(metrics: assertion.EvalMetrics, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["metric", "value"])
    writer.writerow(["n_total", metrics.n_total])
    for name in ("accuracy", "tpr", "fpr", "fnr"):
        writer.writerow([name, f"{getattr(metrics, name):.6f}"])
    for label, (precision, recall, f1) in sorted(
        metrics.per_label.items(), key=lambda kv: kv[0].value
    ):
        writer.writerow([f"precision_{label.value}", f"{precision:.6f}"])
        writer.writerow([f"recall_{label.value}", f"{recall:.6f}"])
        writer.writerow([f"f1_{label.value}", f"{f1:.6f}"])


def _out_file(out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


# ---------------------------------------------------------------------------
# Subcommand implementations


def _cmd_curate(args, argv) -> int:
    table, rejects, _lexicon = _curate_table(args)
    if table is None:  # --dump-classification-requests mode
        return 0
    _check_window(args.window, args.day_range)
    outputs = []
    path = _out_file(args.out, "presence.csv")
    with open(path, "w", encoding="utf-8") as handle:
        cohort.write_presence_csv(table, handle)
    outputs.append("presence.csv")
    with open(_out_file(args.out, "rejects.csv"), "w", encoding="utf-8") as handle:
        cohort.write_rejects_csv(rejects, handle)
    outputs.append("rejects.csv")
    if args.per_patient:
        with open(_out_file(args.out, "presence_long.csv"), "w", encoding="utf-8") as handle:
            cohort.write_presence_long_csv(table, handle)
        outputs.append("presence_long.csv")
    inputs = [args.notes, args.patients] + ([args.lexicon] if args.lexicon else [])
    write_manifest(args.out, argv, inputs, outputs, _pipeline_config(args))
    return 0


def _pipeline_config(args) -> dict:
    config = {
        "window": list(getattr(args, "window", ())),
        "day_range": list(getattr(args, "day_range", ())),
        "template_threshold": getattr(args, "template_threshold", None),
        "template_filter": not getattr(args, "no_template_filter", False),
        "include_maybe": getattr(args, "include_maybe", False),
        "workers": getattr(args, "workers", 1),
        "lexicon": getattr(args, "lexicon", None) or "bundled",
    }
    return config


def _cmd_enrich(args, argv) -> int:
    _check_window(args.window, args.day_range)
    if args.from_counts:
        rows_in = _read_counts_csv(
            args.from_counts,
            ["phenotype", "pos_total", "neg_total", "pos_count", "neg_count"],
        )
        n_pos, n_neg = _uniform_totals(rows_in, args.from_counts)
        counts = [
            (row["phenotype"],
             _int_field(row, "pos_count", args.from_counts),
             _int_field(row, "neg_count", args.from_counts))
            for row in rows_in
        ]
        rows = stats.enrichment_rows(counts, n_pos, n_neg)
        names: dict[str, str] = {}
        inputs = [args.from_counts]
    else:
        table, names = _presence_table(args)
        n_pos, n_neg = table.cohort_sizes[POSITIVE], table.cohort_sizes[NEGATIVE]
        rows = tables.enrichment_table(table, args.window)
        inputs = _pipeline_inputs(args)
    with open(_out_file(args.out, "enrichment.csv"), "w", encoding="utf-8") as handle:
        _write_enrichment_csv(rows, names, n_pos, n_neg, handle)
    write_manifest(args.out, argv, inputs, ["enrichment.csv"], _pipeline_config(args))
    return 0


def _cmd_timeline(args, argv) -> int:
    _check_window(args.window, args.day_range)
    if args.from_counts:
        rows_in = _read_counts_csv(
            args.from_counts, ["phenotype", "day", "pos_total", "neg_total"]
        )
        n_pos, n_neg = _uniform_totals(rows_in, args.from_counts)
        counts = []
        for row in rows_in:
            day = _int_field(row, "day", args.from_counts)
            if "pos_count" in row and row.get("pos_count"):
                k_pos = _int_field(row, "pos_count", args.from_counts)
                k_neg = _int_field(row, "neg_count", args.from_counts)
            else:
                k_pos = derive_count(
                    _float_field(row, "pos_pct", args.from_counts), n_pos)
                k_neg = derive_count(
                    _float_field(row, "neg_pct", args.from_counts), n_neg)
            counts.append((row["phenotype"], day, k_pos, k_neg))
        rows = stats.daily_rows(counts, n_pos, n_neg)
        names = {}
        inputs = [args.from_counts]
    else:
        table, names = _presence_table(args)
        n_pos, n_neg = table.cohort_sizes[POSITIVE], table.cohort_sizes[NEGATIVE]
        rows = tables.daily_table(table, args.window)
        inputs = _pipeline_inputs(args)
    with open(_out_file(args.out, "timeline.csv"), "w", encoding="utf-8") as handle:
        _write_timeline_csv(rows, names, n_pos, n_neg, handle)
    write_manifest(args.out, argv, inputs, ["timeline.csv"], _pipeline_config(args))
    return 0


def _cmd_pairwise(args, argv) -> int:
    _check_window(args.window, args.day_range)
    if args.from_counts:
        rows_in = _read_counts_csv(
            args.from_counts,
            ["phenotype_a", "phenotype_b", "pos_total", "neg_total",
             "pos_count", "neg_count"],
        )
        n_pos, n_neg = _uniform_totals(rows_in, args.from_counts)
        counts = [
            (row["phenotype_a"], row["phenotype_b"],
             _int_field(row, "pos_count", args.from_counts),
             _int_field(row, "neg_count", args.from_counts))
            for row in rows_in
        ]
        rows = stats.pair_rows(counts, n_pos, n_neg, m_tests=args.m_tests)
        names = {}
        inputs = [args.from_counts]
    else:
        table, names = _presence_table(args)
        n_pos, n_neg = table.cohort_sizes[POSITIVE], table.cohort_sizes[NEGATIVE]
        rows = tables.pairwise_table(
            table, args.window, stats.StatConfig(window=args.window, m_tests=args.m_tests)
        )
        inputs = _pipeline_inputs(args)
    with open(_out_file(args.out, "pairwise.csv"), "w", encoding="utf-8") as handle:
        _write_pairwise_csv(rows, names, n_pos, n_neg, handle)
    config = _pipeline_config(args)
    config["m_tests"] = args.m_tests
    write_manifest(args.out, argv, inputs, ["pairwise.csv"], config)
    return 0


def _pipeline_inputs(args) -> list[str]:
    inputs = []
    for name in ("notes", "patients", "lexicon", "presence"):
        value = getattr(args, name, None)
        if value:
            inputs.append(value)
    return inputs


def _cmd_eval(args, argv) -> int:
    gold = assertion.load_gold_labels(args.gold)
    pred = assertion.load_gold_labels(args.pred)
    missing = sorted(set(gold) - set(pred))
    extra = sorted(set(pred) - set(gold))
    if missing or extra:
        raise InputError(
            f"gold/pred key mismatch: {len(missing)} missing, {len(extra)} extra"
        )
    keys = sorted(gold)
    metrics = assertion.evaluate([gold[k] for k in keys], [pred[k] for k in keys])
    with open(_out_file(args.out, "metrics.csv"), "w", encoding="utf-8") as handle:
        _write_metrics_csv(metrics, handle)
    write_manifest(args.out, argv, [args.gold, args.pred], ["metrics.csv"], {})
    return 0


def _resolve_calibration_rows(path: str, lexicon: Lexicon):
    rows_in = _read_counts_csv(path, ["phenotype", "day", "pos_pct", "neg_pct"])
    reverse = {name: gid for gid, name in lexicon.display_names.items()}
    known = set(lexicon.group_ids)
    rows = []
    for row in rows_in:
        label = row["phenotype"].strip()
        group_id = reverse.get(label, label if label in known else None)
        if group_id is None:
            raise InputError(f"{path}: unknown phenotype {label!r}")
        rows.append(
            (group_id,
             _int_field(row, "day", path),
             _float_field(row, "pos_pct", path),
             _float_field(row, "neg_pct", path))
        )
    return rows


def _cmd_synth(args, argv) -> int:
    lexicon = _load_lexicon_arg(args.lexicon)
    if args.config:
        config = synth.SynthConfig.from_json(args.config)
        inputs = [args.config]
    else:
        _require(args, "calibrate_daily", "n_pos", "n_neg")
        rows = _resolve_calibration_rows(args.calibrate_daily, lexicon)
        config = synth.calibrate_from_daily_table(
            rows,
            n_pos=args.n_pos,
            n_neg=args.n_neg,
            negation_rate=args.negation_rate,
            uncertainty_rate=args.uncertainty_rate,
            other_rate=args.other_rate,
            template_rate=args.template_rate,
            seed=args.seed,
        )
        inputs = [args.calibrate_daily]
    if args.lexicon:
        inputs.append(args.lexicon)

    corpus = synth.generate(config, lexicon)
    with open(_out_file(args.out, "notes.jsonl"), "w", encoding="utf-8") as handle:
        synth.write_notes_jsonl(corpus.notes, handle)
    with open(_out_file(args.out, "patients.csv"), "w", encoding="utf-8") as handle:
        synth.write_patients_csv(corpus.patients, handle)
    with open(_out_file(args.out, "gold_labels.csv"), "w", encoding="utf-8") as handle:
        assertion.write_gold_labels(corpus.gold, handle)
    with open(_out_file(args.out, "synth_config.json"), "w", encoding="utf-8") as handle:
        config.to_json(handle)
    write_manifest(
        args.out, argv, inputs,
        ["notes.jsonl", "patients.csv", "gold_labels.csv", "synth_config.json"],
        {"seed": config.seed, "n_pos": config.n_pos, "n_neg": config.n_neg},
    )
    return 0


def _cmd_coexpr(args, argv) -> int:
    matrix = coexpr.load_triplet_matrix(args.matrix, args.cells, args.genes)
    summaries = coexpr.coexpression_summary(
        matrix, args.gene_a, args.gene_b,
        min_cells=args.min_cells, min_frac=args.min_frac,
    )
    with open(_out_file(args.out, "coexpr.csv"), "w", encoding="utf-8") as handle:
        coexpr.write_coexpr_csv(summaries, args.gene_a, args.gene_b, handle)
    write_manifest(
        args.out, argv, [args.matrix, args.cells, args.genes], ["coexpr.csv"],
        {"gene_a": args.gene_a, "gene_b": args.gene_b,
         "min_cells": args.min_cells, "min_frac": args.min_frac},
    )
    return 0


_COMMANDS = {
    "curate": _cmd_curate,
    "enrich": _cmd_enrich,
    "timeline": _cmd_timeline,
    "pairwise": _cmd_pairwise,
    "eval": _cmd_eval,
    "synth": _cmd_synth,
    "coexpr": _cmd_coexpr,
}


def run(argv: Sequence[str]) -> int:
    """Parse and execute; raises on error (tests call this directly)."""
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args, list(argv))


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return run(argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse errors use code 2 already
        return int(exc.code or 0)
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
