"""Word error rate scoring of trn-style transcripts, count-pooled as in sclite."""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import polars as pl

from app.alignment import EditOp, align, match_matrix
from app.errors import HypothesisFormatError, ToolkitError, TranscriptMismatchError
from app.models import WerCounts

logger = logging.getLogger(__name__)

ENVIRONMENT_TAGS = ("BUS", "CAF", "PED", "STR")
_TRN_LINE = re.compile(r"^(?P<text>.*?)\s*\((?P<id>[^()\s]+)\)\s*$")


@dataclass
class WerReport:
    rows: list[WerCounts] = field(default_factory=list)
    total: WerCounts = field(default_factory=WerCounts)
    by_tag: dict[str, WerCounts] = field(default_factory=dict)

    @property
    def wer(self) -> float:
        return self.total.wer


def environment_tag(utterance_id: str) -> Optional[str]:
    """BUS/CAF/PED/STR from an `_XXX` utterance-id suffix."""
    suffix = utterance_id.rsplit("_", 1)[-1].upper() if "_" in utterance_id else ""
    return suffix if suffix in ENVIRONMENT_TAGS else None


def score_utterance(reference: list[str], hypothesis: list[str], utterance_id: str = "") -> WerCounts:
    """Counts from one minimum-edit-distance alignment; substitutions win ties over insertion+deletion."""
    if not reference:
        raise ToolkitError(f"empty reference for utterance {utterance_id!r}", "wer_eval")
    _, path = align(match_matrix(reference, hypothesis))
    counts = {op: 0 for op in EditOp}
    for step in path:
        counts[step.op] += 1
    return WerCounts(
        utterance_id=utterance_id,
        tag=environment_tag(utterance_id),
        substitutions=counts[EditOp.SUBSTITUTION],
        deletions=counts[EditOp.DELETION],
        insertions=counts[EditOp.INSERTION],
        hits=counts[EditOp.MATCH],
    )


def pool(rows: list[WerCounts], utterance_id: str = "", tag: Optional[str] = None) -> WerCounts:
    """Sum counts; the pooled WER is never the mean of per-utterance WERs."""
    return WerCounts(
        utterance_id=utterance_id,
        tag=tag,
        substitutions=sum(r.substitutions for r in rows),
        deletions=sum(r.deletions for r in rows),
        insertions=sum(r.insertions for r in rows),
        hits=sum(r.hits for r in rows),
    )


def read_trn(path: Path) -> dict[str, list[str]]:
    """`token token token (utterance-id)` per line."""
    transcripts: dict[str, list[str]] = {}
    for number, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parsed = _TRN_LINE.match(line)
        if parsed is None:
            raise HypothesisFormatError(f"{path}:{number}: missing (utterance-id)", "wer_eval")
        utterance_id = parsed.group("id")
        if utterance_id in transcripts:
            raise HypothesisFormatError(f"{path}:{number}: duplicate utterance id {utterance_id}", "wer_eval")
        transcripts[utterance_id] = parsed.group("text").split()
    return transcripts


def score_transcripts(
    references: dict[str, list[str]], hypotheses: dict[str, list[str]], group_by_tag: bool = True
) -> WerReport:
    missing = sorted(set(references) - set(hypotheses))
    extra = sorted(set(hypotheses) - set(references))
    if missing or extra:
        raise TranscriptMismatchError(missing, extra)

    rows = [score_utterance(references[u], hypotheses[u], u) for u in sorted(references)]
    report = WerReport(rows=rows, total=pool(rows, "TOTAL"))
    if group_by_tag:
        for tag in ENVIRONMENT_TAGS:
            tagged = [r for r in rows if r.tag == tag]
            if tagged:
                report.by_tag[tag] = pool(tagged, tag, tag)
    return report


def score_corpus(ref_file: Path, hyp_file: Path, group_by_tag: bool = True) -> WerReport:
    report = score_transcripts(read_trn(ref_file), read_trn(hyp_file), group_by_tag)
    logger.info(f"scored {len(report.rows)} utterances: WER {100 * report.wer:.2f}%")
    return report


def relative_reduction(baseline_wer: float, system_wer: float) -> float:
    """(baseline - system) / baseline."""
    if baseline_wer <= 0:
        raise ToolkitError(f"baseline WER must be positive, got {baseline_wer}", "wer_eval")
    return (baseline_wer - system_wer) / baseline_wer


def to_frame(report: WerReport) -> pl.DataFrame:
    """Machine-readable rows: utterances, then tag groups, then the corpus total."""
    rows = [*report.rows, *report.by_tag.values(), report.total]
    return pl.DataFrame(
        {
            "utterance_id": [r.utterance_id for r in rows],
            "tag": [r.tag or "" for r in rows],
            "ref_len": [r.ref_len for r in rows],
            "hits": [r.hits for r in rows],
            "substitutions": [r.substitutions for r in rows],
            "deletions": [r.deletions for r in rows],
            "insertions": [r.insertions for r in rows],
            "wer": [round(r.wer, 6) for r in rows],
        },
        schema={
            "utterance_id": pl.Utf8,
            "tag": pl.Utf8,
            "ref_len": pl.Int64,
            "hits": pl.Int64,
            "substitutions": pl.Int64,
            "deletions": pl.Int64,
            "insertions": pl.Int64,
            "wer": pl.Float64,
        },
    )


def format_table(report: WerReport) -> str:
    """Aligned text summary: one line per tag group and the corpus total."""
    header = f"{'set':<10}{'#ref':>8}{'corr':>8}{'sub':>8}{'del':>8}{'ins':>8}{'WER%':>9}"
    lines = [header, "-" * len(header)]
    for counts in [*report.by_tag.values(), report.total]:
        lines.append(
            f"{counts.utterance_id:<10}{counts.ref_len:>8}{counts.hits:>8}{counts.substitutions:>8}"
            f"{counts.deletions:>8}{counts.insertions:>8}{100 * counts.wer:>9.2f}"
        )
    return "\n".join(lines) + "\n"
