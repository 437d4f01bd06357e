"""Recognizer output voting: align N hypotheses into a word transition network and vote per slot."""

import logging
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from app.alignment import EditOp, align as align_sequences
from app.errors import AlignmentError, HypothesisFormatError
from app.models import RoverConfig, TieBreak

logger = logging.getLogger(__name__)

DEFAULT_CONFIDENCE = 1.0
_PUNCTUATION = str.maketrans("", "", string.punctuation)


@dataclass(frozen=True)
class Word:
    token: str
    confidence: float = DEFAULT_CONFIDENCE


@dataclass(frozen=True)
class Hypothesis:
    system_id: str
    words: tuple[Word, ...] = ()

    def __post_init__(self):
        for word in self.words:
            if not word.token:
                raise HypothesisFormatError(f"{self.system_id}: empty token")
            if not 0.0 <= word.confidence <= 1.0:
                raise HypothesisFormatError(f"{self.system_id}: confidence {word.confidence} outside [0, 1]")

    @property
    def tokens(self) -> list[str]:
        return [w.token for w in self.words]

    @classmethod
    def from_tokens(cls, system_id: str, tokens: list[str], confidence: float = DEFAULT_CONFIDENCE) -> "Hypothesis":
        return cls(system_id, tuple(Word(t, confidence) for t in tokens))


# one entry per absorbed system; None is the NULL marker
Slot = dict[str, Optional[Word]]


@dataclass
class WordTransitionNetwork:
    systems: list[str] = field(default_factory=list)
    slots: list[Slot] = field(default_factory=list)

    def tokens_of(self, system_id: str) -> list[str]:
        """A system's non-NULL tokens in slot order: its hypothesis, verbatim."""
        return [slot[system_id].token for slot in self.slots if slot[system_id] is not None]  # type: ignore[union-attr]

    def slot_tokens(self, index: int) -> set[str]:
        return {word.token for word in self.slots[index].values() if word is not None}


def normalize_token(token: str, config: RoverConfig) -> str:
    if config.strip_punctuation:
        token = token.translate(_PUNCTUATION)
    if config.casefold:
        token = token.casefold()
    return token


def align(wtn: WordTransitionNetwork, hyp: Hypothesis) -> WordTransitionNetwork:
    """Absorb hyp into a copy of wtn by minimum-edit-cost alignment against the slot sequence.

    A token matches a slot when it equals any non-NULL token there. Insertions open new
    slots in which earlier systems hold NULL; deletions give hyp a NULL.
    """
    if hyp.system_id in wtn.systems:
        raise AlignmentError(f"system {hyp.system_id} already absorbed")

    vocabulary: dict[str, int] = {}
    hyp_ids = np.array([vocabulary.setdefault(w.token, len(vocabulary)) for w in hyp.words], dtype=np.int64)
    matches = np.zeros((len(wtn.slots), len(hyp.words)), dtype=bool)
    for i in range(len(wtn.slots)):
        slot_ids = [vocabulary[t] for t in wtn.slot_tokens(i) if t in vocabulary]
        if slot_ids:
            matches[i] = np.isin(hyp_ids, slot_ids)
    _, path = align_sequences(matches)

    slots: list[Slot] = []
    for step in path:
        match step.op:
            case EditOp.MATCH | EditOp.SUBSTITUTION:
                slot = dict(wtn.slots[step.ref_index])  # type: ignore[index]
                slot[hyp.system_id] = hyp.words[step.hyp_index]  # type: ignore[index]
            case EditOp.DELETION:
                slot = dict(wtn.slots[step.ref_index])  # type: ignore[index]
                slot[hyp.system_id] = None
            case EditOp.INSERTION:
                slot = {system: None for system in wtn.systems}
                slot[hyp.system_id] = hyp.words[step.hyp_index]  # type: ignore[index]
        slots.append(slot)
    return WordTransitionNetwork(systems=[*wtn.systems, hyp.system_id], slots=slots)


def build_network(hypotheses: list[Hypothesis]) -> WordTransitionNetwork:
    """Absorb hypotheses in input order; the order affects the result."""
    wtn = WordTransitionNetwork()
    for hyp in hypotheses:
        wtn = align(wtn, hyp)
    return wtn


def vote_slot(slot: Slot, systems: list[str], config: RoverConfig) -> Optional[Word]:
    """score(w) = alpha * N_w / N_s + (1 - alpha) * conf(w); NULL scores with null_confidence."""
    counts: dict[str, int] = {}
    best_conf: dict[str, float] = {}
    first_seen: dict[str, int] = {}
    nulls = 0
    for order, system in enumerate(systems):
        word = slot[system]
        if word is None:
            nulls += 1
            continue
        counts[word.token] = counts.get(word.token, 0) + 1
        best_conf[word.token] = max(best_conf.get(word.token, 0.0), word.confidence)
        first_seen.setdefault(word.token, order)

    n_systems = len(systems)

    def rank(token: str) -> tuple[float, ...]:
        score = config.alpha * counts[token] / n_systems + (1 - config.alpha) * best_conf[token]
        match config.tie_break:
            case TieBreak.CONFIDENCE_THEN_ORDER:
                return (-score, -best_conf[token], first_seen[token])
            case TieBreak.SYSTEM_ORDER:
                return (-score, first_seen[token])

    ranked = sorted(counts, key=rank)
    if not ranked:
        return None
    winner = ranked[0]
    winner_score = config.alpha * counts[winner] / n_systems + (1 - config.alpha) * best_conf[winner]
    if nulls:
        null_score = config.alpha * nulls / n_systems + (1 - config.alpha) * config.null_confidence
        # NULL loses all ties
        if null_score > winner_score:
            return None
    return Word(winner, best_conf[winner])


def combine(hypotheses: list[Hypothesis], config: Optional[RoverConfig] = None, system_id: str = "rover") -> Hypothesis:
    config = config or RoverConfig()
    if not hypotheses:
        raise AlignmentError("no hypotheses to combine")
    if len(hypotheses) == 1:
        return hypotheses[0]
    wtn = build_network(hypotheses)
    voted = [vote_slot(slot, wtn.systems, config) for slot in wtn.slots]
    return Hypothesis(system_id, tuple(w for w in voted if w is not None))


def parse_hypothesis_line(line: str, system_id: str, config: RoverConfig) -> tuple[str, Hypothesis]:
    """`utterance-id token[:confidence] ...`; a missing confidence is 1.0."""
    fields = line.split()
    if not fields:
        raise HypothesisFormatError("empty line")
    words = []
    for item in fields[1:]:
        token, confidence = item, DEFAULT_CONFIDENCE
        head, sep, tail = item.rpartition(":")
        if sep and head:
            try:
                confidence = float(tail)
                token = head
            except ValueError:
                logger.debug(f"{item}: suffix is not a confidence, keeping whole token")
        token = normalize_token(token, config)
        if token:
            words.append(Word(token, confidence))
    return fields[0], Hypothesis(system_id, tuple(words))


def read_hypotheses(path: Path, config: Optional[RoverConfig] = None, system_id: Optional[str] = None) -> dict[str, Hypothesis]:
    config = config or RoverConfig()
    system = system_id or Path(path).stem
    hypotheses: dict[str, Hypothesis] = {}
    for number, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            utterance_id, hyp = parse_hypothesis_line(line, system, config)
        except HypothesisFormatError as e:
            raise HypothesisFormatError(f"{path}:{number}: {e}") from e
        if utterance_id in hypotheses:
            raise HypothesisFormatError(f"{path}:{number}: duplicate utterance id {utterance_id}")
        hypotheses[utterance_id] = hyp
    return hypotheses


def combine_files(hypothesis_sets: list[dict[str, Hypothesis]], config: Optional[RoverConfig] = None) -> dict[str, Hypothesis]:
    """Combine per utterance; a system lacking an utterance contributes an empty hypothesis."""
    config = config or RoverConfig()
    utterance_ids = sorted(set().union(*hypothesis_sets)) if hypothesis_sets else []
    combined = {}
    for utterance_id in utterance_ids:
        hypotheses = []
        for index, hyps in enumerate(hypothesis_sets):
            hyp = hyps.get(utterance_id)
            if hyp is None:
                logger.warning(f"system {index} has no hypothesis for {utterance_id}, absorbing it as empty")
                hyp = Hypothesis(f"system{index}")
            hypotheses.append(Hypothesis(f"{index}:{hyp.system_id}", hyp.words))
        combined[utterance_id] = combine(hypotheses, config)
    return combined


def format_hypothesis_line(utterance_id: str, hyp: Hypothesis) -> str:
    return " ".join([utterance_id, *(f"{w.token}:{w.confidence:.4f}" for w in hyp.words)])


def format_trn_line(utterance_id: str, hyp: Hypothesis) -> str:
    return " ".join([*hyp.tokens, f"({utterance_id})"])
