"""Unit-cost edit-distance alignment shared by ROVER and WER scoring.

Rows index the reference side (WTN slots or reference words), columns the hypothesis.
The table is filled row by row; insertions within a row are a running minimum, so each
row costs a handful of vectorised numpy operations.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np


class EditOp(str, Enum):
    MATCH = "match"
    SUBSTITUTION = "substitution"
    DELETION = "deletion"  # reference item with no hypothesis counterpart
    INSERTION = "insertion"  # hypothesis item with no reference counterpart


@dataclass(frozen=True)
class AlignedPair:
    op: EditOp
    ref_index: int | None
    hyp_index: int | None


def cost_table(matches: np.ndarray) -> np.ndarray:
    """(n+1) x (m+1) minimum edit costs for a boolean n x m match matrix."""
    n, m = matches.shape
    table = np.empty((n + 1, m + 1), dtype=np.int64)
    table[0] = np.arange(m + 1)
    columns = np.arange(m + 1)
    for i in range(1, n + 1):
        row = np.empty(m + 1, dtype=np.int64)
        row[0] = i
        row[1:] = np.minimum(table[i - 1, :-1] + (~matches[i - 1]), table[i - 1, 1:] + 1)
        # insertions: row[j] = min over j' <= j of row[j'] + (j - j')
        table[i] = np.minimum.accumulate(row - columns) + columns
    return table


def align(matches: np.ndarray) -> tuple[int, list[AlignedPair]]:
    """Minimum-cost alignment; ties prefer match/substitution, then deletion, then insertion."""
    matches = np.asarray(matches, dtype=bool)
    table = cost_table(matches)
    i, j = matches.shape
    path: list[AlignedPair] = []
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            hit = bool(matches[i - 1, j - 1])
            if table[i, j] == table[i - 1, j - 1] + (0 if hit else 1):
                path.append(AlignedPair(EditOp.MATCH if hit else EditOp.SUBSTITUTION, i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
        if i > 0 and table[i, j] == table[i - 1, j] + 1:
            path.append(AlignedPair(EditOp.DELETION, i - 1, None))
            i -= 1
        else:
            path.append(AlignedPair(EditOp.INSERTION, None, j - 1))
            j -= 1
    path.reverse()
    return int(table[-1, -1]), path


def match_matrix(reference: list[str], hypothesis: list[str]) -> np.ndarray:
    """Boolean n x m equality matrix, compared as integer token ids."""
    vocabulary: dict[str, int] = {}
    ref = np.array([vocabulary.setdefault(t, len(vocabulary)) for t in reference], dtype=np.int64)
    hyp = np.array([vocabulary.setdefault(t, len(vocabulary)) for t in hypothesis], dtype=np.int64)
    return ref[:, np.newaxis] == hyp[np.newaxis, :]


def edit_distance(reference: list[str], hypothesis: list[str]) -> int:
    return int(cost_table(match_matrix(reference, hypothesis))[-1, -1])
