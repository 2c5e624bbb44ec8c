"""Functional-category mapping and element-consistency scoring.

Heterogeneous system labels ("sub-heading", "narrative-text", ...) are
folded into a closed set of functional categories before ground-truth
and prediction elements are aligned.  Unmatched elements land in a
synthetic NOMATCH row/column of the confusion matrix so that misses and
spurious predictions stay visible.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import InvalidThreshold, MalformedInput
from .ingest import DocumentPage
from .textmetrics import content_text, ned, ned_upper_bound

CATEGORIES = (
    "TITLE",
    "TEXT",
    "LIST",
    "TABLE",
    "FIGURE",
    "CAPTION",
    "HEADER",
    "FOOTER",
    "FORMULA",
    "OTHER",
)
NOMATCH = "NOMATCH"
LABELS = CATEGORIES + (NOMATCH,)

_INDEX = {label: i for i, label in enumerate(LABELS)}


class CategoryMap:
    """Case-insensitive raw-label lookup with an OTHER fallback."""

    def __init__(self, entries: Optional[Mapping[str, str]] = None) -> None:
        self._entries: dict[str, str] = {}
        for raw, category in (entries or {}).items():
            category = category.strip().upper()
            if category not in CATEGORIES:
                raise MalformedInput(f"unknown category {category!r} for label {raw!r}")
            self._entries[raw.strip().casefold()] = category

    def category(self, raw_label: str) -> str:
        return self._entries.get(raw_label.strip().casefold(), "OTHER")

    def kind(self, element) -> str:
        """Similarity-routing kind: table, figure, or paragraph."""
        if element.table is not None:
            return "table"
        category = self.category(element.raw_label)
        if category == "TABLE":
            return "table"
        if category == "FIGURE":
            return "figure"
        return "paragraph"

    @classmethod
    def from_text(cls, text: str) -> "CategoryMap":
        entries = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise MalformedInput(f"category map line {lineno}: expected 'label = CATEGORY'")
            raw, category = line.split("=", 1)
            entries[raw.strip()] = category.strip()
        return cls(entries)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "CategoryMap":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def default(cls) -> "CategoryMap":
        text = resources.files("score_eval").joinpath("data/category_map.txt").read_text("utf-8")
        return cls.from_text(text)


def map_category(raw_label: str, cmap: CategoryMap) -> str:
    """Normalized lookup; unknown labels map to OTHER."""
    return cmap.category(raw_label)


def match_elements(
    gt: DocumentPage,
    pred: DocumentPage,
    sim_threshold: float = 0.5,
) -> list[tuple[int, int, float]]:
    """Greedy one-to-one element alignment by text similarity.

    Pairs are accepted highest score first, ties broken by reading-order
    proximity and then by the lower GT index; only pairs at or above the
    threshold survive.  Returns (gt index, pred index, score) triples.
    """
    if not 0.0 <= sim_threshold <= 1.0:
        raise InvalidThreshold(f"sim_threshold must be in [0, 1], got {sim_threshold}")
    candidates = []
    pred_texts = [content_text(p) for p in pred.elements]
    for i, g in enumerate(gt.elements):
        g_text = content_text(g)
        for j, p in enumerate(pred.elements):
            if ned_upper_bound(g_text, pred_texts[j]) < sim_threshold:
                continue  # length gap alone rules this pair out
            score = ned(g_text, pred_texts[j])
            if score >= sim_threshold:
                order_gap = abs(g.source_order - p.source_order)
                candidates.append((-score, order_gap, i, j, score))
    candidates.sort()
    matched_gt: set[int] = set()
    matched_pred: set[int] = set()
    matching = []
    for _, _, i, j, score in candidates:
        if i in matched_gt or j in matched_pred:
            continue
        matched_gt.add(i)
        matched_pred.add(j)
        matching.append((i, j, score))
    matching.sort()
    return matching


@dataclass
class ConfusionMatrix:
    """(K+1) x (K+1) counts over functional categories plus NOMATCH.

    Rows are ground truth, columns are predictions; the NOMATCH row
    holds spurious predictions and the NOMATCH column holds missed
    ground-truth elements.
    """

    counts: np.ndarray

    @classmethod
    def zeros(cls) -> "ConfusionMatrix":
        return cls(np.zeros((len(LABELS), len(LABELS)), dtype=np.int64))

    def add(self, gt_label: str, pred_label: str, n: int = 1) -> None:
        self.counts[_INDEX[gt_label], _INDEX[pred_label]] += n

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    def nonzero_entries(self) -> dict[tuple[str, str], int]:
        out = {}
        for i, gt_label in enumerate(LABELS):
            for j, pred_label in enumerate(LABELS):
                n = int(self.counts[i, j])
                if n:
                    out[(gt_label, pred_label)] = n
        return out

    def to_dict(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for (gt_label, pred_label), n in self.nonzero_entries().items():
            out.setdefault(gt_label, {})[pred_label] = n
        return out


def build_confusion(
    matching: Sequence[tuple[int, int, float]],
    gt: DocumentPage,
    pred: DocumentPage,
    cmap: CategoryMap,
) -> ConfusionMatrix:
    """Fill the matrix from a one-to-one matching plus the leftovers."""
    matrix = ConfusionMatrix.zeros()
    matched_gt = {i for i, _, _ in matching}
    matched_pred = {j for _, j, _ in matching}
    for i, j, _ in matching:
        matrix.add(cmap.category(gt.elements[i].raw_label), cmap.category(pred.elements[j].raw_label))
    for i, g in enumerate(gt.elements):
        if i not in matched_gt:
            matrix.add(cmap.category(g.raw_label), NOMATCH)
    for j, p in enumerate(pred.elements):
        if j not in matched_pred:
            matrix.add(NOMATCH, cmap.category(p.raw_label))
    return matrix


def consistency_score(matrix: ConfusionMatrix) -> float:
    """Macro-averaged per-category F1 over categories carrying any mass.

    NOMATCH never gets its own F1; it only contributes false positives
    and false negatives to real categories.  An empty matrix scores 1.
    """
    counts = matrix.counts
    scores = []
    for k, _ in enumerate(CATEGORIES):
        row_mass = int(counts[k, :].sum())
        col_mass = int(counts[:, k].sum())
        if row_mass == 0 and col_mass == 0:
            continue
        tp = int(counts[k, k])
        fp = col_mass - tp
        fn = row_mass - tp
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return sum(scores) / len(scores) if scores else 1.0
