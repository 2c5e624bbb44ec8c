"""Format-agnostic table scoring.

Tables are compared as sets of (row, col, rowspan, colspan, content)
tuples regardless of the markup they arrived in.  Detection is
content-based, cell accuracy is maximized over bounded grid shifts, and
hierarchical structure is scored with a tree edit distance normalized by
the larger tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidThreshold, OverlappingCells
from .textmetrics import DEFAULT_TOKENIZER, TokenizerConfig, bag_similarity, ned, tokenize

# Preference for higher-cardinality matchings among equal-similarity
# optima; small enough never to override a real similarity difference.
_CARDINALITY_BONUS = 1e-9


@dataclass(frozen=True, order=True)
class Cell:
    """One table cell anchored at (row, col), spanning a grid rectangle."""

    row: int
    col: int
    rowspan: int = 1
    colspan: int = 1
    content: str = ""

    def positions(self) -> Iterator[tuple[int, int]]:
        """Unit grid positions covered by this cell."""
        for r in range(self.row, self.row + self.rowspan):
            for c in range(self.col, self.col + self.colspan):
                yield r, c


@dataclass(frozen=True)
class NormalizedTable:
    """Canonical cell-tuple representation shared by all table parsers."""

    cells: tuple[Cell, ...] = ()

    @classmethod
    def from_cells(cls, cells: Sequence[Cell]) -> "NormalizedTable":
        """Sort, validate occupancy, and freeze a cell collection."""
        ordered = tuple(sorted(cells, key=lambda c: (c.row, c.col)))
        occupied: dict[tuple[int, int], Cell] = {}
        for cell in ordered:
            for pos in cell.positions():
                other = occupied.get(pos)
                if other is not None:
                    raise OverlappingCells(
                        f"cells {other.content!r} at ({other.row},{other.col}) and "
                        f"{cell.content!r} at ({cell.row},{cell.col}) both cover {pos}"
                    )
                occupied[pos] = cell
        return cls(ordered)

    @property
    def n_rows(self) -> int:
        return max((c.row + c.rowspan for c in self.cells), default=0)

    @property
    def n_cols(self) -> int:
        return max((c.col + c.colspan for c in self.cells), default=0)

    def is_empty(self) -> bool:
        return not self.cells

    def occupancy(self) -> dict[tuple[int, int], Cell]:
        return {pos: cell for cell in self.cells for pos in cell.positions()}

    def flat_text(self) -> str:
        """Cell contents in (row, col) order, space separated."""
        return " ".join(c.content for c in self.cells if c.content)


@dataclass(frozen=True)
class DetectionResult:
    """Content-based table detection outcome for one page."""

    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    f_beta: float
    pairs: tuple[tuple[int, int, float], ...]  # (pred index, gt index, similarity)


@dataclass(frozen=True)
class CellAccuracy:
    """Shift-tolerant cell scores and the shift that attained them."""

    content_acc: float
    index_acc: float
    best_shift: tuple[int, int]


def table_similarity(
    p: NormalizedTable,
    g: NormalizedTable,
    cfg: TokenizerConfig = DEFAULT_TOKENIZER,
) -> float:
    """Position-free bag overlap of tokenized cell contents."""
    return bag_similarity(tokenize(p.flat_text(), cfg), tokenize(g.flat_text(), cfg))


def match_tables(
    preds: Sequence[NormalizedTable],
    gts: Sequence[NormalizedTable],
    tau: float = 0.5,
    beta: float = 1.0,
    cfg: TokenizerConfig = DEFAULT_TOKENIZER,
) -> DetectionResult:
    """One-to-one table matching maximizing total content similarity.

    Only pairs at or above the similarity threshold count; the optimal
    assignment is computed exactly, preferring more pairs among
    equal-similarity optima.
    """
    if not 0.0 < tau <= 1.0:
        raise InvalidThreshold(f"tau must be in (0, 1], got {tau}")
    if beta <= 0.0:
        raise InvalidThreshold(f"beta must be positive, got {beta}")

    pairs: list[tuple[int, int, float]] = []
    if preds and gts:
        sims = np.array([[table_similarity(p, g, cfg) for g in gts] for p in preds])
        valid = sims >= tau
        profit = np.where(valid, sims + _CARDINALITY_BONUS, 0.0)
        rows, cols = linear_sum_assignment(profit, maximize=True)
        pairs = sorted(
            (int(i), int(j), float(sims[i, j]))
            for i, j in zip(rows, cols)
            if valid[i, j]
        )

    tp = len(pairs)
    fp = len(preds) - tp
    fn = len(gts) - tp
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    denom = beta * beta * precision + recall
    f_beta = (1 + beta * beta) * precision * recall / denom if denom else 0.0
    return DetectionResult(tp, fp, fn, precision, recall, f_beta, tuple(pairs))


def flatten(t: NormalizedTable, axis: str = "row") -> list[str]:
    """One string per index along the axis; spanned cells count once.

    Cells are joined with single spaces in increasing cross-axis order;
    indices with no anchored cell yield empty strings.
    """
    if axis not in ("row", "col"):
        raise ValueError(f"axis must be 'row' or 'col', got {axis!r}")
    size = t.n_rows if axis == "row" else t.n_cols
    buckets: list[list[Cell]] = [[] for _ in range(size)]
    for cell in t.cells:
        buckets[cell.row if axis == "row" else cell.col].append(cell)
    key = (lambda c: c.col) if axis == "row" else (lambda c: c.row)
    return [
        " ".join(c.content for c in sorted(bucket, key=key) if c.content)
        for bucket in buckets
    ]


def _axis_score(
    p_strings: Sequence[str],
    g_strings: Sequence[str],
    delta: int,
    memo: dict[tuple[str, str], float],
) -> tuple[float, float]:
    """Length-weighted ned sum over aligned axis strings, plus the weight."""
    shifted = {i + delta: s for i, s in enumerate(g_strings)}
    num = den = 0.0
    for i in set(range(len(p_strings))) | set(shifted):
        s = p_strings[i] if 0 <= i < len(p_strings) else ""
        g = shifted.get(i, "")
        weight = max(len(s), len(g))
        if weight == 0:
            continue
        pair = (s, g)
        score = memo.get(pair)
        if score is None:
            score = ned(s, g)
            memo[pair] = score
        num += weight * score
        den += weight
    return num, den


def cell_alignment(
    p: NormalizedTable,
    g: NormalizedTable,
    shift: tuple[int, int] = (0, 0),
    index_gate: float = 0.5,
    _memo: Optional[dict[tuple[str, str], float]] = None,
) -> tuple[float, float]:
    """Content and index accuracy after shifting the GT grid by `shift`.

    Content is the better of the row-axis and column-axis flattened
    similarities: a merge along one axis leaves the other axis intact,
    so granularity differences are not penalized while the score stays
    orientation-neutral.  Index accuracy is the fraction of GT unit
    cells whose shifted position is occupied in the prediction by a
    cell whose content clears the gate.
    """
    memo = _memo if _memo is not None else {}
    d_row, d_col = shift

    num_r, den_r = _axis_score(flatten(p, "row"), flatten(g, "row"), d_row, memo)
    num_c, den_c = _axis_score(flatten(p, "col"), flatten(g, "col"), d_col, memo)
    row_score = num_r / den_r if den_r else 1.0
    col_score = num_c / den_c if den_c else 1.0
    content = max(row_score, col_score)

    occupied = p.occupancy()
    hits = total = 0
    for cell in g.cells:
        for r, c in cell.positions():
            total += 1
            pred_cell = occupied.get((r + d_row, c + d_col))
            if pred_cell is None:
                continue
            pair = (pred_cell.content, cell.content)
            score = memo.get(pair)
            if score is None:
                score = ned(*pair)
                memo[pair] = score
            if score >= index_gate:
                hits += 1
    index = hits / total if total else 1.0
    return content, index


def content_index_accuracy(
    p: NormalizedTable,
    g: NormalizedTable,
    n: int = 2,
    index_gate: float = 0.5,
) -> CellAccuracy:
    """Best cell alignment over all grid shifts within [-n, n] squared.

    One shift is chosen jointly for both scores; ties prefer the
    smallest displacement, then lexicographic order, so results do not
    depend on evaluation order.
    """
    if n < 0:
        raise InvalidThreshold(f"shift bound must be >= 0, got {n}")
    memo: dict[tuple[str, str], float] = {}
    best_rank: Optional[tuple[float, int, tuple[int, int]]] = None
    best = (0.0, 0.0, (0, 0))
    for d_row in range(-n, n + 1):
        for d_col in range(-n, n + 1):
            content, index = cell_alignment(p, g, (d_row, d_col), index_gate, memo)
            rank = (-(content + index), abs(d_row) + abs(d_col), (d_row, d_col))
            if best_rank is None or rank < best_rank:
                best_rank = rank
                best = (content, index, (d_row, d_col))
    return CellAccuracy(content_acc=best[0], index_acc=best[1], best_shift=best[2])


@dataclass
class TableTree:
    """Rooted ordered tree over 'table' / 'tr' / 'td' nodes."""

    label: str
    content: str = ""
    rowspan: int = 1
    colspan: int = 1
    children: list["TableTree"] = field(default_factory=list)

    def size(self) -> int:
        return 1 + sum(child.size() for child in self.children)


def build_table_tree(t: NormalizedTable) -> TableTree:
    """table -> one tr per row -> one td per anchored cell, in col order."""
    root = TableTree("table")
    by_row: dict[int, list[Cell]] = {}
    for cell in t.cells:
        by_row.setdefault(cell.row, []).append(cell)
    for row in range(t.n_rows):
        tr = TableTree("tr")
        for cell in sorted(by_row.get(row, []), key=lambda c: c.col):
            tr.children.append(
                TableTree("td", content=cell.content, rowspan=cell.rowspan, colspan=cell.colspan)
            )
        root.children.append(tr)
    return root


def _substitution_cost(a: TableTree, b: TableTree) -> float:
    if a.label != b.label:
        return 1.0
    if a.label == "td":
        if a.rowspan != b.rowspan or a.colspan != b.colspan:
            return 1.0
        return 1.0 - ned(a.content, b.content)
    return 0.0


class _Annotated:
    """Postorder view with leftmost-descendant indices and keyroots."""

    def __init__(self, root: TableTree) -> None:
        self.nodes: list[TableTree] = []
        self.lmds: list[int] = []
        post: list[tuple[TableTree, int]] = []

        def walk(node: TableTree) -> int:
            first = None
            for child in node.children:
                lmd = walk(child)
                if first is None:
                    first = lmd
            self.nodes.append(node)
            index = len(self.nodes) - 1
            self.lmds.append(first if first is not None else index)
            post.append((node, index))
            return self.lmds[index]

        walk(root)
        keyroots = {self.lmds[i]: i for i in range(len(self.nodes))}
        self.keyroots = sorted(keyroots.values())


def tree_edit_distance(a: TableTree, b: TableTree) -> float:
    """Ordered tree edit distance with unit insert/delete costs."""
    ta, tb = _Annotated(a), _Annotated(b)
    la, lb = ta.lmds, tb.lmds
    na, nb = ta.nodes, tb.nodes
    dist = np.zeros((len(na), len(nb)))

    for i in ta.keyroots:
        for j in tb.keyroots:
            m = i - la[i] + 2
            n = j - lb[j] + 2
            fd = np.zeros((m, n))
            ioff = la[i] - 1
            joff = lb[j] - 1
            for x in range(1, m):
                fd[x][0] = fd[x - 1][0] + 1.0
            for y in range(1, n):
                fd[0][y] = fd[0][y - 1] + 1.0
            for x in range(1, m):
                for y in range(1, n):
                    if la[i] == la[x + ioff] and lb[j] == lb[y + joff]:
                        fd[x][y] = min(
                            fd[x - 1][y] + 1.0,
                            fd[x][y - 1] + 1.0,
                            fd[x - 1][y - 1] + _substitution_cost(na[x + ioff], nb[y + joff]),
                        )
                        dist[x + ioff][y + joff] = fd[x][y]
                    else:
                        p = la[x + ioff] - 1 - ioff
                        q = lb[y + joff] - 1 - joff
                        fd[x][y] = min(
                            fd[x - 1][y] + 1.0,
                            fd[x][y - 1] + 1.0,
                            fd[p][q] + dist[x + ioff][y + joff],
                        )
    return float(dist[-1][-1])


def teds(a: TableTree, b: TableTree) -> float:
    """Tree edit distance similarity normalized by the larger tree."""
    distance = tree_edit_distance(a, b)
    return max(0.0, 1.0 - distance / max(a.size(), b.size()))
