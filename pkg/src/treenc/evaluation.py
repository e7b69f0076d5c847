"""Metrics, interest-stratified splitting, and depth-level breakdowns."""

from __future__ import annotations

import json
import logging
import random
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from .dom import DomTree
from .errors import FormatError, TooFewInterestsError, VersionError

logger = logging.getLogger(__name__)

SPLIT_FILE_VERSION = 1
PARTITIONS = ("train", "val", "test")

PRF1 = namedtuple("PRF1", ["precision", "recall", "f1"])


def prf1(predictions, gold) -> PRF1:
    """Positive-class precision/recall/F1 pooled over nodes.

    Entries with gold < 0 (unlabeled) are excluded. Empty denominators
    yield 0 by convention and are logged.
    """
    pred = np.asarray(predictions)
    gold = np.asarray(gold)
    if pred.shape != gold.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gold.shape}")
    keep = gold >= 0
    pred, gold = pred[keep], gold[keep]
    tp = int(np.sum((pred == 1) & (gold == 1)))
    fp = int(np.sum((pred == 1) & (gold == 0)))
    fn = int(np.sum((pred == 0) & (gold == 1)))
    if tp + fp == 0 or tp + fn == 0:
        logger.debug("degenerate confusion counts: tp=%d fp=%d fn=%d", tp, fp, fn)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF1(precision, recall, f1)


@dataclass
class SplitSpec:
    seed: int
    ratios: tuple
    assignments: list = field(default_factory=list)  # one {interest: partition} per replicate

    @property
    def replicates(self) -> int:
        return len(self.assignments)

    def partition(self, trees: list[DomTree], replicate: int, name: str) -> list[DomTree]:
        """Trees whose interest falls in the named partition (1-based replicate)."""
        if name not in PARTITIONS:
            raise ValueError(f"unknown partition {name!r}")
        table = self.assignments[replicate - 1]
        return [t for t in trees if table.get(t.interest) == name]

    def to_dict(self) -> dict:
        return {
            "version": SPLIT_FILE_VERSION,
            "seed": self.seed,
            "ratios": list(self.ratios),
            "assignments": self.assignments,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SplitSpec":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("version") != SPLIT_FILE_VERSION:
            raise VersionError(f"unknown split file version {doc.get('version')!r}")
        try:
            spec = cls(seed=doc["seed"], ratios=tuple(doc["ratios"]),
                       assignments=doc["assignments"])
        except KeyError as exc:
            raise FormatError(f"split file missing field {exc}") from exc
        for i, table in enumerate(spec.assignments, start=1):
            bad = {p for p in table.values() if p not in PARTITIONS}
            if bad:
                raise FormatError(f"replicate {i}: unknown partitions {sorted(bad)}")
        return spec


def _partition_sizes(n: int, ratios) -> tuple[int, int, int]:
    """Floor train and test against the ratio, remainder to val, then bump
    empty partitions from train so every requested partition is populated."""
    n_train = int(ratios[0] * n)
    n_test = int(ratios[2] * n)
    n_val = n - n_train - n_test
    while ratios[1] > 0 and n_val < 1 and n_train > 1:
        n_train -= 1
        n_val += 1
    while ratios[2] > 0 and n_test < 1 and n_train > 1:
        n_train -= 1
        n_test += 1
    return n_train, n_val, n_test


def split_by_interest(trees: list[DomTree], seed: int,
                      ratios=(0.75, 0.10, 0.15), replicates: int = 5) -> SplitSpec:
    """Assign whole interests to train/val/test, independently per replicate.

    Every tree follows its interest, so no interest is shared across
    partitions of a replicate.
    """
    interests = sorted({t.interest for t in trees})
    if len(interests) < 3:
        raise TooFewInterestsError(
            f"need >= 3 distinct interests, found {len(interests)}"
        )
    rng = random.Random(seed)
    n_train, n_val, n_test = _partition_sizes(len(interests), ratios)
    assignments = []
    for _ in range(replicates):
        order = interests[:]
        rng.shuffle(order)
        table = {}
        for i, interest in enumerate(order):
            if i < n_train:
                table[interest] = "train"
            elif i < n_train + n_val:
                table[interest] = "val"
            else:
                table[interest] = "test"
        assignments.append(table)
    return SplitSpec(seed=seed, ratios=tuple(ratios), assignments=assignments)


def tree_depth(level_idx) -> float:
    """Tree depth for the breakdown: the mean node level."""
    return float(np.mean(level_idx))


def depth_report(per_tree: list[tuple[float, float]], n_levels: int = 5) -> list[dict]:
    """Bucket per-tree (depth, f1) pairs into equal-width depth intervals.

    Returns one record per level: {lo, hi, n_trees, mean_f1}; mean_f1 is
    None for empty levels. A degenerate depth range collapses into the
    first level.
    """
    if not per_tree:
        raise ValueError("no evaluated trees")
    depths = np.array([d for d, _ in per_tree], dtype=np.float64)
    scores = np.array([f for _, f in per_tree], dtype=np.float64)
    lo, hi = float(depths.min()), float(depths.max())
    width = (hi - lo) / n_levels
    levels = []
    for j in range(n_levels):
        lev_lo = lo + j * width
        lev_hi = lo + (j + 1) * width
        if width == 0.0:
            members = np.full(len(depths), j == 0)
        else:
            upper = depths < lev_hi if j < n_levels - 1 else depths <= lev_hi
            members = (depths >= lev_lo) & upper
        count = int(members.sum())
        levels.append({
            "lo": lev_lo,
            "hi": lev_hi,
            "n_trees": count,
            "mean_f1": float(scores[members].mean()) if count else None,
        })
    return levels


@dataclass
class EvalReport:
    model: str
    splits: list = field(default_factory=list)
    macro: dict = field(default_factory=dict)
    depth_levels: list = field(default_factory=list)
    per_tree: list = field(default_factory=list)

    def finalize(self) -> "EvalReport":
        """Fill the macro block from the per-split entries."""
        if self.splits:
            self.macro = {
                "precision": float(np.mean([s["precision"] for s in self.splits])),
                "recall": float(np.mean([s["recall"] for s in self.splits])),
                "f1": float(np.mean([s["f1"] for s in self.splits])),
            }
        if self.per_tree:
            self.depth_levels = depth_report(
                [(r["depth"], r["f1"]) for r in self.per_tree]
            )
        return self

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "model": self.model,
            "splits": self.splits,
            "macro": self.macro,
            "depth_levels": self.depth_levels,
            "per_tree": self.per_tree,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def format_results_table(reports: list[EvalReport]) -> str:
    """Plain-text results table: one model per row, one split per column,
    plus the macro F1 with its precision/recall."""
    replicates = max((len(r.splits) for r in reports), default=0)
    header = ["model"] + [f"split-{i + 1}" for i in range(replicates)]
    header += ["macro-F1 ( P / R )"]
    rows = [header]
    for rep in reports:
        by_rep = {s["replicate"]: s for s in rep.splits}
        cells = [rep.model]
        for i in range(1, replicates + 1):
            entry = by_rep.get(i)
            cells.append(f"{100 * entry['f1']:.2f}" if entry else "-")
        m = rep.macro
        cells.append(
            f"{100 * m['f1']:.2f} ( {100 * m['precision']:.2f} / {100 * m['recall']:.2f} )"
            if m else "-"
        )
        rows.append(cells)
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for r, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
        if r == 0:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines)
