"""Contrastive pair corpus: cross-class and same-class index pairs.

Pairs are sampled with replacement across pairs (repeats are fine for the
training objective), but a same-class pair never pairs a row with itself.
The corpus deliberately mixes every source row into both the train and test
pair splits; see the README for why that matters when reading pair-level
accuracy numbers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .data import FeatureTable


class SamplePair(NamedTuple):
    left: int
    right: int
    similar: bool


@dataclass
class PairSet:
    """Index pairs into a source FeatureTable plus their similarity flags."""

    source: FeatureTable
    left: np.ndarray  # (m,) int64 row indices
    right: np.ndarray  # (m,) int64 row indices
    similar: np.ndarray  # (m,) bool
    counts: tuple[int, int, int]  # (n_diff, n_same0, n_same1)

    def __post_init__(self):
        self.left = np.asarray(self.left, dtype=np.int64)
        self.right = np.asarray(self.right, dtype=np.int64)
        self.similar = np.asarray(self.similar, dtype=bool)
        m = self.left.shape[0]
        if self.right.shape[0] != m or self.similar.shape[0] != m:
            raise ValueError("pair arrays must have equal length")
        if sum(self.counts) != m:
            raise ValueError(f"counts {self.counts} do not sum to {m} pairs")
        if m and (
            self.left.min() < 0
            or self.right.min() < 0
            or self.left.max() >= self.source.n
            or self.right.max() >= self.source.n
        ):
            raise ValueError("pair index out of range for source table")

    def __len__(self) -> int:
        return self.left.shape[0]

    def __getitem__(self, i: int) -> SamplePair:
        return SamplePair(int(self.left[i]), int(self.right[i]), bool(self.similar[i]))

    def __iter__(self) -> Iterator[SamplePair]:
        for i in range(len(self)):
            yield self[i]


def split_by_label(ft: FeatureTable, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices of class-0 and class-1 rows, each shuffled per the seed."""
    rng = np.random.default_rng(seed)
    idx0 = rng.permutation(np.flatnonzero(ft.labels == 0))
    idx1 = rng.permutation(np.flatnonzero(ft.labels == 1))
    return idx0, idx1


def _counts_from(ft: FeatureTable, left, right, similar) -> tuple[int, int, int]:
    n_diff = int((~similar).sum())
    same0 = int((similar & (ft.labels[left] == 0)).sum())
    same1 = int((similar & (ft.labels[left] == 1)).sum())
    return n_diff, same0, same1


def generate_pairs(
    ft: FeatureTable, n_diff: int, n_same0: int, n_same1: int, seed: int
) -> PairSet:
    """Draw exactly the requested pair counts, deterministically per seed.

    Cross-class pairs take their left row from class 0 and right row from
    class 1. Same-class pairs draw two distinct positions from the shuffled
    class index list (an offset draw, so no rejection loop is needed).
    """
    for name, v in (("n_diff", n_diff), ("n_same0", n_same0), ("n_same1", n_same1)):
        if v < 0:
            raise ValueError(f"{name} must be >= 0, got {v}")
    child = np.random.SeedSequence(seed).generate_state(2)
    idx0, idx1 = split_by_label(ft, int(child[0]))
    rng = np.random.default_rng(int(child[1]))

    if n_diff > 0 and (idx0.size == 0 or idx1.size == 0):
        raise ValueError("cross-class pairs need at least one sample per class")
    for c, n_same, idx in ((0, n_same0, idx0), (1, n_same1, idx1)):
        if n_same > 0 and idx.size < 2:
            raise ValueError(f"class {c} needs >= 2 samples for same-class pairs")

    left_parts, right_parts = [], []
    if n_diff > 0:
        left_parts.append(idx0[rng.integers(0, idx0.size, n_diff)])
        right_parts.append(idx1[rng.integers(0, idx1.size, n_diff)])
    for n_same, idx in ((n_same0, idx0), (n_same1, idx1)):
        if n_same > 0:
            p = rng.integers(0, idx.size, n_same)
            q = (p + 1 + rng.integers(0, idx.size - 1, n_same)) % idx.size
            left_parts.append(idx[p])
            right_parts.append(idx[q])

    if left_parts:
        left = np.concatenate(left_parts)
        right = np.concatenate(right_parts)
    else:
        left = np.empty(0, dtype=np.int64)
        right = np.empty(0, dtype=np.int64)
    similar = np.concatenate(
        [np.zeros(n_diff, dtype=bool), np.ones(n_same0 + n_same1, dtype=bool)]
    )
    return PairSet(ft, left, right, similar, (n_diff, n_same0, n_same1))


def split_pairs(ps: PairSet, fraction: float, seed: int) -> tuple[PairSet, PairSet]:
    """Shuffle the pair list and split it: round(fraction*N) / remainder."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ps))
    n_first = round(fraction * len(ps))
    parts = []
    for sel in (perm[:n_first], perm[n_first:]):
        left, right, similar = ps.left[sel], ps.right[sel], ps.similar[sel]
        counts = _counts_from(ps.source, left, right, similar)
        parts.append(PairSet(ps.source, left, right, similar, counts))
    return parts[0], parts[1]


def save_pairs_csv(ps: PairSet, path: str | Path):
    with open(path, "w", newline="\n") as fh:
        fh.write("left_index,right_index,similar\n")
        for i in range(len(ps)):
            fh.write(f"{ps.left[i]},{ps.right[i]},{int(ps.similar[i])}\n")


def load_pairs_csv(path: str | Path, ft: FeatureTable) -> PairSet:
    """Read a pair CSV back and re-attach it to its source table.

    The stored similarity flags are audited against the table labels so a
    mismatched table is caught immediately.
    """
    left, right, similar = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["left_index", "right_index", "similar"]:
            raise ValueError(f"{path}: not a pair file")
        for row in reader:
            left.append(int(row[0]))
            right.append(int(row[1]))
            similar.append(bool(int(row[2])))
    left = np.array(left, dtype=np.int64)
    right = np.array(right, dtype=np.int64)
    similar = np.array(similar, dtype=bool)
    expected = ft.labels[left] == ft.labels[right] if len(left) else similar
    if not np.array_equal(similar, expected):
        raise ValueError(f"{path}: similarity flags do not match the table labels")
    counts = _counts_from(ft, left, right, similar)
    return PairSet(ft, left, right, similar, counts)
