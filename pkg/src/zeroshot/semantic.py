"""Nearest-label search over class vectors.

A SemanticIndex holds one point per class label and answers ranked
k-nearest queries under Euclidean distance.  Equidistant points are
ordered by ascending label, and the KD-tree traversal applies exactly the
same (distance, label) ordering as the exhaustive scan, so the two are
interchangeable result-for-result; `scan_k_nearest` exists as the slow
reference path.

Tree shape: median split on the axis of maximum spread, leaves of up to 8
points.  Distances are accumulated in float64 from the float32 inputs.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from .zslf import ClassVectorSet

LEAF_SIZE = 8


@dataclass
class RankedLabels:
    """Labels sorted by nondecreasing distance from a query point."""

    entries: list[tuple[str, float]]

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.entries]

    def __len__(self):
        return len(self.entries)


class _Leaf:
    __slots__ = ("idx",)

    def __init__(self, idx):
        self.idx = idx


class _Node:
    __slots__ = ("axis", "split", "left", "right")

    def __init__(self, axis, split, left, right):
        self.axis = axis
        self.split = split
        self.left = left
        self.right = right


def _pair_distances(points64: np.ndarray, q64: np.ndarray) -> np.ndarray:
    # Shared by tree and scan so both report bit-identical float64 distances.
    diff = points64 - q64
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


class SemanticIndex:
    """Immutable KD-tree over one class vector per label."""

    def __init__(self, dim: int, labels: list[str], points: np.ndarray):
        self.dim = dim
        self.labels = labels
        self.points = np.ascontiguousarray(points, dtype=np.float32)
        self._points64 = self.points.astype(np.float64)
        self._root = self._build(np.arange(len(labels)))

    def __len__(self):
        return len(self.labels)

    def _build(self, idx):
        if len(idx) <= LEAF_SIZE:
            return _Leaf(idx)
        pts = self._points64[idx]
        axis = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
        order = idx[np.argsort(pts[:, axis], kind="stable")]
        mid = len(order) // 2
        split = self._points64[order[mid], axis]
        return _Node(axis, split, self._build(order[:mid]), self._build(order[mid:]))

    def _query(self, node, q64, k, best):
        # `best` is a (distance, label, row) list kept sorted, capped at k.
        if isinstance(node, _Leaf):
            dists = _pair_distances(self._points64[node.idx], q64)
            for d, i in zip(dists, node.idx):
                key = (d, self.labels[i], i)
                if len(best) < k:
                    bisect.insort(best, key)
                elif key < best[-1]:
                    bisect.insort(best, key)
                    best.pop()
            return
        plane = q64[node.axis] - node.split
        near, far = (node.left, node.right) if plane <= 0 else (node.right, node.left)
        self._query(near, q64, k, best)
        # <= keeps equidistant far-side points reachable for the label tie-break.
        if len(best) < k or abs(plane) <= best[-1][0]:
            self._query(far, q64, k, best)

    def _check_query(self, point, k):
        point = np.asarray(point, dtype=np.float32)
        if point.shape != (self.dim,):
            raise ValueError(f"query point has shape {point.shape}, index dim is {self.dim}")
        if not 1 <= k <= len(self.labels):
            raise ValueError(f"k must be in [1, {len(self.labels)}], got {k}")
        return point.astype(np.float64)


def build_index(cv: ClassVectorSet, candidate_labels: list[str] | None = None) -> SemanticIndex:
    """Index the class vectors for `candidate_labels` (all labels when omitted)."""
    if len(cv) == 0:
        raise ValueError("cannot index an empty class-vector set")
    if candidate_labels is None:
        candidate_labels = cv.labels
    else:
        candidate_labels = list(candidate_labels)
        if not candidate_labels:
            raise ValueError("candidate label set is empty")
        unknown = sorted(set(candidate_labels) - set(cv.labels))
        if unknown:
            raise ValueError(f"candidate labels without class vectors: {unknown}")
        if len(set(candidate_labels)) != len(candidate_labels):
            raise ValueError("duplicate candidate labels")
    labels = sorted(candidate_labels)
    return SemanticIndex(cv.dim, labels, np.stack([cv[l] for l in labels]))


def query_k_nearest(index: SemanticIndex, point, k: int) -> RankedLabels:
    """The k nearest labels to `point`, nearest first, ties broken by label."""
    q64 = index._check_query(point, k)
    best: list[tuple[float, str, int]] = []
    index._query(index._root, q64, k, best)
    return RankedLabels(entries=[(label, float(d)) for d, label, _ in best])


def scan_k_nearest(index: SemanticIndex, point, k: int) -> RankedLabels:
    """Exhaustive O(N*dim) reference for query_k_nearest; identical output."""
    q64 = index._check_query(point, k)
    dists = _pair_distances(index._points64, q64)
    order = np.lexsort((np.asarray(index.labels), dists))[:k]
    return RankedLabels(entries=[(index.labels[i], float(dists[i])) for i in order])
