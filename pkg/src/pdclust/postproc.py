"""Partition post-processing: similarity, selection, heterogeneity, summaries."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .schema import CONTINUOUS, Dataset, Schema

logger = logging.getLogger(__name__)


def relabel(labels) -> np.ndarray:
    """Contiguous 0..r-1 relabelling by order of first appearance."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse].astype(np.int32)


def adjacency(labels) -> np.ndarray:
    """Boolean co-membership matrix of one partition."""
    labels = np.asarray(labels)
    return labels[:, None] == labels[None, :]


def similarity(partitions) -> np.ndarray:
    """Average co-clustering frequency over stored partitions.

    Streams over partitions so only one n x n accumulator is live.
    """
    partitions = np.asarray(partitions)
    if partitions.ndim != 2 or partitions.shape[0] < 1:
        raise ValueError("need at least one partition of equal length")
    n = partitions.shape[1]
    acc = np.zeros((n, n))
    for row in partitions:
        acc += adjacency(row)
    acc /= partitions.shape[0]
    return acc


def dahl_select(partitions, sim: np.ndarray) -> tuple[np.ndarray, float]:
    """Stored partition whose adjacency is closest to the average similarity.

    Returns ``(labels, squared distance)``; ties break to the earliest
    iteration. The result is always one of the stored partitions.
    """
    partitions = np.asarray(partitions)
    if partitions.shape[1] != sim.shape[0]:
        raise ValueError("partition length does not match similarity matrix")
    best_idx, best_dist = 0, np.inf
    for idx, row in enumerate(partitions):
        dist = float(((adjacency(row) - sim) ** 2).sum())
        if dist < best_dist:
            best_idx, best_dist = idx, dist
    return partitions[best_idx].copy(), best_dist


def min_hm_select(partitions, expanded, weights) -> tuple[np.ndarray, float]:
    """Stored partition with the smallest heterogeneity measure."""
    partitions = np.asarray(partitions)
    best_idx, best_hm = 0, np.inf
    for idx, row in enumerate(partitions):
        hm = hm_measure(row, expanded, weights)
        if hm < best_hm:
            best_idx, best_hm = idx, hm
    return partitions[best_idx].copy(), best_hm


def expand_variables(dataset: Dataset, schema: Schema) -> np.ndarray:
    """Scale-free design matrix used by the heterogeneity measure.

    Numeric columns are standardized (unweighted, population variance),
    two-level categorical columns pass through, and categorical variables
    with more than two levels expand to one indicator column per level.
    Columns follow the input variable order.
    """
    cols = []
    for k in schema.input_order():
        v = schema.variables[k]
        y = dataset.values[:, schema.input_index[k]]
        if v.kind == CONTINUOUS:
            sd = y.std()
            if sd == 0.0:
                logger.warning("constant column %s contributes zeros", v.name)
                cols.append(np.zeros_like(y))
            else:
                cols.append((y - y.mean()) / sd)
        elif v.n_levels == 2:
            cols.append(y.astype(float))
        else:
            codes = y.astype(int)
            block = np.zeros((dataset.n, v.n_levels))
            block[np.arange(dataset.n), codes] = 1.0
            cols.extend(block.T)
    return np.column_stack(cols)


def hm_measure(partition, expanded, weights) -> float:
    """Total weighted within-cluster variance over the expanded columns.

    ``HM = sum_k n_k sum_j S2_kj`` where ``S2_kj`` is the weighted variance
    of column ``j`` inside cluster ``k`` (weights renormalized within the
    cluster). All-singleton partitions give exactly zero.
    """
    partition = np.asarray(partition)
    expanded = np.asarray(expanded, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = 0.0
    for lbl in np.unique(partition):
        members = partition == lbl
        w = weights[members]
        w = w / w.sum()
        y = expanded[members]
        m1 = w @ y
        m2 = w @ (y * y)
        total += members.sum() * float((m2 - m1 * m1).sum())
    return total


@dataclass
class ClusterSummary:
    """Per-cluster weighted summary table in the input variable order.

    One row per cluster (largest weighted share first) followed by a
    population row. Non-nominal variables report weighted means; nominal
    variables report weighted category shares; the final column is the
    weighted group share in percent (population row: total weight).
    """

    header: list[str]
    rows: np.ndarray
    cluster_ids: list[str]

    def to_lines(self, fmt: str = "%.6g") -> list[str]:
        out = [",".join(["group"] + self.header)]
        for cid, row in zip(self.cluster_ids, self.rows):
            out.append(",".join([cid] + [fmt % x for x in row]))
        return out


def cluster_summary(partition, dataset: Dataset, schema: Schema) -> ClusterSummary:
    """Weighted per-cluster means, nominal shares, and size shares."""
    partition = np.asarray(partition)
    w = dataset.weights
    header: list[str] = []
    for k in schema.input_order():
        v = schema.variables[k]
        if v.kind != "nominal":
            header.append(v.name)
        else:
            header.extend(f"{v.name}:{lab}" for lab in v.levels)
    header.append("size_pct")

    labels = np.unique(partition)
    shares = np.array([w[partition == lbl].sum() for lbl in labels])
    order = np.argsort(-shares, kind="stable")

    def stats_for(mask, size_value):
        ww = w[mask] / w[mask].sum()
        row = []
        for k in schema.input_order():
            v = schema.variables[k]
            y = dataset.values[mask, schema.input_index[k]]
            if v.kind != "nominal":
                row.append(float(ww @ y))
            else:
                codes = y.astype(int)
                for lvl in range(v.n_levels):
                    row.append(float(ww[codes == lvl].sum()))
        row.append(size_value)
        return row

    total_w = w.sum()
    rows = [
        stats_for(partition == labels[j], 100.0 * shares[j] / total_w)
        for j in order
    ]
    rows.append(stats_for(np.ones(dataset.n, dtype=bool), float(total_w)))
    ids = [str(rank + 1) for rank in range(len(order))] + ["pop"]
    return ClusterSummary(header=header, rows=np.array(rows), cluster_ids=ids)
