"""Adaptive encodings that keep the missing pattern available to a classifier.

Three transformations: appending per-feature missing indicators, appending
indicator-by-value cross terms (an affinely adaptive linear model in disguise),
and recursive partitioning of missing patterns into clusters that each get
their own downstream model. Encoders never leave NaN in their output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import NotFittedError, ValidationError
from .impute import Imputer, ZeroImputer
from .optim import fit_logistic_sum, logistic_sum_loss


@dataclass(frozen=True)
class EncodedDataset:
    """A complete (NaN-free) feature matrix plus carried-through s and y.

    ``columns`` records each column's provenance: ``orig:<name>``,
    ``ind:<name>``, or ``cross:<value name>|miss:<indicator name>``.
    """

    matrix: np.ndarray
    sensitive: np.ndarray
    labels: np.ndarray
    columns: tuple

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if np.isnan(m).any():
            raise ValidationError("encoded matrix must not contain NaN")
        if len(self.columns) != m.shape[1]:
            raise ValidationError("column tags must match matrix width")
        if len(set(self.columns)) != len(self.columns):
            raise ValidationError("column tags must be unique")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def n_samples(self) -> int:
        return self.matrix.shape[0]


def _zero_imputed(ds: Dataset) -> np.ndarray:
    x = ds.features.copy()
    x[ds.mask] = 0.0
    return x


def encode_indicators(ds: Dataset, imputer: Imputer = None) -> EncodedDataset:
    """d imputed originals followed by d missing indicators (2d columns).

    Zero imputation by default; a fitted imputer may fill the value columns
    instead (the indicator columns always reflect the original mask).
    """
    if imputer is None:
        values = _zero_imputed(ds)
    else:
        values = imputer.transform(ds).features
    cols = [f"orig:{n}" for n in ds.feature_names] + [
        f"ind:{n}" for n in ds.feature_names
    ]
    matrix = np.hstack([values, ds.mask.astype(np.float64)])
    return EncodedDataset(matrix, ds.sensitive, ds.labels, tuple(cols))


class AffineEncoder:
    """Indicator encoding plus cross terms m_k * (1 - m_j) * x_j.

    Cross columns exist only for features k that were missing at least once in
    the fitting data; a feature first missing at transform time contributes
    through its indicator column only. Output width is 2d + n_miss * (d - 1).
    """

    def __init__(self):
        self.miss_features_ = None

    def fit(self, train: Dataset) -> "AffineEncoder":
        self.miss_features_ = tuple(
            int(j) for j in np.flatnonzero(train.mask.any(axis=0))
        )
        self.names_ = train.feature_names
        return self

    def transform(self, ds: Dataset) -> EncodedDataset:
        if self.miss_features_ is None:
            raise NotFittedError("affine encoder used before fit")
        if ds.feature_names != self.names_:
            raise ValidationError("dataset features do not match the fitted encoder")
        base = encode_indicators(ds)
        mask = ds.mask.astype(np.float64)
        values = _zero_imputed(ds)
        cross_cols, cross_tags = [], []
        for k in self.miss_features_:
            for j in range(ds.dimension):
                if j == k:
                    continue
                cross_cols.append(mask[:, k] * (1.0 - mask[:, j]) * values[:, j])
                cross_tags.append(f"cross:{self.names_[j]}|miss:{self.names_[k]}")
        if cross_cols:
            matrix = np.hstack([base.matrix, np.column_stack(cross_cols)])
        else:
            matrix = base.matrix
        return EncodedDataset(
            matrix, ds.sensitive, ds.labels, base.columns + tuple(cross_tags)
        )


def encode_affine(ds: Dataset) -> EncodedDataset:
    """Fit the cross-term column set on ``ds`` itself and transform it."""
    return AffineEncoder().fit(ds).transform(ds)


def encode_plain(ds: Dataset, imputer: Imputer = None) -> EncodedDataset:
    """Imputed originals only - the impute-then-classify representation."""
    imputer = imputer or ZeroImputer()
    values = imputer.transform(ds).features
    return EncodedDataset(
        values,
        ds.sensitive,
        ds.labels,
        tuple(f"orig:{n}" for n in ds.feature_names),
    )


# ---------------------------------------------------------------------------
# missing pattern clustering
# ---------------------------------------------------------------------------

@dataclass
class TreeNode:
    feature: int = None  # split feature for internal nodes
    left: int = None     # child when the feature is observed (m_j = 0)
    right: int = None    # child when the feature is missing (m_j = 1)
    cluster: int = None  # leaf id


@dataclass(frozen=True)
class LeafRecord:
    cluster: int
    size: int
    group_fractions: dict
    from_split: bool


@dataclass(frozen=True)
class SplitRecord:
    feature: int
    parent_loss: float
    children_loss: float


@dataclass
class ClusterPartition:
    """Binary tree over missing patterns; every pattern routes to one leaf."""

    dimension: int
    nodes: list = field(default_factory=list)
    leaves: list = field(default_factory=list)
    splits: list = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return len(self.leaves)

    def assign(self, mask) -> int:
        bits = np.asarray(mask).astype(bool).reshape(-1)
        if bits.shape[0] != self.dimension:
            raise ValidationError("mask length does not match the partition")
        node = self.nodes[0]
        while node.cluster is None:
            node = self.nodes[node.right if bits[node.feature] else node.left]
        return node.cluster

    def assign_dataset(self, ds: Dataset) -> np.ndarray:
        return np.array([self.assign(row) for row in ds.mask], dtype=np.int64)

    def to_text(self) -> str:
        lines = [f"d={self.dimension}"]
        for i, node in enumerate(self.nodes):
            if node.cluster is None:
                lines.append(f"{i} split {node.feature} {node.left} {node.right}")
            else:
                lines.append(f"{i} leaf {node.cluster}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ClusterPartition":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("d="):
            raise ValidationError("partition text must start with 'd=<dimension>'")
        part = cls(dimension=int(lines[0][2:]))
        clusters = set()
        for ln in lines[1:]:
            toks = ln.split()
            if toks[1] == "split":
                part.nodes.append(
                    TreeNode(feature=int(toks[2]), left=int(toks[3]), right=int(toks[4]))
                )
            elif toks[1] == "leaf":
                part.nodes.append(TreeNode(cluster=int(toks[2])))
                clusters.add(int(toks[2]))
            else:
                raise ValidationError(f"bad partition line: {ln!r}")
        part.leaves = [
            LeafRecord(cluster=q, size=0, group_fractions={}, from_split=False)
            for q in sorted(clusters)
        ]
        return part


def _group_fractions(ds: Dataset, idx: np.ndarray) -> dict:
    sens = ds.sensitive[idx]
    return {int(s): float(np.mean(sens == s)) for s in ds.group_set}


def cluster_missing_patterns(
    train: Dataset,
    k_min: int,
    alpha: float,
    beta: float,
    *,
    val_fraction: float = 0.0,
    seed: int = 0,
    lam: float = 1e-4,
    tol: float = 1e-6,
    max_iters: int = 5000,
) -> ClusterPartition:
    """Recursively split training rows by the missingness of one feature.

    Clusters are processed FIFO from the root. A feature is a split candidate
    only when both children have at least ``k_min`` rows and every group's
    fraction stays within [beta, alpha] in both; among candidates the feature
    with the lowest summed children loss wins (ties to the lowest index), and
    the split is kept only when that sum is strictly below the cluster's own
    minimized loss. The loss is the L2-regularized logistic loss of a linear
    model on zero-imputed features; with ``val_fraction`` > 0 a stratified
    share of the rows is held out once and losses are evaluated on it instead.
    """
    if train.n_samples == 0:
        raise ValidationError("cannot cluster an empty training set")
    n_groups = len(train.group_set)
    if not (0.0 <= beta <= 1.0 / n_groups <= alpha <= 1.0):
        raise ValidationError(
            f"bounded representation needs 0 <= beta <= 1/|S| <= alpha <= 1 "
            f"(got alpha={alpha}, beta={beta}, |S|={n_groups})"
        )
    if k_min < 1:
        raise ValidationError("minimum cluster size must be >= 1")
    if not 0.0 <= val_fraction < 1.0:
        raise ValidationError("val_fraction must lie in [0, 1)")

    x = _zero_imputed(train)
    y = train.labels
    mask = train.mask
    all_idx = np.arange(train.n_samples)

    if val_fraction > 0.0:
        from .data import stratified_split_indices

        fit_idx, _ = stratified_split_indices(train, val_fraction, seed)
        fit_flags = np.zeros(train.n_samples, dtype=bool)
        fit_flags[fit_idx] = True
    else:
        fit_flags = np.ones(train.n_samples, dtype=bool)

    def cluster_loss(idx: np.ndarray) -> float:
        fit_rows = idx[fit_flags[idx]]
        if fit_rows.size == 0:
            return np.inf
        w, b, sum_loss = fit_logistic_sum(
            x[fit_rows], y[fit_rows], lam=lam, tol=tol, max_iters=max_iters
        )
        if val_fraction > 0.0:
            val_rows = idx[~fit_flags[idx]]
            if val_rows.size == 0:
                return 0.0
            return logistic_sum_loss(w, b, x[val_rows], y[val_rows])
        return sum_loss

    part = ClusterPartition(dimension=train.dimension)
    part.nodes.append(TreeNode())
    queue = [(0, all_idx, cluster_loss(all_idx))]
    while queue:
        node_id, idx, own_loss = queue.pop(0)
        best = None
        for j in range(train.dimension):
            right = idx[mask[idx, j]]
            left = idx[~mask[idx, j]]
            if len(left) < k_min or len(right) < k_min:
                continue
            ok = True
            for child in (left, right):
                for frac in _group_fractions(train, child).values():
                    if not beta <= frac <= alpha:
                        ok = False
            if not ok:
                continue
            if val_fraction > 0.0 and (
                fit_flags[left].sum() == 0 or fit_flags[right].sum() == 0
            ):
                continue
            left_loss, right_loss = cluster_loss(left), cluster_loss(right)
            split_loss = left_loss + right_loss
            if best is None or split_loss < best[1]:
                best = (j, split_loss, left, right, left_loss, right_loss)
        if best is not None and best[1] < own_loss:
            j, split_loss, left, right, left_loss, right_loss = best
            node = part.nodes[node_id]
            node.feature = j
            node.left = len(part.nodes)
            part.nodes.append(TreeNode())
            node.right = len(part.nodes)
            part.nodes.append(TreeNode())
            part.splits.append(SplitRecord(j, own_loss, split_loss))
            queue.append((node.left, left, left_loss))
            queue.append((node.right, right, right_loss))
        else:
            q = len(part.leaves)
            part.nodes[node_id].cluster = q
            part.leaves.append(
                LeafRecord(
                    cluster=q,
                    size=int(len(idx)),
                    group_fractions=_group_fractions(train, idx),
                    from_split=node_id != 0,
                )
            )
    return part


def assign_cluster(part: ClusterPartition, mask) -> int:
    """Route a missing pattern to its cluster id (total over all patterns)."""
    return part.assign(mask)
