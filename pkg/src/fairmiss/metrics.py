"""Fairness/accuracy metrics, discrete information measures, Pareto filtering,
and the exact constrained-accuracy oracle on small joint tables.

All entropies and mutual informations are in bits (log base 2). Estimators are
plug-in (empirical frequency), matching their use on exact probability tables
expanded to integer-count samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .data import Dataset
from .errors import ValidationError

DISPARITY_KINDS = ("fnr-diff", "fpr-diff", "meo", "eqodds-max")


@dataclass(frozen=True)
class GroupRates:
    """Per-group confusion rates plus per-(s, y) support counts."""

    groups: tuple
    fpr: dict
    fnr: dict
    tpr: dict
    tnr: dict
    support: dict


def accuracy(predictions, ds: Dataset) -> float:
    pred = np.asarray(predictions).astype(np.int64)
    if pred.shape != ds.labels.shape:
        raise ValidationError("prediction length must equal dataset size")
    return float(np.mean(pred == ds.labels))


def group_rates(predictions, ds: Dataset) -> GroupRates:
    pred = np.asarray(predictions).astype(np.int64)
    if pred.shape != ds.labels.shape:
        raise ValidationError("prediction length must equal dataset size")
    fpr, fnr, tpr, tnr, support = {}, {}, {}, {}, {}
    for (s, y), idx in ds.cells():
        if len(idx) == 0:
            raise ValidationError(f"empty cell (s={s}, y={y}): rates undefined")
        support[(s, y)] = len(idx)
        rate1 = float(np.mean(pred[idx] == 1))
        if y == 1:
            tpr[s] = rate1
            fnr[s] = 1.0 - rate1
        else:
            fpr[s] = rate1
            tnr[s] = 1.0 - rate1
    return GroupRates(ds.group_set, fpr, fnr, tpr, tnr, support)


def _max_gap(values: dict) -> float:
    vals = list(values.values())
    return max(abs(a - b) for a in vals for b in vals)


def disparity(rates: GroupRates, kind: str) -> float:
    """Group disparity of a rate table.

    fnr-diff / fpr-diff: largest pairwise gap of that rate; meo: their mean;
    eqodds-max: largest gap over both prediction values and both labels.
    """
    if kind not in DISPARITY_KINDS:
        raise ValidationError(f"unknown disparity kind {kind!r}")
    if len(rates.groups) < 2:
        raise ValidationError("disparity requires at least two groups")
    fnr_gap = _max_gap(rates.fnr)
    fpr_gap = _max_gap(rates.fpr)
    if kind == "fnr-diff":
        return fnr_gap
    if kind == "fpr-diff":
        return fpr_gap
    if kind == "meo":
        return 0.5 * (fnr_gap + fpr_gap)
    return max(fnr_gap, fpr_gap, _max_gap(rates.tpr), _max_gap(rates.tnr))


# ---------------------------------------------------------------------------
# discrete information measures (plug-in, bits)
# ---------------------------------------------------------------------------

def binary_entropy(a: float) -> float:
    """-a log2 a - (1-a) log2 (1-a), continuous at the endpoints."""
    if not 0.0 <= a <= 1.0:
        raise ValidationError("binary_entropy argument must lie in [0, 1]")
    if a in (0.0, 1.0):
        return 0.0
    return float(-a * np.log2(a) - (1.0 - a) * np.log2(1.0 - a))


def _entropy_bits(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def _column_codes(column) -> np.ndarray:
    """Integer codes for a discrete column; NaN becomes its own category."""
    col = np.asarray(column)
    if col.dtype.kind == "f":
        codes = np.full(col.shape, -1, dtype=np.int64)
        obs = ~np.isnan(col)
        if obs.any():
            _, inv = np.unique(col[obs], return_inverse=True)
            codes[obs] = inv
        return codes
    _, inv = np.unique(col, return_inverse=True)
    return inv.astype(np.int64)


def _tuple_codes(columns) -> np.ndarray:
    cols = [_column_codes(c) for c in columns]
    stacked = np.stack(cols, axis=1)
    _, inv = np.unique(stacked, axis=0, return_inverse=True)
    return inv.astype(np.int64)


def entropy(column) -> float:
    """Plug-in entropy H of one discrete column, in bits."""
    codes = _column_codes(column)
    _, counts = np.unique(codes, return_counts=True)
    return _entropy_bits(counts / codes.shape[0])


def conditional_entropy(y, columns) -> float:
    """Plug-in H(Y | tuple of columns), in bits."""
    y = np.asarray(y)
    t = _tuple_codes(columns)
    n = y.shape[0]
    h = 0.0
    for code in np.unique(t):
        sel = t == code
        w = sel.sum() / n
        _, counts = np.unique(y[sel], return_counts=True)
        h += w * _entropy_bits(counts / sel.sum())
    return h


def mutual_information(y, columns) -> float:
    """Plug-in I(Y; tuple of columns) = H(Y) - H(Y | tuple), in bits."""
    return entropy(y) - conditional_entropy(y, columns)


def mutual_info_my(ds: Dataset) -> float:
    """Plug-in mutual information between the missing-pattern vector and the
    label, in bits."""
    if ds.n_samples == 0:
        raise ValidationError("mutual_info_my requires a non-empty dataset")
    pattern = _tuple_codes([ds.mask[:, j] for j in range(ds.dimension)])
    return mutual_information(ds.labels, [pattern])


# ---------------------------------------------------------------------------
# exact joint tables over (s, x, y)
# ---------------------------------------------------------------------------

NA = None  # sentinel for a missing feature value inside a JointTable domain


@dataclass(frozen=True)
class JointTable:
    """Exact joint distribution over (group, single feature value, label).

    ``x_values`` is the finite feature domain; ``None`` denotes the missing
    symbol. ``probs[si, xi, y]`` sums to 1.
    """

    groups: tuple
    x_values: tuple
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (len(self.groups), len(self.x_values), 2):
            raise ValidationError("probs must have shape (|S|, |X|, 2)")
        if (p < -1e-12).any():
            raise ValidationError("joint table has a negative cell")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValidationError(f"joint table sums to {p.sum()}, expected 1")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "x_values", tuple(self.x_values))

    def mutual_info_my(self) -> float:
        """Exact I(M; Y) in bits, M = indicator that x is the missing symbol."""
        na = np.array([v is None for v in self.x_values])
        joint = np.zeros((2, 2))
        for m in (0, 1):
            sel = na if m else ~na
            joint[m] = self.probs[:, sel, :].sum(axis=(0, 1))
        py = joint.sum(axis=0)
        pm = joint.sum(axis=1)
        mi = 0.0
        for m in (0, 1):
            for y in (0, 1):
                if joint[m, y] > 0:
                    mi += joint[m, y] * np.log2(joint[m, y] / (pm[m] * py[y]))
        return float(mi)

    def impute_na(self, p_one: float) -> "JointTable":
        """Map the missing symbol to 1 with probability ``p_one``, else to 0.

        p_one = 0 and 1 are the deterministic single-point imputations; interior
        values are their randomized mixtures.
        """
        if not 0.0 <= p_one <= 1.0:
            raise ValidationError("p_one must lie in [0, 1]")
        if not any(v is None for v in self.x_values):
            return self
        values = [v for v in self.x_values if v is not None]
        for needed in (0.0, 1.0):
            if needed not in values:
                values.append(needed)
        values = sorted(values)
        probs = np.zeros((len(self.groups), len(values), 2))
        for xi, v in enumerate(self.x_values):
            if v is None:
                probs[:, values.index(1.0), :] += p_one * self.probs[:, xi, :]
                probs[:, values.index(0.0), :] += (1.0 - p_one) * self.probs[:, xi, :]
            else:
                probs[:, values.index(v), :] += self.probs[:, xi, :]
        return JointTable(self.groups, tuple(values), probs)

    def to_dataset(self, denominator: int) -> Dataset:
        """Expand to an integer-count dataset when every cell probability is a
        multiple of 1/denominator (for exercising plug-in estimators)."""
        counts = self.probs * denominator
        rounded = np.rint(counts)
        if not np.allclose(counts, rounded, atol=1e-9):
            raise ValidationError("probabilities are not multiples of 1/denominator")
        feats, sens, labels = [], [], []
        for si, s in enumerate(self.groups):
            for xi, v in enumerate(self.x_values):
                for y in (0, 1):
                    c = int(rounded[si, xi, y])
                    feats.extend([np.nan if v is None else float(v)] * c)
                    sens.extend([s] * c)
                    labels.extend([y] * c)
        return Dataset(np.array(feats).reshape(-1, 1), sens, labels, ("x",))


def bayes_accuracy(table: JointTable) -> float:
    """Unconstrained best accuracy: pick the majority label per feature value."""
    p1 = table.probs[:, :, 1].sum(axis=0)
    p0 = table.probs[:, :, 0].sum(axis=0)
    return float(np.sum(np.maximum(p0, p1)))


def best_fair_accuracy(table: JointTable, epsilon: float):
    """Exact optimum of accuracy over randomized classifiers h: x -> Pr(y=1|x)
    subject to equalized odds with tolerance ``epsilon``.

    Solved as a linear program with one variable per feature-domain point and
    a pair of gap constraints per (label, group pair); pairs whose conditioning
    cell has zero probability are skipped. Returns (value, h) with h the
    optimal per-value acceptance probabilities.
    """
    if len(table.x_values) > 16:
        raise ValidationError("feature domain too large for the exact oracle")
    if epsilon < 0:
        raise ValidationError("epsilon must be non-negative")
    n = len(table.x_values)
    p_xy1 = table.probs[:, :, 1].sum(axis=0)
    p_xy0 = table.probs[:, :, 0].sum(axis=0)
    c = p_xy1 - p_xy0  # coefficient of h_x in the accuracy
    base = float(p_xy0.sum())

    rows, rhs = [], []
    p_sy = table.probs.sum(axis=1)  # (|S|, 2)
    for y in (0, 1):
        for i in range(len(table.groups)):
            for j in range(i + 1, len(table.groups)):
                if p_sy[i, y] <= 0 or p_sy[j, y] <= 0:
                    continue
                a = table.probs[i, :, y] / p_sy[i, y] - table.probs[j, :, y] / p_sy[j, y]
                rows.append(a)
                rhs.append(epsilon)
                rows.append(-a)
                rhs.append(epsilon)
    a_ub = np.array(rows) if rows else None
    b_ub = np.array(rhs) if rows else None
    res = linprog(-c, A_ub=a_ub, b_ub=b_ub, bounds=[(0.0, 1.0)] * n, method="highs")
    assert res.success, f"constrained-accuracy LP unexpectedly failed: {res.message}"
    h = np.clip(res.x, 0.0, 1.0)
    value = base + float(c @ h)
    return value, h


# ---------------------------------------------------------------------------
# Pareto filtering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TradeoffPoint:
    """A (accuracy, disparity) outcome plus the hyperparameters that made it."""

    accuracy: float
    disparity: float
    provenance: tuple = ()

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 1.0 and 0.0 <= self.disparity <= 1.0):
            raise ValidationError("accuracy and disparity must lie in [0, 1]")


def pareto_frontier(points) -> list:
    """Points not dominated by any other (higher-or-equal accuracy and
    lower-or-equal disparity, strict in one). Exact duplicates are kept once.
    Result is ordered by accuracy ascending."""
    seen = set()
    unique = []
    for p in points:
        key = (p.accuracy, p.disparity)
        if key not in seen:
            seen.add(key)
            unique.append(p)
    order = sorted(range(len(unique)),
                   key=lambda i: (-unique[i].accuracy, unique[i].disparity))
    kept = []
    best_disp = np.inf
    for i in order:
        p = unique[i]
        if p.disparity < best_disp:
            kept.append(p)
            best_disp = p.disparity
    kept.reverse()
    return kept
