"""Imputers mapping masked feature matrices to complete ones.

All imputers share the same contract: fit on a training dataset, then
transform any dataset of the same dimension into one with no missing cells.
Observed cells pass through untouched; transforms are deterministic.
"""

from __future__ import annotations

import warnings

import numpy as np

from .data import Dataset
from .errors import NotFittedError, ValidationError


class Imputer:
    """Base class; subclasses fill ``_fill`` and may extend ``fit``."""

    name = "base"

    def __init__(self):
        self._fitted = False

    def fit(self, train: Dataset) -> "Imputer":
        self._fit(train)
        self._fitted = True
        return self

    def transform(self, ds: Dataset) -> Dataset:
        if not self._fitted:
            raise NotFittedError(f"{self.name} imputer used before fit")
        mask = ds.mask
        if not mask.any():
            return ds
        filled = self._fill(ds)
        out = ds.features.copy()
        out[mask] = filled[mask]
        return ds.with_features(out)

    def _fit(self, train: Dataset) -> None:
        pass

    def _fill(self, ds: Dataset) -> np.ndarray:
        raise NotImplementedError


def _require_observed(train: Dataset) -> None:
    counts = (~train.mask).sum(axis=0)
    if (counts == 0).any():
        j = int(np.flatnonzero(counts == 0)[0])
        raise ValidationError(
            f"feature {train.feature_names[j]!r} has no observed training values"
        )


class ZeroImputer(Imputer):
    """Missing cells become 0. Needs no statistics, so it is born fitted."""

    name = "zero"

    def __init__(self):
        super().__init__()
        self._fitted = True

    def _fill(self, ds: Dataset) -> np.ndarray:
        return np.zeros_like(ds.features)


class MeanImputer(Imputer):
    name = "mean"

    def _fit(self, train: Dataset) -> None:
        _require_observed(train)
        self.means_ = np.nanmean(train.features, axis=0)

    def _fill(self, ds: Dataset) -> np.ndarray:
        return np.broadcast_to(self.means_, ds.features.shape)


class KNNImputer(Imputer):
    """Fill each missing cell with the mean of its k nearest donors.

    Distance between two rows is Euclidean over the coordinates observed in
    both, rescaled by d / (number of used coordinates); rows sharing no
    observed coordinate are infinitely far apart. Donors for feature j are
    training rows with j observed; ties break on training-row index, and a
    cell with no reachable donor falls back to the training mean.
    """

    name = "knn"

    def __init__(self, k: int = 5):
        super().__init__()
        if k < 1:
            raise ValidationError("knn imputation requires k >= 1")
        self.k = int(k)

    def _fit(self, train: Dataset) -> None:
        _require_observed(train)
        if self.k > train.n_samples:
            raise ValidationError(
                f"k={self.k} exceeds the {train.n_samples} training rows"
            )
        self.train_ = train.features.copy()
        self.means_ = np.nanmean(train.features, axis=0)

    def _distances(self, row: np.ndarray) -> np.ndarray:
        d = self.train_.shape[1]
        both = ~np.isnan(row) & ~np.isnan(self.train_)
        used = both.sum(axis=1)
        diff = np.where(both, self.train_ - row, 0.0)
        sq = (diff * diff).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = np.sqrt(sq * d / used)
        dist[used == 0] = np.inf
        return dist

    def _fill(self, ds: Dataset) -> np.ndarray:
        out = np.tile(self.means_, (ds.n_samples, 1))
        mask = ds.mask
        for i in np.flatnonzero(mask.any(axis=1)):
            dist = self._distances(ds.features[i])
            for j in np.flatnonzero(mask[i]):
                donors = np.flatnonzero(~np.isnan(self.train_[:, j]) & np.isfinite(dist))
                if donors.size == 0:
                    continue  # keep the mean fallback
                order = np.lexsort((donors, dist[donors]))
                chosen = donors[order[: self.k]]
                out[i, j] = float(np.mean(self.train_[chosen, j]))
        return out


class IterativeImputer(Imputer):
    """Round-robin ridge regression on mean-initialized data.

    Fitting runs ``rounds`` passes; each pass re-estimates every feature (in
    index order) from the others by ridge regression on the rows where it is
    observed, then refreshes that feature's imputed cells. The final round's
    coefficients are kept and replayed at transform time, so transforming new
    data never refits.
    """

    name = "iterative"

    def __init__(self, rounds: int = 10, lam: float = 1e-3):
        super().__init__()
        if rounds < 1:
            raise ValidationError("iterative imputation requires rounds >= 1")
        if lam < 0:
            raise ValidationError("ridge penalty must be non-negative")
        self.rounds = int(rounds)
        self.lam = float(lam)

    @staticmethod
    def _ridge(a: np.ndarray, b: np.ndarray, lam: float):
        ones = np.ones((a.shape[0], 1))
        aug = np.hstack([a, ones])
        gram = aug.T @ aug
        gram[np.diag_indices(a.shape[1])] += lam  # bias unpenalized
        coef = np.linalg.solve(gram, aug.T @ b)
        return coef[:-1], float(coef[-1])

    def _fit(self, train: Dataset) -> None:
        _require_observed(train)
        self.means_ = np.nanmean(train.features, axis=0)
        mask = train.mask
        x = train.features.copy()
        x[mask] = np.broadcast_to(self.means_, x.shape)[mask]
        d = train.dimension
        self.coefs_ = [(np.zeros(d - 1), float(self.means_[j])) for j in range(d)]
        if d == 1:
            return
        others = [np.array([k for k in range(d) if k != j]) for j in range(d)]
        last_delta = np.inf
        for r in range(self.rounds):
            delta = 0.0
            for j in range(d):
                obs = ~mask[:, j]
                w, b = self._ridge(x[np.ix_(obs, others[j])], x[obs, j], self.lam)
                self.coefs_[j] = (w, b)
                miss = mask[:, j]
                if miss.any():
                    new = x[np.ix_(miss, others[j])] @ w + b
                    delta = max(delta, float(np.max(np.abs(new - x[miss, j]))))
                    x[miss, j] = new
            if delta > last_delta + 1e-6:
                warnings.warn(
                    "iterative imputation update grew between rounds "
                    f"({last_delta:.3g} -> {delta:.3g})",
                    RuntimeWarning,
                    stacklevel=2,
                )
            last_delta = delta

    def _fill(self, ds: Dataset) -> np.ndarray:
        mask = ds.mask
        x = ds.features.copy()
        x[mask] = np.broadcast_to(self.means_, x.shape)[mask]
        d = ds.dimension
        if d == 1:
            return x
        others = [np.array([k for k in range(d) if k != j]) for j in range(d)]
        for _ in range(self.rounds):
            for j in range(d):
                miss = mask[:, j]
                if miss.any():
                    w, b = self.coefs_[j]
                    x[miss, j] = x[np.ix_(miss, others[j])] @ w + b
        return x


def make_imputer(spec: str) -> Imputer:
    """Build an imputer from a config token: ``zero``, ``mean``, ``knn:K``, or
    ``iterative:ROUNDS:LAMBDA`` (parameters optional)."""
    parts = [p for p in str(spec).strip().split(":") if p != ""]
    if not parts:
        raise ValidationError("empty imputer spec")
    name, args = parts[0], parts[1:]
    if name == "zero" and not args:
        return ZeroImputer()
    if name == "mean" and not args:
        return MeanImputer()
    if name == "knn" and len(args) <= 1:
        return KNNImputer(int(args[0])) if args else KNNImputer()
    if name == "iterative" and len(args) <= 2:
        rounds = int(args[0]) if args else 10
        lam = float(args[1]) if len(args) > 1 else 1e-3
        return IterativeImputer(rounds, lam)
    raise ValidationError(f"cannot parse imputer spec {spec!r}")
