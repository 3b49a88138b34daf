"""Linear base classifier, two fairness interventions, and a fair bagging
ensemble for data with missing values.

The in-processing intervention adds a smooth score-disparity penalty to the
logistic loss; the post-processing intervention solves the small randomized
equalized-odds program exactly by vertex enumeration. The bagging ensemble
resamples within (group, label) cells, imputes and indicator-encodes each bag
separately, and aggregates by a uniformly random pick or by score averaging.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, Sample, fair_resample
from .encode import EncodedDataset, encode_indicators
from .errors import ValidationError
from .impute import make_imputer
from .optim import descend, log1p_exp, sigmoid

PENALTY_CONSTRAINTS = ("mean-equalized-odds", "fnr-difference")
ENSEMBLE_MODES = ("random-pick", "score-average")


@dataclass(frozen=True)
class OptimizerSettings:
    lam: float = 1e-4
    tol: float = 1e-6
    max_iters: int = 5000
    step0: float = 1.0


@dataclass(frozen=True)
class LinearModel:
    """Logistic-score linear classifier over an encoded column set."""

    weights: np.ndarray
    bias: float
    columns: tuple
    threshold: float = 0.5

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (len(self.columns),):
            raise ValidationError("weight length must match the column tags")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "columns", tuple(self.columns))

    def scores(self, matrix: np.ndarray) -> np.ndarray:
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim == 1:
            m = m[None, :]
        if m.shape[1] != self.weights.shape[0]:
            raise ValidationError("matrix width does not match the model")
        return sigmoid(m @ self.weights + self.bias)

    def predict(self, matrix: np.ndarray) -> np.ndarray:
        return (self.scores(matrix) >= self.threshold).astype(np.int64)

    def to_text(self) -> str:
        lines = [f"bias {float(self.bias)!r}", f"threshold {float(self.threshold)!r}"]
        lines += [f"{tag} {float(w)!r}" for tag, w in zip(self.columns, self.weights)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LinearModel":
        bias, threshold, tags, weights = 0.0, 0.5, [], []
        for ln in text.splitlines():
            if not ln.strip():
                continue
            key, val = ln.rsplit(None, 1)
            if key == "bias":
                bias = float(val)
            elif key == "threshold":
                threshold = float(val)
            else:
                tags.append(key)
                weights.append(float(val))
        return cls(np.array(weights), bias, tuple(tags), threshold)


@dataclass(frozen=True)
class PenaltyConfig:
    """Weight and shape of the smooth disparity penalty."""

    tau: float
    constraint: str = "mean-equalized-odds"
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)

    def __post_init__(self):
        if self.tau < 0:
            raise ValidationError("penalty weight must be non-negative")
        if self.constraint not in PENALTY_CONSTRAINTS:
            raise ValidationError(f"unknown penalty constraint {self.constraint!r}")


def _check_training_data(enc: EncodedDataset) -> None:
    if not np.isfinite(enc.matrix).all():
        raise ValidationError("training matrix contains non-finite values")
    if len(np.unique(enc.labels)) < 2:
        raise ValidationError("training data must contain both labels")


def _score_cells(enc: EncodedDataset):
    """Non-empty (s, y) index lists, sorted by (s, y); errors on empty cells."""
    cells = []
    for s in sorted(set(enc.sensitive.tolist())):
        for y in (0, 1):
            idx = np.flatnonzero((enc.sensitive == s) & (enc.labels == y))
            if idx.size == 0:
                raise ValidationError(
                    f"empty cell (s={s}, y={y}): disparity penalty undefined"
                )
            cells.append(((s, y), idx))
    return cells


def make_objective(enc: EncodedDataset, tau: float, constraint: str, lam: float):
    """Closure computing (value, gradient) of the penalized training loss in
    the augmented weight vector (bias appended). With tau = 0 this is exactly
    the plain L2-regularized mean logistic loss."""
    x_aug = np.hstack([enc.matrix, np.ones((enc.n_samples, 1))])
    n = x_aug.shape[0]
    y = enc.labels.astype(np.float64)
    if tau > 0:
        cells = _score_cells(enc)
        groups = sorted({s for (s, _), _ in cells})
        labels = (0, 1) if constraint == "mean-equalized-odds" else (1,)
        scale = 0.5 if constraint == "mean-equalized-odds" else 1.0

    def value_and_grad(w_aug):
        z = x_aug @ w_aug
        p = sigmoid(z)
        loss = float(np.mean(log1p_exp(z) - y * z))
        reg = w_aug.copy()
        reg[-1] = 0.0
        loss += 0.5 * lam * float(reg @ reg)
        grad = x_aug.T @ (p - y) / n + lam * reg
        if tau > 0:
            sp = p * (1.0 - p)
            mu, dmu = {}, {}
            for (s, yy), idx in cells:
                mu[(s, yy)] = float(np.mean(p[idx]))
                dmu[(s, yy)] = x_aug[idx].T @ sp[idx] / idx.size
            pen = 0.0
            pen_grad = np.zeros_like(w_aug)
            for yy in labels:
                for i in range(len(groups)):
                    for j in range(i + 1, len(groups)):
                        gap = mu[(groups[i], yy)] - mu[(groups[j], yy)]
                        pen += gap * gap
                        pen_grad += 2.0 * gap * (
                            dmu[(groups[i], yy)] - dmu[(groups[j], yy)]
                        )
            loss += tau * scale * pen
            grad = grad + tau * scale * pen_grad
        return loss, grad

    return value_and_grad


def loss_and_grad(w_aug, enc: EncodedDataset, tau: float, constraint: str,
                  lam: float):
    """One-shot evaluation of the penalized training objective (for gradient
    checks)."""
    return make_objective(enc, tau, constraint, lam)(np.asarray(w_aug, dtype=np.float64))


def _train(enc: EncodedDataset, tau: float, constraint: str,
           settings: OptimizerSettings) -> LinearModel:
    _check_training_data(enc)
    if tau > 0 and len(set(enc.sensitive.tolist())) < 2:
        raise ValidationError("disparity penalty requires at least two groups")
    w0 = np.zeros(enc.matrix.shape[1] + 1)
    obj = make_objective(enc, tau, constraint, settings.lam)
    w, _, _ = descend(obj, w0, settings.tol, settings.max_iters, settings.step0)
    return LinearModel(w[:-1], float(w[-1]), enc.columns)


def train_logreg(enc: EncodedDataset, settings: OptimizerSettings = None) -> LinearModel:
    """Fit the plain L2-regularized logistic model (deterministic full-batch
    gradient descent from zero)."""
    return _train(enc, 0.0, "mean-equalized-odds", settings or OptimizerSettings())


def train_fair_penalty(enc: EncodedDataset, cfg: PenaltyConfig) -> LinearModel:
    """Fit the logistic model with a smooth score-disparity penalty.

    The penalty is the squared gap of per-group mean sigmoid scores within each
    conditioning label (both labels for mean-equalized-odds, the positive label
    for fnr-difference). tau = 0 reduces exactly to train_logreg.
    """
    return _train(enc, cfg.tau, cfg.constraint, cfg.settings)


# ---------------------------------------------------------------------------
# exact randomized equalized-odds post-processing (two groups)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PostprocessRates:
    """Per-(group, base prediction) flip probabilities."""

    groups: tuple
    flip: dict

    def output_one_prob(self, s: int, base_pred: int) -> float:
        f = self.flip[(s, int(base_pred))]
        return 1.0 - f if base_pred == 1 else f


def prediction_rate_table(predictions, ds) -> dict:
    """(s, y) -> empirical Pr(prediction = 1 | y, s); errors on empty cells."""
    pred = np.asarray(predictions).astype(np.int64)
    out = {}
    for s in sorted(set(ds.sensitive.tolist())):
        for y in (0, 1):
            idx = np.flatnonzero((ds.sensitive == s) & (ds.labels == y))
            if idx.size == 0:
                raise ValidationError(f"empty cell (s={s}, y={y})")
            out[(s, y)] = float(np.mean(pred[idx] == 1))
    return out


def mixed_rate_table(rates: PostprocessRates, base_table: dict) -> dict:
    """Exact post-mixing Pr(output = 1 | y, s) from base rates."""
    out = {}
    for (s, y), r in base_table.items():
        a = 1.0 - rates.flip[(s, 1)]
        b = rates.flip[(s, 0)]
        out[(s, y)] = a * r + b * (1.0 - r)
    return out


def _lp_vertices(a_mat: np.ndarray, b_vec: np.ndarray, dim: int):
    """Feasible vertices of {v : a_mat v <= b_vec} by active-set enumeration."""
    from itertools import combinations

    m = a_mat.shape[0]
    vertices = []
    for rows in combinations(range(m), dim):
        sub = a_mat[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        v = np.linalg.solve(sub, b_vec[list(rows)])
        if (a_mat @ v <= b_vec + 1e-9).all():
            vertices.append(v)
    return vertices


def postprocess_eqodds(scores, ds, epsilon: float) -> PostprocessRates:
    """Exact accuracy-optimal randomized equalized-odds repair for two groups.

    The base prediction thresholds the given scores at 0.5; the output mixes
    each (group, base prediction) with probabilities chosen by enumerating the
    vertices of the feasible polytope (|FPR gap| <= epsilon, |FNR gap| <=
    epsilon) and maximizing accuracy on the fitting data. Among equally
    accurate vertices, the one flipping the least mass wins, so an already
    fair base predictor stays untouched.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.min() < 0.0 or scores.max() > 1.0:
        raise ValidationError("scores must lie in [0, 1]")
    if epsilon < 0:
        raise ValidationError("epsilon must be non-negative")
    groups = sorted(set(ds.sensitive.tolist()))
    if len(groups) != 2:
        raise ValidationError("equalized-odds post-processing supports exactly 2 groups")
    base_pred = (scores >= 0.5).astype(np.int64)
    base = prediction_rate_table(base_pred, ds)
    n = ds.labels.shape[0]
    p_sy = {
        (s, y): float(np.mean((ds.sensitive == s) & (ds.labels == y)))
        for s in groups
        for y in (0, 1)
    }
    assert n == len(scores)

    # variables v = (a_g0, b_g0, a_g1, b_g1): Pr(output 1 | group, base pred 1/0)
    def rate_row(s_i, y):
        r = base[(groups[s_i], y)]
        row = np.zeros(4)
        row[2 * s_i] = r
        row[2 * s_i + 1] = 1.0 - r
        return row

    tpr0, tpr1 = rate_row(0, 1), rate_row(1, 1)
    fpr0, fpr1 = rate_row(0, 0), rate_row(1, 0)
    a_rows = [tpr0 - tpr1, tpr1 - tpr0, fpr0 - fpr1, fpr1 - fpr0]
    b_vals = [epsilon] * 4
    for k in range(4):
        e = np.zeros(4)
        e[k] = 1.0
        a_rows += [e, -e]
        b_vals += [1.0, 0.0]
    a_mat = np.array(a_rows)
    b_vec = np.array(b_vals)

    obj = (
        p_sy[(groups[0], 1)] * tpr0
        + p_sy[(groups[1], 1)] * tpr1
        - p_sy[(groups[0], 0)] * fpr0
        - p_sy[(groups[1], 0)] * fpr1
    )
    vertices = _lp_vertices(a_mat, b_vec, 4)
    assert vertices, "equalized-odds polytope unexpectedly empty"

    def flip_mass(v):
        return (1.0 - v[0]) + v[1] + (1.0 - v[2]) + v[3]

    best = max(
        vertices,
        key=lambda v: (float(obj @ v), -flip_mass(v), tuple(-v)),
    )
    v = np.clip(best, 0.0, 1.0)
    flip = {
        (groups[0], 1): float(1.0 - v[0]),
        (groups[0], 0): float(v[1]),
        (groups[1], 1): float(1.0 - v[2]),
        (groups[1], 0): float(v[3]),
    }
    return PostprocessRates((groups[0], groups[1]), flip)


def apply_postprocess(rates: PostprocessRates, base_predictions, sensitive,
                      seed: int) -> np.ndarray:
    """Randomize base predictions according to the fitted flip rates."""
    pred = np.asarray(base_predictions).astype(np.int64).copy()
    sens = np.asarray(sensitive)
    rng = np.random.default_rng(seed)
    u = rng.random(pred.shape[0])
    probs = np.array([rates.flip[(int(s), int(p))] for s, p in zip(sens, pred)])
    return np.where(u < probs, 1 - pred, pred)


def uniform_mixture_rates(rate_tables) -> dict:
    """Rate table of a uniformly random pick among classifiers: the plain
    average of their Pr(prediction = 1 | y, s) tables."""
    keys = rate_tables[0].keys()
    return {k: float(np.mean([t[k] for t in rate_tables])) for k in keys}


# ---------------------------------------------------------------------------
# fair bagging ensemble
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Intervention:
    """Which fairness intervention to train on an encoded dataset."""

    kind: str = "none"  # none | penalty | eqodds
    tau: float = 0.0
    constraint: str = "mean-equalized-odds"
    epsilon: float = 0.1
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)

    def __post_init__(self):
        if self.kind not in ("none", "penalty", "eqodds"):
            raise ValidationError(f"unknown intervention {self.kind!r}")

    def with_params(self, **kw) -> "Intervention":
        return replace(self, **kw)


def train_intervention(enc: EncodedDataset, interv: Intervention):
    """Returns (LinearModel, PostprocessRates or None)."""
    if interv.kind == "none":
        return train_logreg(enc, interv.settings), None
    if interv.kind == "penalty":
        cfg = PenaltyConfig(interv.tau, interv.constraint, interv.settings)
        return train_fair_penalty(enc, cfg), None
    model = train_logreg(enc, interv.settings)
    rates = postprocess_eqodds(model.scores(enc.matrix), enc, interv.epsilon)
    return model, rates


@dataclass(frozen=True)
class BagModel:
    imputer: object
    model: LinearModel
    rates: PostprocessRates = None

    def scores(self, ds: Dataset) -> np.ndarray:
        enc = encode_indicators(ds, imputer=self.imputer)
        s = self.model.scores(enc.matrix)
        if self.rates is None:
            return s
        base = (s >= self.model.threshold).astype(np.int64)
        return np.array(
            [
                self.rates.output_one_prob(int(g), int(p))
                for g, p in zip(ds.sensitive, base)
            ]
        )


@dataclass(frozen=True)
class FairEnsemble:
    bags: tuple
    mode: str = "score-average"

    def __post_init__(self):
        if not self.bags:
            raise ValidationError("ensemble needs at least one model")
        if self.mode not in ENSEMBLE_MODES:
            raise ValidationError(f"unknown ensemble mode {self.mode!r}")
        if len({bag.model.columns for bag in self.bags}) > 1:
            raise ValidationError("ensemble members must share one column set")
        object.__setattr__(self, "bags", tuple(self.bags))

    @property
    def n_bags(self) -> int:
        return len(self.bags)

    def to_text(self) -> str:
        """Audit dump: mode, then each bag's imputer name, weights, and any
        post-processing flip rates. Imputer statistics are not serialized, so
        this is for inspection rather than reconstruction."""
        lines = [f"mode {self.mode}", f"bags {self.n_bags}"]
        for i, bag in enumerate(self.bags):
            lines.append(f"bag {i} imputer={bag.imputer.name}")
            lines.append(bag.model.to_text().rstrip("\n"))
            if bag.rates is not None:
                for (s, p), f in sorted(bag.rates.flip.items()):
                    lines.append(f"flip s={s} base={p} {float(f)!r}")
        return "\n".join(lines) + "\n"


def train_fair_bagging(
    train: Dataset,
    bags: int,
    intervention: Intervention,
    imputer_spec: str = "mean",
    mode: str = "score-average",
    seed: int = 0,
) -> FairEnsemble:
    """Cell-preserving bootstrap ensemble with per-bag imputation.

    For each bag b = 1..bags: resample within every (s, y) cell with seed+b,
    append missing indicators, fit the imputer on that bag alone, and train the
    intervention model on the encoded bag.
    """
    if bags < 1:
        raise ValidationError("bag count must be >= 1")
    models = []
    for b in range(1, bags + 1):
        bag = fair_resample(train, seed + b)
        imputer = make_imputer(imputer_spec).fit(bag)
        enc = encode_indicators(bag, imputer=imputer)
        model, rates = train_intervention(enc, intervention)
        models.append(BagModel(imputer, model, rates))
    return FairEnsemble(tuple(models), mode)


def ensemble_scores(ens: FairEnsemble, ds: Dataset) -> np.ndarray:
    """Mean of the per-bag scores."""
    return np.mean([bag.scores(ds) for bag in ens.bags], axis=0)


def predict_dataset(ens: FairEnsemble, ds: Dataset, seed: int) -> np.ndarray:
    """Predict every row: random-pick draws one bag per row (then that bag's
    possibly randomized label); score-average thresholds the mean score."""
    if ens.mode == "score-average":
        return (ensemble_scores(ens, ds) >= 0.5).astype(np.int64)
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, ens.n_bags, size=ds.n_samples)
    out = np.empty(ds.n_samples, dtype=np.int64)
    u = rng.random(ds.n_samples)
    for b, bag in enumerate(ens.bags):
        sel = picks == b
        if not sel.any():
            continue
        scores = bag.scores(ds.subset(np.flatnonzero(sel)))
        if bag.rates is None:
            out[sel] = (scores >= bag.model.threshold).astype(np.int64)
        else:
            out[sel] = (u[sel] < scores).astype(np.int64)
    return out


def ensemble_predict(ens: FairEnsemble, sample: Sample, seed: int):
    """Single-sample prediction: the random-pick label, or the averaged score
    for a score-average ensemble (thresholding is the caller's concern)."""
    ds = Dataset(
        sample.features[None, :], [sample.sensitive], [sample.label]
    )
    if ens.mode == "score-average":
        return float(ensemble_scores(ens, ds)[0])
    return int(predict_dataset(ens, ds, seed)[0])
