"""Config-driven experiment runner.

Builds a pipeline (data source -> optional missingness injection -> encoding
method -> fairness intervention), sweeps the intervention's hyperparameter
grid, repeats over stratified train/test splits, aggregates mean and standard
error per grid point, and emits raw / summary / Pareto CSV files. Everything
is a deterministic function of the config and its master seed.
"""

from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import classify, data, encode, metrics, simulate
from .errors import ConfigError, FairmissError, ValidationError
from .impute import ZeroImputer, make_imputer

log = logging.getLogger("fairmiss")

METHODS = ("impute-then-classify", "indicators", "affine", "clustering", "fairmissbag")
SECTIONS = ("data", "missingness", "method", "intervention", "sweep", "output")

RAW_COLUMNS = (
    "method", "grid_id", "params", "repeat",
    "train_accuracy", "test_accuracy", "fnr_diff", "fpr_diff", "meo",
)
SUMMARY_COLUMNS = ("method", "grid_id", "params", "metric", "mean", "stderr")
PARETO_COLUMNS = (
    "method", "grid_id", "params",
    "test_accuracy_mean", "test_accuracy_stderr", "meo_mean", "meo_stderr",
)
TABLE_COLUMNS = (
    "method", "grid_id", "params", "repeat",
    "f_eps_original", "f_eps_imputed_best", "gap", "mi_bits",
)


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class DataConfig:
    source: str = "synthetic"
    path: str = ""
    schema: str = ""
    sensitive_values: tuple = ()
    balance: bool = False
    alpha0: float = 0.25
    alpha1: float = None
    q0: float = 0.5
    samples: int = 0  # theorem1 source: 0 = exact-table mode


@dataclass
class MethodConfig:
    name: str = "indicators"
    imputer: str = "zero"
    k_min: int = 1
    alpha: float = 1.0
    beta: float = 0.0
    val_fraction: float = 0.0
    bags: int = 10
    mode: str = "score-average"


@dataclass
class InterventionConfig:
    name: str = "none"
    constraint: str = "mean-equalized-odds"
    taus: tuple = (0.01, 0.1, 1.0, 10.0, 100.0)
    epsilons: tuple = (0.0, 0.01, 0.1)


@dataclass
class SweepConfig:
    repeats: int = 1
    test_fraction: float = 0.3
    seed: int = 0
    inject_before_split: bool = False


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    missingness: simulate.MissingnessSpec = None
    method: MethodConfig = field(default_factory=MethodConfig)
    intervention: InterventionConfig = field(default_factory=InterventionConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output_dir: str = "results"


def _floats(text: str) -> tuple:
    return tuple(float(t.strip()) for t in text.split(",") if t.strip())


def _parse_entry(value: str) -> simulate.MissingEntry:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 4:
        raise ConfigError(
            f"missingness entry needs 'target, indicator, p0, p1': {value!r}"
        )
    target, ind, p0, p1 = parts
    threshold = None
    if ind.lower() == "none":
        ind = None
    elif "<" in ind:
        ind, tval = (t.strip() for t in ind.split("<", 1))
        threshold = float(tval)
    return simulate.MissingEntry(target, ind, float(p0), float(p1), threshold)


def missingness_to_config(spec: simulate.MissingnessSpec) -> str:
    """Render a MissingnessSpec as its config-file section."""
    lines = ["[missingness]", f"mechanism = {spec.mechanism}"]
    for i, e in enumerate(spec.entries, start=1):
        if e.indicator is None:
            ind = "none"
        elif e.threshold is not None:
            ind = f"{e.indicator}<{_fmt(e.threshold)}"
        else:
            ind = e.indicator
        lines.append(f"entry{i} = {e.target}, {ind}, {_fmt(e.p0)}, {_fmt(e.p1)}")
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
    cfg = ExperimentConfig()

    if parser.has_section("data"):
        d = parser["data"]
        cfg.data = DataConfig(
            source=d.get("source", "synthetic").strip(),
            path=d.get("path", "").strip(),
            schema=d.get("schema", "").strip(),
            sensitive_values=tuple(
                t.strip() for t in d.get("sensitive_values", "").split(",") if t.strip()
            ),
            balance=d.getboolean("balance", False),
            alpha0=d.getfloat("alpha0", 0.25),
            alpha1=d.getfloat("alpha1", fallback=None),
            q0=d.getfloat("q0", 0.5),
            samples=d.getint("samples", 0),
        )
    if parser.has_section("missingness"):
        m = parser["missingness"]
        mechanism = m.get("mechanism", "").strip().lower()
        entries = [
            _parse_entry(m[k]) for k in sorted(m.keys()) if k.startswith("entry")
        ]
        try:
            cfg.missingness = simulate.MissingnessSpec(mechanism, tuple(entries))
        except ValidationError as exc:
            raise ConfigError(str(exc)) from None
    if parser.has_section("method"):
        m = parser["method"]
        cfg.method = MethodConfig(
            name=m.get("name", "indicators").strip(),
            imputer=m.get("imputer", "zero").strip(),
            k_min=m.getint("k_min", 1),
            alpha=m.getfloat("alpha", 1.0),
            beta=m.getfloat("beta", 0.0),
            val_fraction=m.getfloat("val_fraction", 0.0),
            bags=m.getint("bags", 10),
            mode=m.get("mode", "score-average").strip(),
        )
    if parser.has_section("intervention"):
        i = parser["intervention"]
        name = i.get("name", "none").strip()
        constraint = i.get("constraint", "meo").strip()
        constraint = {
            "meo": "mean-equalized-odds",
            "fnr": "fnr-difference",
        }.get(constraint, constraint)
        cfg.intervention = InterventionConfig(
            name=name,
            constraint=constraint,
            taus=_floats(i.get("tau", "0.01, 0.1, 1, 10, 100")),
            epsilons=_floats(i.get("epsilon", "0, 0.01, 0.1")),
        )
    if parser.has_section("sweep"):
        s = parser["sweep"]
        cfg.sweep = SweepConfig(
            repeats=s.getint("repeats", 1),
            test_fraction=s.getfloat("test_fraction", 0.3),
            seed=s.getint("seed", 0),
            inject_before_split=s.getboolean("inject_before_split", False),
        )
    if parser.has_section("output"):
        cfg.output_dir = parser["output"].get("dir", "results").strip()
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.data.source not in ("csv", "synthetic", "theorem1"):
        raise ConfigError(f"unknown data source {cfg.data.source!r}")
    if cfg.data.source == "csv":
        if not cfg.data.path or not Path(cfg.data.path).exists():
            raise ConfigError(f"csv path {cfg.data.path!r} does not exist")
        if not cfg.data.schema or not Path(cfg.data.schema).exists():
            raise ConfigError(f"schema path {cfg.data.schema!r} does not exist")
    if cfg.method.name not in METHODS:
        raise ConfigError(f"unknown method {cfg.method.name!r}")
    if cfg.method.mode not in classify.ENSEMBLE_MODES:
        raise ConfigError(f"unknown ensemble mode {cfg.method.mode!r}")
    try:
        make_imputer(cfg.method.imputer)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.intervention.name not in ("none", "penalty", "eqodds"):
        raise ConfigError(f"unknown intervention {cfg.intervention.name!r}")
    if cfg.intervention.name == "penalty" and not cfg.intervention.taus:
        raise ConfigError("penalty intervention needs a non-empty tau grid")
    if cfg.intervention.name == "eqodds" and not cfg.intervention.epsilons:
        raise ConfigError("eqodds intervention needs a non-empty epsilon grid")
    if cfg.sweep.repeats < 1:
        raise ConfigError("repeats must be >= 1")
    if not 0.0 < cfg.sweep.test_fraction < 1.0:
        raise ConfigError("test_fraction must lie strictly between 0 and 1")
    if cfg.data.source == "theorem1" and cfg.data.samples < 0:
        raise ConfigError("samples must be >= 0")


# ---------------------------------------------------------------------------
# grid and pipelines
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridPoint:
    gid: str
    params: tuple  # ((name, value), ...)

    @property
    def label(self) -> str:
        return ";".join(f"{k}={_fmt(v)}" for k, v in self.params)


def grid_points(icfg: InterventionConfig) -> list:
    if icfg.name == "none":
        return [GridPoint("g0", ())]
    if icfg.name == "penalty":
        return [
            GridPoint(f"g{i}", (("tau", t),)) for i, t in enumerate(icfg.taus)
        ]
    return [
        GridPoint(f"g{i}", (("epsilon", e),)) for i, e in enumerate(icfg.epsilons)
    ]


def _intervention_for(cfg: ExperimentConfig, gp: GridPoint) -> classify.Intervention:
    params = dict(gp.params)
    return classify.Intervention(
        kind=cfg.intervention.name,
        tau=params.get("tau", 0.0),
        constraint=cfg.intervention.constraint,
        epsilon=params.get("epsilon", 0.1),
    )


@dataclass
class FittedPipeline:
    """Everything learned from the training split (never sees test rows)."""

    method: str
    scaler: data.FeatureScaler
    state: dict
    train_accuracy: float


def fit_pipeline(train: data.Dataset, cfg: ExperimentConfig, gp: GridPoint,
                 seed: int) -> FittedPipeline:
    scaler = data.FeatureScaler().fit(train)
    train = scaler.transform(train)
    interv = _intervention_for(cfg, gp)
    name = cfg.method.name
    state = {}

    if name in ("impute-then-classify", "indicators", "affine"):
        if name == "impute-then-classify":
            imputer = make_imputer(cfg.method.imputer).fit(train)
            enc = encode.encode_plain(train, imputer)
            state["imputer"] = imputer
        elif name == "indicators":
            enc = encode.encode_indicators(train)
        else:
            encoder = encode.AffineEncoder().fit(train)
            enc = encoder.transform(train)
            state["encoder"] = encoder
        model, rates = classify.train_intervention(enc, interv)
        state.update(model=model, rates=rates)
        preds = _predict_encoded(state, enc, seed)
    elif name == "clustering":
        part = encode.cluster_missing_patterns(
            train,
            cfg.method.k_min,
            cfg.method.alpha,
            cfg.method.beta,
            val_fraction=cfg.method.val_fraction,
            seed=seed,
        )
        assignments = part.assign_dataset(train)
        cluster_states = {}
        for q in range(part.n_clusters):
            rows = np.flatnonzero(assignments == q)
            enc = encode.encode_plain(train.subset(rows), ZeroImputer())
            model, rates = classify.train_intervention(enc, interv)
            cluster_states[q] = {"model": model, "rates": rates}
        state.update(partition=part, clusters=cluster_states)
        preds = _predict_clustered(state, train, seed)
    elif name == "fairmissbag":
        ens = classify.train_fair_bagging(
            train,
            cfg.method.bags,
            interv,
            imputer_spec=cfg.method.imputer,
            mode=cfg.method.mode,
            seed=seed,
        )
        state["ensemble"] = ens
        preds = classify.predict_dataset(ens, train, seed)
    else:
        raise ConfigError(f"unknown method {name!r}")

    return FittedPipeline(name, scaler, state, metrics.accuracy(preds, train))


def _predict_encoded(state: dict, enc: encode.EncodedDataset, seed: int) -> np.ndarray:
    model = state["model"]
    preds = model.predict(enc.matrix)
    if state.get("rates") is not None:
        preds = classify.apply_postprocess(state["rates"], preds, enc.sensitive, seed)
    return preds


def _predict_clustered(state: dict, ds: data.Dataset, seed: int) -> np.ndarray:
    part = state["partition"]
    assignments = part.assign_dataset(ds)
    preds = np.empty(ds.n_samples, dtype=np.int64)
    for q in sorted(state["clusters"].keys()):
        rows = np.flatnonzero(assignments == q)
        if rows.size == 0:
            continue
        sub = ds.subset(rows)
        enc = encode.encode_plain(sub, ZeroImputer())
        preds[rows] = _predict_encoded(state["clusters"][q], enc, seed + q)
    return preds


def evaluate_pipeline(fp: FittedPipeline, test: data.Dataset, seed: int) -> dict:
    test = fp.scaler.transform(test)
    if fp.method in ("impute-then-classify", "indicators", "affine"):
        if fp.method == "impute-then-classify":
            enc = encode.encode_plain(test, fp.state["imputer"])
        elif fp.method == "indicators":
            enc = encode.encode_indicators(test)
        else:
            enc = fp.state["encoder"].transform(test)
        preds = _predict_encoded(fp.state, enc, seed)
    elif fp.method == "clustering":
        preds = _predict_clustered(fp.state, test, seed)
    else:
        ens = fp.state["ensemble"]
        preds = classify.predict_dataset(ens, test, seed)
    rates = metrics.group_rates(preds, test)
    return {
        "train_accuracy": fp.train_accuracy,
        "test_accuracy": metrics.accuracy(preds, test),
        "fnr_diff": metrics.disparity(rates, "fnr-diff"),
        "fpr_diff": metrics.disparity(rates, "fpr-diff"),
        "meo": metrics.disparity(rates, "meo"),
    }


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------

METRIC_NAMES = ("train_accuracy", "test_accuracy", "fnr_diff", "fpr_diff", "meo")


@dataclass
class RunResult:
    method: str
    grid: list
    raw: list            # dicts: grid_id, params, repeat, metrics...
    aggregated: dict     # gid -> {metric: (mean, stderr)}
    pareto: list         # gids surviving Pareto filtering
    failures: list       # dicts: repeat, grid_id, error
    table_mode: bool = False

    @property
    def succeeded(self) -> bool:
        if self.table_mode:
            return bool(self.aggregated)
        done = {rec["grid_id"] for rec in self.raw}
        return all(gp.gid in done for gp in self.grid)


def _load_source(cfg: ExperimentConfig):
    d = cfg.data
    if d.source == "csv":
        schema = data.read_schema(d.schema)
        return data.load_csv(d.path, schema, d.sensitive_values or None)
    if d.source == "synthetic":
        return simulate.gen_synthetic(cfg.sweep.seed)
    alpha1 = d.alpha0 if d.alpha1 is None else d.alpha1
    dist = simulate.MaskedPositives((d.alpha0, alpha1), (d.q0, 1.0 - d.q0))
    if d.samples > 0:
        return simulate.sample_masked_positives(dist, d.samples, cfg.sweep.seed)
    return dist


def exact_table_analysis(dist: simulate.MaskedPositives, epsilons) -> list:
    """Constrained-accuracy values on the exact table versus its imputations.

    For each tolerance: the exact optimum on the original table, the best
    optimum over imputations mapping the missing symbol to 1 with probability
    p on an 11-point grid, and their gap. ``mi_bits`` is the exact mutual
    information between the missing indicator and the label.
    """
    table = simulate.masked_positives_table(dist)
    rows = []
    for i, eps in enumerate(epsilons):
        f_orig, _ = metrics.best_fair_accuracy(table, eps)
        f_imp = max(
            metrics.best_fair_accuracy(table.impute_na(p), eps)[0]
            for p in np.linspace(0.0, 1.0, 11)
        )
        rows.append(
            {
                "grid_id": f"g{i}",
                "params": f"epsilon={_fmt(eps)}",
                "f_eps_original": f_orig,
                "f_eps_imputed_best": f_imp,
                "gap": f_orig - f_imp,
                "mi_bits": table.mutual_info_my(),
            }
        )
    return rows


def _mean_stderr(vals) -> tuple:
    v = np.asarray(vals, dtype=np.float64)
    mean = float(np.mean(v))
    stderr = float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return mean, stderr


def sweep_and_aggregate(per_repeat: list) -> dict:
    """Mean and standard error (sample stddev / sqrt(n)) per grid point.

    ``per_repeat`` maps, for each repeat, grid id -> metric dict. All repeats
    must cover the same grid ids.
    """
    if not per_repeat:
        return {}
    grids = [tuple(sorted(rep.keys())) for rep in per_repeat]
    if len(set(grids)) > 1:
        raise ConfigError("repeats disagree on the hyperparameter grid")
    out = {}
    for gid in grids[0]:
        out[gid] = {}
        for metric in per_repeat[0][gid]:
            out[gid][metric] = _mean_stderr([rep[gid][metric] for rep in per_repeat])
    return out


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    validate_config(cfg)
    source = _load_source(cfg)
    grid = grid_points(cfg.intervention)

    if isinstance(source, simulate.MaskedPositives):
        eps = cfg.intervention.epsilons if cfg.intervention.name == "eqodds" else (0.0,)
        rows = exact_table_analysis(source, eps)
        aggregated = {
            r["grid_id"]: {
                m: (r[m], 0.0)
                for m in ("f_eps_original", "f_eps_imputed_best", "gap", "mi_bits")
            }
            for r in rows
        }
        result = RunResult("exact-table", grid, rows, aggregated, [], [], table_mode=True)
        _write_outputs(cfg, result)
        return result

    ds = source
    if cfg.data.balance:
        ds = data.balance_cells(ds, cfg.sweep.seed)

    raw, failures = [], []
    per_repeat_ok = []
    for r in range(cfg.sweep.repeats):
        seed_r = cfg.sweep.seed + r
        try:
            ds_r = ds
            if cfg.missingness is not None and cfg.sweep.inject_before_split:
                ds_r = simulate.inject_missing(ds_r, cfg.missingness, seed_r * 1000)
            train, test = data.split_train_test(ds_r, cfg.sweep.test_fraction, seed_r)
            if cfg.missingness is not None and not cfg.sweep.inject_before_split:
                train = simulate.inject_missing(train, cfg.missingness, seed_r * 1000)
                test = simulate.inject_missing(test, cfg.missingness, seed_r * 1000 + 500)
        except FairmissError as exc:
            log.warning("repeat %d aborted: %s", r, exc)
            failures.append({"repeat": r, "grid_id": "", "error": str(exc)})
            continue
        rep_metrics = {}
        for g_idx, gp in enumerate(grid):
            try:
                fitted = fit_pipeline(train, cfg, gp, seed_r)
                eval_seed = seed_r * 1000 + 700 + g_idx
                rep_metrics[gp.gid] = evaluate_pipeline(fitted, test, eval_seed)
            except FairmissError as exc:
                log.warning("repeat %d grid %s aborted: %s", r, gp.gid, exc)
                failures.append({"repeat": r, "grid_id": gp.gid, "error": str(exc)})
        if rep_metrics:
            for gp in grid:
                if gp.gid in rep_metrics:
                    rec = {"grid_id": gp.gid, "params": gp.label, "repeat": r}
                    rec.update(rep_metrics[gp.gid])
                    raw.append(rec)
            per_repeat_ok.append(rep_metrics)

    if per_repeat_ok and all(len(rep) == len(grid) for rep in per_repeat_ok):
        aggregated = sweep_and_aggregate(per_repeat_ok)
    else:
        aggregated = {}
        for gp in grid:
            vals = [rep[gp.gid] for rep in per_repeat_ok if gp.gid in rep]
            if vals:
                aggregated[gp.gid] = {
                    m: _mean_stderr([v[m] for v in vals]) for m in METRIC_NAMES
                }
    pareto_gids = _pareto_gids(grid, aggregated)
    result = RunResult(cfg.method.name, grid, raw, aggregated, pareto_gids, failures)
    _write_outputs(cfg, result)
    return result


def _pareto_gids(grid, aggregated) -> list:
    points = []
    for gp in grid:
        if gp.gid not in aggregated:
            continue
        agg = aggregated[gp.gid]
        points.append(
            metrics.TradeoffPoint(
                min(max(agg["test_accuracy"][0], 0.0), 1.0),
                min(max(agg["meo"][0], 0.0), 1.0),
                provenance=(("grid_id", gp.gid),),
            )
        )
    frontier = metrics.pareto_frontier(points)
    kept = {dict(p.provenance)["grid_id"] for p in frontier}
    return [gp.gid for gp in grid if gp.gid in kept]


def _write_outputs(cfg: ExperimentConfig, result: RunResult) -> None:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_gid = {gp.gid: gp for gp in result.grid}

    if result.table_mode:
        lines = [",".join(TABLE_COLUMNS)]
        for rec in result.raw:
            lines.append(
                ",".join(
                    [
                        "exact-table", rec["grid_id"], rec["params"], "0",
                        _fmt(rec["f_eps_original"]), _fmt(rec["f_eps_imputed_best"]),
                        _fmt(rec["gap"]), _fmt(rec["mi_bits"]),
                    ]
                )
            )
        (out / "raw.csv").write_text("\n".join(lines) + "\n")
        lines = [",".join(SUMMARY_COLUMNS)]
        for rec in result.raw:
            for m in ("f_eps_original", "f_eps_imputed_best", "gap", "mi_bits"):
                lines.append(
                    ",".join(
                        ["exact-table", rec["grid_id"], rec["params"], m, _fmt(rec[m]), "0"]
                    )
                )
        (out / "summary.csv").write_text("\n".join(lines) + "\n")
        (out / "pareto.csv").write_text(",".join(PARETO_COLUMNS) + "\n")
        return

    lines = [",".join(RAW_COLUMNS)]
    for rec in sorted(result.raw, key=lambda r: (r["grid_id"], r["repeat"])):
        lines.append(
            ",".join(
                [result.method, rec["grid_id"], rec["params"], str(rec["repeat"])]
                + [_fmt(rec[m]) for m in METRIC_NAMES]
            )
        )
    (out / "raw.csv").write_text("\n".join(lines) + "\n")

    lines = [",".join(SUMMARY_COLUMNS)]
    for gid in sorted(result.aggregated.keys()):
        for m in METRIC_NAMES:
            mean, stderr = result.aggregated[gid][m]
            lines.append(
                ",".join(
                    [result.method, gid, by_gid[gid].label, m, _fmt(mean), _fmt(stderr)]
                )
            )
    (out / "summary.csv").write_text("\n".join(lines) + "\n")

    lines = [",".join(PARETO_COLUMNS)]
    for gid in result.pareto:
        agg = result.aggregated[gid]
        lines.append(
            ",".join(
                [
                    result.method, gid, by_gid[gid].label,
                    _fmt(agg["test_accuracy"][0]), _fmt(agg["test_accuracy"][1]),
                    _fmt(agg["meo"][0]), _fmt(agg["meo"][1]),
                ]
            )
        )
    (out / "pareto.csv").write_text("\n".join(lines) + "\n")
