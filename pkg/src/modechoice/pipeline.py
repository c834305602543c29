"""End-to-end study: generate, split, estimate, tune, evaluate, interpret.

:func:`run_pipeline` writes every table as CSV into one directory.  All
randomness flows from ``RunConfig.seed`` through :func:`derive_seed`, so two
runs with the same configuration produce byte-identical CSV files.  Model
artifacts carry a timestamp in their metadata and are the only files that
differ between runs.
"""
import json
import logging
import os
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from modechoice._util import atomic_write_text, config_digest, derive_seed, write_csv_rows
from modechoice.data import (
    FEATURE_NAMES,
    MODE_KEYS,
    N_MODES,
    apply_minmax,
    fit_minmax,
    load_csv,
    stratified_split,
    write_csv,
)
from modechoice.econ import (
    SegmentSpec,
    elasticity_table,
    get_scenario,
    segment_consumer_surplus,
    segment_vot,
)
from modechoice.evaluation import (
    TRAINERS,
    class_centroid_distances,
    classification_report,
    confusion_matrix,
    grid_search_cv,
    modal_share_report,
)
from modechoice.exceptions import ConfigError
from modechoice.interpret import (
    average_ice,
    feature_grid,
    feature_importance,
    ice_curves,
    scenario_average_change,
)
from modechoice.mnl import MnlModel, default_spec, estimate_mnl
from modechoice.persistence import ModelArtifact, save_model
from modechoice.synthetic import SyntheticConfig, generate_synthetic
from modechoice.trees import BoostHyper, ForestHyper, TreeHyper

log = logging.getLogger(__name__)

ML_MODELS = ("dt", "rf", "gbt", "svm")
ALL_MODELS = ("mnl",) + ML_MODELS

_HYPER_NAMES = {
    "dt": {f.name for f in fields(TreeHyper)},
    "rf": {f.name for f in fields(ForestHyper)} - {"seed"},
    "gbt": {f.name for f in fields(BoostHyper)} - {"seed"},
    "svm": {"C", "kernel", "gamma", "tol"},
}

NATIVE_IMPORTANCE = {"dt": "weighted-impurity", "rf": "mean-decrease-impurity", "gbt": "gain"}

#: Small slices of the tabulated search spaces, sized for a laptop run.
REDUCED_GRIDS = {
    "mnl": {},
    "dt": {"grid": {"max_depth": [4, 8, 14], "min_samples_leaf": [1, 5], "ccp_alpha": [0.0, 0.001]}},
    "rf": {"grid": {"n_trees": [10, 30], "max_depth": [6, 10]}},
    "gbt": {"grid": {"max_depth": [3], "eta": [0.1], "gamma": [0.0], "n_rounds": [40],
                     "min_child_weight": [1, 5]}},
    "svm": {"grid": {"C": [1.0, 10.0]}},
}

DEFAULT_SCENARIOS = ("cost_up_10", "cost_up_20", "income_up_10", "time_down_10", "time_down_20")


def _default_models():
    return json.loads(json.dumps(REDUCED_GRIDS))


@dataclass
class RunConfig:
    """Validated settings of one pipeline run.

    ``models`` maps a model key to ``{"grid": {name: [values]}}`` (tuned by
    k-fold search) or ``{"params": {name: value}}`` (trained as given).  The
    MNL entry takes no options.
    """

    seed: int = 0
    data: str = None
    n_observations: int = 5000
    train_fraction: float = 0.7
    scale: bool = True
    cv_folds: int = 5
    models: dict = field(default_factory=_default_models)
    scenarios: list = field(default_factory=lambda: list(DEFAULT_SCENARIOS))
    cs_scenario: str = "private_cost_up_metro_at_bus"
    segments: dict = field(default_factory=lambda: {
        "gender": [], "income": [7730.0], "trip_purpose": [], "occupation": []})
    permutation_repeats: int = 10
    ice_models: list = field(default_factory=lambda: ["rf", "gbt"])
    ice_features: list = field(default_factory=lambda: ["tc_bus", "tt_bus", "hh_income"])
    ice_grid: int = 50
    ice_instances: int = 50

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(doc)

    def to_dict(self):
        return asdict(self)

    def digest(self):
        return config_digest(self.to_dict())

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(isinstance(self.seed, int) and self.seed >= 0, "seed must be a non-negative integer")
        need(self.data is not None or (isinstance(self.n_observations, int) and self.n_observations >= 10),
             "n_observations must be an integer >= 10")
        need(0.0 < float(self.train_fraction) < 1.0, "train_fraction must be in (0, 1)")
        need(isinstance(self.cv_folds, int) and self.cv_folds >= 2, "cv_folds must be >= 2")
        need(isinstance(self.models, dict), "models must be an object")
        for name, entry in self.models.items():
            need(name in ALL_MODELS, f"unknown model {name!r}; expected one of {ALL_MODELS}")
            need(isinstance(entry, dict), f"models.{name} must be an object")
            extra = set(entry) - {"grid", "params"}
            need(not extra, f"models.{name}: unknown key(s) {sorted(extra)}")
            if name == "mnl":
                need(not entry, "models.mnl takes no options")
                continue
            need(len(entry) == 1, f"models.{name} needs exactly one of 'grid' or 'params'")
            values = entry.get("grid", entry.get("params"))
            need(isinstance(values, dict), f"models.{name}: grid/params must be an object")
            bad = set(values) - _HYPER_NAMES[name]
            need(not bad, f"models.{name}: unknown hyperparameter(s) {sorted(bad)}")
            if "grid" in entry:
                for k, v in values.items():
                    need(isinstance(v, list) and v, f"models.{name}.grid.{k} must be a non-empty list")
        for s in list(self.scenarios) + [self.cs_scenario]:
            try:
                get_scenario(s)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"unknown scenario {s!r}") from exc
        for dim, edges in self.segments.items():
            try:
                SegmentSpec(dim, tuple(edges))
            except ValueError as exc:
                raise ConfigError(f"segments.{dim}: {exc}") from exc
        need(isinstance(self.permutation_repeats, int) and self.permutation_repeats >= 1,
             "permutation_repeats must be >= 1")
        for f in self.ice_features:
            need(f in FEATURE_NAMES, f"unknown ICE feature {f!r}")
        for m in self.ice_models:
            need(m in self.models, f"ICE model {m!r} is not among the configured models")
        need(isinstance(self.ice_grid, int) and self.ice_grid >= 2, "ice_grid must be >= 2")
        need(isinstance(self.ice_instances, int) and self.ice_instances >= 1, "ice_instances must be >= 1")


def _json_cell(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _train_ml(name, params, X, y, seed):
    return TRAINERS[name](X, y, seed=seed, **params)


class _Run:
    def __init__(self, cfg, outdir):
        self.cfg = cfg
        self.out = outdir
        self.written = []

    def path(self, name):
        return os.path.join(self.out, name)

    def csv(self, name, header, rows):
        write_csv_rows(self.path(name), header, rows)
        self.written.append(name)


def prepare_data(cfg):
    """The dataset, its train/test split and the (optional) train-fitted scaler."""
    if cfg.data is not None:
        d = load_csv(cfg.data)
    else:
        d = generate_synthetic(SyntheticConfig(cfg.n_observations,
                                               rng_seed=derive_seed(cfg.seed, "generate")))
    train, test = stratified_split(d, cfg.train_fraction, derive_seed(cfg.seed, "split"))
    scaler = fit_minmax(train) if cfg.scale else None
    return d, train, test, scaler


def run_pipeline(config, outdir):
    """Run the full study and write its tables into ``outdir``.

    Parameters
    ----------
    config : RunConfig or dict
    outdir : path
        Created if missing.  Existing files with the same names are replaced
        atomically.

    Returns
    -------
    dict
        ``{"files": [...], "models": {name: predictor}, "config_digest": str}``
    """
    cfg = config if isinstance(config, RunConfig) else RunConfig.from_dict(config)
    cfg.validate()
    os.makedirs(outdir, exist_ok=True)
    os.makedirs(os.path.join(outdir, "models"), exist_ok=True)
    run = _Run(cfg, outdir)
    digest = cfg.digest()
    atomic_write_text(run.path("run_config.json"),
                      json.dumps({"config": cfg.to_dict(), "digest": digest}, indent=2, sort_keys=True) + "\n")

    d, train, test, scaler = prepare_data(cfg)
    write_csv(d, run.path("data.csv"))
    test_ids = set(test.ids.tolist())
    run.csv("split.csv", ["id", "partition"],
            [[int(i), "test" if int(i) in test_ids else "train"] for i in d.ids])
    Xtr_raw, Xte_raw = train.feature_matrix(), test.feature_matrix()
    Xtr = Xtr_raw if scaler is None else apply_minmax(scaler, train).feature_matrix()
    ytr, yte = train.chosen, test.chosen

    predictors = {}
    performance = []

    # ---------------------------------------------------------------- MNL
    if "mnl" in cfg.models:
        spec = default_spec()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = estimate_mnl(spec, train)
        mnl = MnlModel.from_estimate(est)
        predictors["mnl"] = mnl
        atomic_write_text(run.path("models/mnl.json"), est.to_json() + "\n")
        run.csv("mnl_estimates.csv", ["parameter", "estimate", "std_error", "t_stat"], est.table())
        run.csv("mnl_fit.csv", ["statistic", "value"], [
            ["n_obs", est.n_obs], ["ll_final", est.ll_final], ["ll_constants_only", est.ll_constants_only],
            ["rho2", est.rho2], ["adj_rho2", est.adj_rho2], ["iterations", est.iterations],
            ["converged", int(est.converged)]])
        vot_rows = []
        for dim, edges in cfg.segments.items():
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                rows = segment_vot(spec, train, SegmentSpec(dim, tuple(edges)))
            vot_rows += [[dim, r.segment, r.n_obs, r.beta_tt, r.beta_tc, r.vot] for r in rows]
        run.csv("vot_segments.csv", ["dimension", "segment", "n_obs", "beta_tt", "beta_tc", "vot"], vot_rows)
        run.csv("elasticities_tc.csv", ["mode", "mean_probability", "self_elasticity", "cross_elasticity"],
                elasticity_table(spec, est.params, train, "tc"))
        cs = get_scenario(cfg.cs_scenario)
        alpha = -est.params["beta_tc"]
        cs_rows = []
        if alpha > 0:
            for dim, edges in cfg.segments.items():
                for r in segment_consumer_surplus(spec, est.params, train, cs, SegmentSpec(dim, tuple(edges)),
                                                  alpha=alpha):
                    cs_rows.append([cs.name, dim, r.segment, r.n_obs, r.total, r.mean])
        run.csv("consumer_surplus.csv", ["scenario", "dimension", "segment", "n_obs", "total", "mean"], cs_rows)

    # ------------------------------------------------------- ML models
    tune_seed = derive_seed(cfg.seed, "tune")
    for name in ML_MODELS:
        if name not in cfg.models:
            continue
        entry = cfg.models[name]
        if "grid" in entry:
            res = grid_search_cv(name, entry["grid"], Xtr, ytr, cfg.cv_folds, tune_seed)
            params = res.best_params
            run.csv(f"tuning_{name}.csv", ["trial", "params", "mean_macro_f1", "fold_scores", "error"],
                    [[t.index, _json_cell(t.params), t.mean_score, _json_cell(list(t.fold_scores)),
                      t.error or ""] for t in res.trials])
        else:
            params = dict(entry["params"])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = _train_ml(name, params, Xtr, ytr, derive_seed(cfg.seed, "fit", ALL_MODELS.index(name)))
        art = ModelArtifact.build(model, scaler, seed=cfg.seed, config_digest=digest)
        save_model(art, run.path(f"models/{name}.json"))
        predictors[name] = art.predictor()
        performance.append((name, params))

    # ---------------------------------------------------- evaluation
    perf_rows = []
    for name, pred in predictors.items():
        params = next((p for n, p in performance if n == name), {})
        reports = {}
        for split, X, y in (("train", Xtr_raw, ytr), ("test", Xte_raw, yte)):
            cm = confusion_matrix(y, pred.predict(X))
            reports[split] = classification_report(cm)
            header = ["actual"] + list(MODE_KEYS)
            run.csv(f"confusion_{name}_{split}.csv", header,
                    [[MODE_KEYS[k]] + cm.counts[k].tolist() for k in range(N_MODES)])
            pct = cm.percent()
            run.csv(f"confusion_pct_{name}_{split}.csv", header,
                    [[MODE_KEYS[k]] + pct[k].tolist() for k in range(N_MODES)])
        perf_rows.append([name, reports["train"].macro_f1, reports["test"].macro_f1,
                          reports["train"].accuracy, reports["test"].accuracy, _json_cell(params)])
    run.csv("performance.csv", ["model", "train_macro_f1", "test_macro_f1", "train_accuracy",
                                       "test_accuracy", "params"], perf_rows)

    dist = class_centroid_distances(d)
    run.csv("centroid_distances.csv", ["mode"] + list(MODE_KEYS),
            [[MODE_KEYS[k]] + [None if np.isnan(v) else v for v in dist.matrix[k]] for k in range(N_MODES)])

    prob_models = {n: p for n, p in predictors.items() if n in ("rf", "gbt", "mnl", "dt")}
    if prob_models:
        shares = modal_share_report({n: p.predict_proba(Xte_raw) for n, p in prob_models.items()}, yte)
        run.csv("modal_shares.csv", shares.header(), shares.rows())

    # ------------------------------------------------- interpretation
    for name, pred in predictors.items():
        if name == "mnl":
            continue
        rows = []
        if name in NATIVE_IMPORTANCE:
            rep = feature_importance(pred, NATIVE_IMPORTANCE[name])
            rows += [[rep.method, f, s, None] for f, s in zip(rep.feature_names, rep.scores)]
        rep = feature_importance(pred, "permutation", Xte_raw, yte, repeats=cfg.permutation_repeats,
                                 seed=derive_seed(cfg.seed, "permutation", ALL_MODELS.index(name)))
        rows += [[rep.method, f, s, e] for f, s, e in zip(rep.feature_names, rep.scores, rep.std)]
        run.csv(f"importance_{name}.csv", ["method", "feature", "score", "std"], rows)

    rng = np.random.default_rng(derive_seed(cfg.seed, "ice-sample"))
    sample = np.sort(rng.choice(len(test), size=min(cfg.ice_instances, len(test)), replace=False))
    for name in cfg.ice_models:
        pred = predictors[name]
        for feat in cfg.ice_features:
            j = FEATURE_NAMES.index(feat)
            try:
                grid = feature_grid(Xte_raw[:, j], cfg.ice_grid)
            except ValueError:
                log.warning("ICE skipped for constant feature %s", feat)
                continue
            curves = ice_curves(pred, Xte_raw[sample], feat, grid=grid)
            run.csv(f"ice_{name}_{feat}.csv", ["instance_id", "grid_index", "value", "mode", "probability"],
                    [[int(test.ids[sample[i]]), gi, c.grid[gi], MODE_KEYS[k], c.probabilities[gi, k]]
                     for i, c in enumerate(curves) for gi in range(grid.size) for k in range(N_MODES)])
            g, mean = average_ice(ice_curves(pred, Xte_raw, feat, grid=grid))
            run.csv(f"ice_avg_{name}_{feat}.csv", ["grid_index", "value"] + list(MODE_KEYS),
                    [[gi, g[gi]] + mean[gi].tolist() for gi in range(g.size)])

    delta_rows = []
    for name, pred in predictors.items():
        for s in cfg.scenarios:
            sd = scenario_average_change(pred, test, get_scenario(s))
            delta_rows += [[name, sd.scenario, MODE_KEYS[k], sd.delta_pp[k]] for k in range(N_MODES)]
    run.csv("scenario_deltas.csv", ["model", "scenario", "mode", "delta_pp"], delta_rows)

    return {"files": ["run_config.json", "data.csv"] + run.written, "models": predictors,
            "config_digest": digest}

