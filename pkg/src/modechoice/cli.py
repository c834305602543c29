"""Command-line entry point: ``modechoice <subcommand> [flags]``.

Exit status is 0 on success, 1 on usage or validation errors and 2 on
runtime failures.  Every subcommand takes ``--config FILE`` (a JSON object
of flag defaults); flags given on the command line win over the file.
"""
import argparse
import json
import logging
import sys
import warnings

import numpy as np

from modechoice._util import atomic_write_text, derive_seed, write_csv_rows
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
    value_of_time,
)
from modechoice.evaluation import TRAINERS, classification_report, confusion_matrix, grid_search_cv
from modechoice.exceptions import ConfigError, ModeChoiceError
from modechoice.interpret import emit_plot_data, feature_importance, ice_curves, scenario_average_change
from modechoice.mnl import default_spec, estimate_mnl
from modechoice.persistence import ModelArtifact, load_model, save_model
from modechoice.pipeline import RunConfig, run_pipeline
from modechoice.synthetic import SyntheticConfig, generate_synthetic

log = logging.getLogger("modechoice")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _json_arg(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}") from exc


def build_parser():
    p = _Parser(prog="modechoice", description="Travel mode-choice modeling toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def cmd(name, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--config", help="JSON file of flag defaults")
        return sp

    g = cmd("generate", "Draw a synthetic survey CSV.")
    g.add_argument("--n", type=int, help="number of trips (default 5000)")
    g.add_argument("--seed", type=int, help="master seed (default 0)")
    g.add_argument("--out", help="output CSV")

    s = cmd("split", "Stratified train/test split.")
    s.add_argument("--data", help="input CSV")
    s.add_argument("--train-fraction", type=float, help="share of rows for training (default 0.7)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out-train", help="training CSV")
    s.add_argument("--out-test", help="test CSV")

    t = cmd("train", "Fit one model and save it as JSON.")
    t.add_argument("--model", choices=["mnl"] + list(TRAINERS))
    t.add_argument("--data", help="training CSV")
    t.add_argument("--params", type=_json_arg, help="hyperparameters as a JSON object")
    t.add_argument("--no-scale", action="store_true", default=None, help="skip min-max scaling")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help="model JSON")

    u = cmd("tune", "K-fold grid search for one ML model.")
    u.add_argument("--model", choices=list(TRAINERS))
    u.add_argument("--data", help="training CSV")
    u.add_argument("--grid", type=_json_arg, help='JSON object, e.g. {"max_depth": [3, 5]}')
    u.add_argument("--folds", type=int, help="number of folds (default 5)")
    u.add_argument("--no-scale", action="store_true", default=None)
    u.add_argument("--seed", type=int)
    u.add_argument("--out", help="trial log CSV")

    e = cmd("evaluate", "Metrics and confusion matrix of a saved model.")
    e.add_argument("--model", help="model JSON")
    e.add_argument("--data", help="evaluation CSV")
    e.add_argument("--out", help="metrics CSV")
    e.add_argument("--confusion", help="confusion-matrix CSV (counts)")

    i = cmd("interpret", "Feature importance, ICE curves or scenario deltas.")
    i.add_argument("--model", help="model JSON")
    i.add_argument("--data", help="evaluation CSV")
    i.add_argument("--method", help="importance method (gain, mean-decrease-impurity, ...)")
    i.add_argument("--ice", metavar="FEATURE", help="feature to sweep for ICE curves")
    i.add_argument("--n-grid", type=int, help="ICE grid size (default 50)")
    i.add_argument("--scenario", action="append", help="scenario preset or JSON file (repeatable)")
    i.add_argument("--repeats", type=int, help="permutation repeats (default 10)")
    i.add_argument("--seed", type=int)
    i.add_argument("--out", help="output CSV")

    c = cmd("econ", "Value of time, elasticities or consumer surplus from an MNL model.")
    c.add_argument("--model", help="MNL estimate JSON")
    c.add_argument("--data", help="CSV the measures are computed on")
    c.add_argument("--what", choices=["vot", "elasticity", "surplus"])
    c.add_argument("--segment", help="segment dimension for vot/surplus (gender, income, ...)")
    c.add_argument("--edges", type=_json_arg, help="income band edges as a JSON list")
    c.add_argument("--scenario", help="scenario for surplus")
    c.add_argument("--attribute", choices=["tc", "tt"], help="elasticity attribute (default tc)")
    c.add_argument("--out", help="output CSV")

    r = cmd("report", "Run the full pipeline and write every table.")
    r.add_argument("--out-dir", help="output directory")
    r.add_argument("--seed", type=int)
    r.add_argument("--data", help="use this CSV instead of generating data")
    return p


_DEFAULTS = {
    "generate": {"n": 5000, "seed": 0},
    "split": {"train_fraction": 0.7, "seed": 0},
    "train": {"params": {}, "no_scale": False, "seed": 0},
    "tune": {"folds": 5, "no_scale": False, "seed": 0},
    "evaluate": {},
    "interpret": {"n_grid": 50, "repeats": 10, "seed": 0},
    "econ": {"attribute": "tc"},
    "report": {},
}
_REQUIRED = {
    "generate": ["out"],
    "split": ["data", "out_train", "out_test"],
    "train": ["model", "data", "out"],
    "tune": ["model", "data", "grid", "out"],
    "evaluate": ["model", "data", "out"],
    "interpret": ["model", "data", "out"],
    "econ": ["model", "data", "what", "out"],
    "report": ["out_dir"],
}


def _resolve(args):
    """Merge built-in defaults, the config file and the command-line flags."""
    opts = dict(_DEFAULTS[args.command])
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    file_cfg = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            try:
                file_cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config}: invalid JSON ({exc})") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"{args.config}: configuration must be a JSON object")
    if args.command != "report":
        unknown = sorted(set(k.replace("-", "_") for k in file_cfg) - set(flags))
        if unknown:
            raise ConfigError(f"unknown configuration key(s) for {args.command}: {', '.join(unknown)}")
        opts.update({k.replace("-", "_"): v for k, v in file_cfg.items()})
    for k, v in flags.items():
        if v is not None:
            opts[k] = v
    missing = [k for k in _REQUIRED[args.command] if opts.get(k) is None]
    if missing:
        raise UsageError(f"modechoice {args.command}: missing required flag(s): "
                         + ", ".join("--" + m.replace("_", "-") for m in missing))
    return opts, file_cfg


def _scaled_matrix(d, scale, scaler=None):
    if not scale:
        return d.feature_matrix(), None
    scaler = scaler or fit_minmax(d)
    return apply_minmax(scaler, d).feature_matrix(), scaler


def _predictor(path):
    art = load_model(path)
    return art.predictor(), art


def _cmd_generate(o, _):
    d = generate_synthetic(SyntheticConfig(int(o["n"]), rng_seed=derive_seed(int(o["seed"]), "generate")))
    write_csv(d, o["out"])
    log.info("wrote %d rows to %s", len(d), o["out"])


def _cmd_split(o, _):
    d = load_csv(o["data"])
    tr, te = stratified_split(d, float(o["train_fraction"]), derive_seed(int(o["seed"]), "split"))
    write_csv(tr, o["out_train"])
    write_csv(te, o["out_test"])


def _cmd_train(o, _):
    d = load_csv(o["data"])
    if o["model"] == "mnl":
        if o["params"]:
            raise ConfigError("the mnl model takes no --params")
        est = estimate_mnl(default_spec(), d)
        atomic_write_text(o["out"], est.to_json() + "\n")
        return
    X, scaler = _scaled_matrix(d, not o["no_scale"])
    params = o["params"]
    if not isinstance(params, dict):
        raise ConfigError("--params must be a JSON object")
    try:
        model = TRAINERS[o["model"]](X, d.chosen, seed=int(o["seed"]), **params)
    except TypeError as exc:
        raise ConfigError(f"bad hyperparameters for {o['model']}: {exc}") from exc
    save_model(ModelArtifact.build(model, scaler, seed=int(o["seed"])), o["out"])


def _cmd_tune(o, _):
    d = load_csv(o["data"])
    X, _ = _scaled_matrix(d, not o["no_scale"])
    if not isinstance(o["grid"], dict):
        raise ConfigError("--grid must be a JSON object of lists")
    res = grid_search_cv(o["model"], o["grid"], X, d.chosen, int(o["folds"]), int(o["seed"]))
    dump = lambda v: json.dumps(v, sort_keys=True, separators=(",", ":"))  # noqa: E731
    write_csv_rows(o["out"], ["trial", "params", "mean_macro_f1", "fold_scores", "error", "best"],
                   [[t.index, dump(t.params), t.mean_score, dump(list(t.fold_scores)), t.error or "",
                     int(t.params == res.best_params)] for t in res.trials])
    print(json.dumps({"best_params": res.best_params, "best_score": res.best_score}))


def _cmd_evaluate(o, _):
    pred, _ = _predictor(o["model"])
    d = load_csv(o["data"])
    cm = confusion_matrix(d.chosen, pred.predict(d.feature_matrix()))
    rep = classification_report(cm)
    rows = [[name, p, r, f, s] for name, p, r, f, s in rep.rows()]
    rows += [["macro_f1", None, None, rep.macro_f1, cm.total], ["accuracy_percent", None, None, rep.accuracy,
                                                                 cm.total]]
    write_csv_rows(o["out"], ["class", "precision", "recall", "f1", "support"], rows)
    if o.get("confusion"):
        write_csv_rows(o["confusion"], ["actual"] + list(MODE_KEYS),
                       [[MODE_KEYS[k]] + cm.counts[k].tolist() for k in range(N_MODES)])


def _cmd_interpret(o, _):
    pred, _ = _predictor(o["model"])
    d = load_csv(o["data"])
    chosen = [k for k in ("method", "ice", "scenario") if o.get(k)]
    if len(chosen) != 1:
        raise UsageError("modechoice interpret: give exactly one of --method, --ice, --scenario")
    if o.get("method"):
        rep = feature_importance(pred, o["method"], d, repeats=int(o["repeats"]),
                                 seed=derive_seed(int(o["seed"]), "permutation"))
        emit_plot_data(rep, o["out"])
    elif o.get("ice"):
        if o["ice"] not in FEATURE_NAMES:
            raise ConfigError(f"unknown feature {o['ice']!r}")
        emit_plot_data(ice_curves(pred, d, o["ice"], n_grid=int(o["n_grid"])), o["out"])
    else:
        emit_plot_data([scenario_average_change(pred, d, get_scenario(s)) for s in o["scenario"]], o["out"])


def _cmd_econ(o, _):
    art = load_model(o["model"])
    if art.kind != "mnl":
        raise ConfigError("econ measures need an MNL model")
    model = art.model
    spec, params = model.spec, model.params
    d = load_csv(o["data"])
    what = o["what"]
    if what == "elasticity":
        write_csv_rows(o["out"], ["mode", "mean_probability", "self_elasticity", "cross_elasticity"],
                       elasticity_table(spec, params, d, o["attribute"]))
        return
    if not o.get("segment"):
        if what == "vot":
            write_csv_rows(o["out"], ["segment", "beta_tt", "beta_tc", "vot"],
                           [["all", params["beta_tt"], params["beta_tc"],
                             value_of_time(params["beta_tt"], params["beta_tc"])]])
            return
        raise UsageError("modechoice econ: --what surplus needs --segment")
    seg = SegmentSpec(o["segment"], tuple(o.get("edges") or ()))
    if what == "vot":
        rows = segment_vot(spec, d, seg)
        write_csv_rows(o["out"], ["segment", "n_obs", "beta_tt", "beta_tc", "vot"],
                       [[r.segment, r.n_obs, r.beta_tt, r.beta_tc, r.vot] for r in rows])
    else:
        if not o.get("scenario"):
            raise UsageError("modechoice econ: --what surplus needs --scenario")
        rows = segment_consumer_surplus(spec, params, d, get_scenario(o["scenario"]), seg,
                                        alpha=-params["beta_tc"])
        write_csv_rows(o["out"], ["segment", "n_obs", "total", "mean"],
                       [[r.segment, r.n_obs, r.total, r.mean] for r in rows])


def _cmd_report(o, file_cfg):
    doc = dict(file_cfg)
    for k in ("seed", "data"):
        if o.get(k) is not None:
            doc[k] = o[k]
    run_pipeline(RunConfig.from_dict(doc), o["out_dir"])


_COMMANDS = {
    "generate": _cmd_generate, "split": _cmd_split, "train": _cmd_train, "tune": _cmd_tune,
    "evaluate": _cmd_evaluate, "interpret": _cmd_interpret, "econ": _cmd_econ, "report": _cmd_report,
}

# Input problems a user can fix; everything else is a runtime failure.
_VALIDATION = (ConfigError, ValueError, KeyError, FileNotFoundError, IsADirectoryError)


def run_command(argv=None):
    """Run one subcommand and return its exit status."""
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        opts, file_cfg = _resolve(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:          # --help
        return 0 if not exc.code else 1
    except _VALIDATION as exc:
        print(f"modechoice: {exc}", file=sys.stderr)
        return 1
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore")
            _COMMANDS[args.command](opts, file_cfg)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except _VALIDATION as exc:
        print(f"modechoice {args.command}: {exc}", file=sys.stderr)
        return 1
    except (ModeChoiceError, OSError, RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"modechoice {args.command}: failed: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
