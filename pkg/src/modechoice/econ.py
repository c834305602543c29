"""Econometric post-analysis of a fitted logit model.

Value of time, point elasticities, logsum consumer surplus and policy
scenarios.  Scenarios are declarative lists of column rules; they are also
what the interpretation module uses for its average-change tables.
"""
import fnmatch
import json
import warnings
from dataclasses import dataclass

import numpy as np

from modechoice.data import (
    FEATURE_NAMES,
    MODE_KEYS,
    N_MODES,
    OCCUPATIONS,
    TC_COLUMNS,
    TRIP_PURPOSES,
    TT_COLUMNS,
)
from modechoice.exceptions import (
    AllUnavailableError,
    EmptySegmentWarning,
    ScenarioError,
    UnknownSelectorError,
    ZeroCostCoefficientError,
)
from modechoice.mnl import _availability, choice_probabilities, estimate_mnl, utilities

# ------------------------------------------------------------------------ scenarios

_OPS = ("mul", "set", "set_to_feature")


@dataclass(frozen=True)
class Rule:
    """One perturbation.

    ``selector`` is a feature column name or a shell-style pattern over
    column names (``"tc_*"`` addresses every alternative's cost).  ``op`` is
    ``"mul"`` (multiply by ``value``), ``"set"`` (assign the number
    ``value``) or ``"set_to_feature"`` (copy the column named ``value``).
    """

    selector: str
    op: str
    value: object

    def __post_init__(self):
        if self.op not in _OPS:
            raise ScenarioError(f"unknown op {self.op!r}; expected one of {_OPS}")
        if self.op == "mul":
            v = float(self.value)
            if not np.isfinite(v) or v <= 0:
                raise ScenarioError(f"multiplicative factor must be finite and > 0, got {self.value!r}")
        elif self.op == "set":
            if not np.isfinite(float(self.value)):
                raise ScenarioError("set value must be finite")
        elif not isinstance(self.value, str):
            raise ScenarioError("set_to_feature needs a column name as value")

    def columns(self):
        cols = [c for c in FEATURE_NAMES if fnmatch.fnmatchcase(c, self.selector)]
        if not cols:
            raise UnknownSelectorError(self.selector)
        return cols

    def to_dict(self):
        return {"selector": self.selector, "op": self.op, "value": self.value}


@dataclass(frozen=True)
class Scenario:
    name: str
    rules: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(
            r if isinstance(r, Rule) else Rule(**r) for r in self.rules))

    @classmethod
    def null(cls, name="null"):
        return cls(name, ())

    def to_dict(self):
        return {"name": self.name, "rules": [r.to_dict() for r in self.rules]}

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(str(doc["name"]), tuple(Rule(r["selector"], r["op"], r["value"]) for r in doc["rules"]))
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"malformed scenario document: {exc}") from None

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def load_scenario(path):
    with open(path, encoding="utf-8") as fh:
        return Scenario.from_dict(json.load(fh))


def _scale_all(name, pattern, factor):
    return Scenario(name, (Rule(pattern, "mul", factor),))


#: Named scenario presets used in the average-change tables.
PRESETS = {
    "cost_up_10": _scale_all("cost_up_10", "tc_*", 1.1),
    "cost_up_20": _scale_all("cost_up_20", "tc_*", 1.2),
    "income_up_10": _scale_all("income_up_10", "hh_income", 1.1),
    "time_down_10": _scale_all("time_down_10", "tt_*", 0.9),
    "time_down_20": _scale_all("time_down_20", "tt_*", 0.8),
}

#: Private modes 20% dearer and metro priced at the bus fare.
PRIVATE_COST_METRO_AT_BUS = Scenario("private_cost_up_metro_at_bus", (
    Rule("tc_tw", "mul", 1.2),
    Rule("tc_car", "mul", 1.2),
    Rule("tc_metro", "set_to_feature", "tc_bus"),
))


def get_scenario(name_or_path):
    if isinstance(name_or_path, Scenario):
        return name_or_path
    if name_or_path in PRESETS:
        return PRESETS[name_or_path]
    if name_or_path == PRIVATE_COST_METRO_AT_BUS.name:
        return PRIVATE_COST_METRO_AT_BUS
    if name_or_path == "null":
        return Scenario.null()
    return load_scenario(name_or_path)


def scenario_columns(d, scenario):
    """Perturbed feature columns ``{name: array}`` without building a dataset."""
    cols = {}

    def current(name):
        return cols[name] if name in cols else np.asarray(d.column(name), dtype=float)

    for r in scenario.rules:
        if r.op == "mul":
            for c in r.columns():
                cols[c] = current(c) * float(r.value)
    for r in scenario.rules:
        if r.op == "set":
            for c in r.columns():
                cols[c] = np.full(len(d), float(r.value))
        elif r.op == "set_to_feature":
            if r.value not in FEATURE_NAMES:
                raise UnknownSelectorError(r.value)
            src = current(r.value).copy()
            for c in r.columns():
                cols[c] = src
    return cols


def apply_policy_scenario(d, scenario):
    """Perturbed copy of ``d``; the input is left untouched.

    Multiplicative rules run first in declaration order, then the absolute
    (``set``/``set_to_feature``) rules in declaration order.
    """
    return d.with_columns(scenario_columns(d, scenario))


# ------------------------------------------------------------------------- segments

SEGMENT_DIMENSIONS = ("gender", "income", "trip_purpose", "occupation")


@dataclass(frozen=True)
class SegmentSpec:
    """Partition of a dataset along one dimension.

    For ``income`` the ``edges`` are interior band boundaries: bands are
    ``[-inf, e1), [e1, e2), ..., [ek, inf)``.
    """

    dimension: str
    edges: tuple = ()
    labels: tuple = None

    def __post_init__(self):
        if self.dimension not in SEGMENT_DIMENSIONS:
            raise ValueError(f"unknown segment dimension {self.dimension!r}")
        edges = tuple(float(e) for e in self.edges)
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("band edges must be strictly increasing")
        if self.dimension == "income" and not edges:
            raise ValueError("income segments need at least one band edge")
        object.__setattr__(self, "edges", edges)

    def segments(self, d):
        """List of ``(label, boolean mask)`` pairs covering every row once."""
        if self.dimension == "gender":
            names = self.labels or ("male", "female")
            return [(names[0], d.gender == 0), (names[1], d.gender == 1)]
        if self.dimension == "income":
            bounds = (-np.inf,) + self.edges + (np.inf,)
            names = self.labels or _band_labels(self.edges)
            return [(names[i], (d.hh_income >= lo) & (d.hh_income < hi))
                    for i, (lo, hi) in enumerate(zip(bounds, bounds[1:]))]
        mapping = TRIP_PURPOSES if self.dimension == "trip_purpose" else OCCUPATIONS
        col = d.column(self.dimension)
        codes = sorted(mapping)
        names = self.labels or tuple(mapping[c] for c in codes)
        return [(names[i], col == c) for i, c in enumerate(codes)]


def _band_labels(edges):
    if len(edges) == 1:
        return ("low", "medium")
    if len(edges) == 2:
        return ("low", "medium", "high")
    bounds = ("-inf",) + tuple(f"{e:g}" for e in edges) + ("inf",)
    return tuple(f"[{a},{b})" for a, b in zip(bounds, bounds[1:]))


# ---------------------------------------------------------------- value of time

def value_of_time(beta_tt, beta_tc):
    """Rupees per minute: ratio of the time and cost coefficients."""
    if beta_tc == 0:
        raise ZeroCostCoefficientError("travel cost coefficient is zero")
    return beta_tt / beta_tc


@dataclass(frozen=True)
class VotRow:
    segment: str
    n_obs: int
    beta_tt: float
    beta_tc: float
    vot: float
    se_tt: float = float("nan")
    se_tc: float = float("nan")


def segment_vot(spec, d, seg, **estimate_opts):
    """Re-estimate the model on each segment and report its value of time.

    Empty segments are skipped with an :class:`EmptySegmentWarning`.
    """
    rows = []
    for label, mask in seg.segments(d):
        if not mask.any():
            warnings.warn(f"segment {label!r} is empty; skipped", EmptySegmentWarning, stacklevel=2)
            continue
        est = estimate_mnl(spec, d.subset(np.flatnonzero(mask)), **estimate_opts)
        b_tt, b_tc = est.params["beta_tt"], est.params["beta_tc"]
        i_tt, i_tc = est.params.names.index("beta_tt"), est.params.names.index("beta_tc")
        rows.append(VotRow(label, int(mask.sum()), b_tt, b_tc, value_of_time(b_tt, b_tc),
                           float(est.std_errors[i_tt]), float(est.std_errors[i_tc])))
    return rows


# ------------------------------------------------------------------ elasticities

def self_elasticity(p_i, x_i, beta):
    """Point elasticity of P_i with respect to its own attribute x_i.

    A q-percent change in x_i moves P_i by about ``q`` times this value
    (in percent).
    """
    _check_probability(p_i)
    return (1.0 - p_i) * x_i * beta


def cross_elasticity(p_i, x_i, beta):
    """Point elasticity of every other P_j with respect to x_i (equal for all j)."""
    _check_probability(p_i)
    return -p_i * x_i * beta


def _check_probability(p):
    p = np.asarray(p)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probability outside [0, 1]")


@dataclass(frozen=True, eq=False)
class ElasticityResult:
    alternative: int
    attribute: str
    self_per_obs: np.ndarray
    cross_per_obs: np.ndarray
    probabilities: np.ndarray

    @property
    def self_aggregate(self):
        """Probability-weighted mean of the per-observation self elasticities."""
        w = self.probabilities[:, self.alternative - 1]
        return float(np.sum(w * self.self_per_obs) / np.sum(w))

    def cross_aggregate(self, j):
        w = self.probabilities[:, j - 1]
        return float(np.sum(w * self.cross_per_obs) / np.sum(w))


def mnl_elasticities(spec, params, d, alternative, attribute="tc"):
    """Per-observation point elasticities for a generic attribute of one alternative."""
    name = f"beta_{attribute}"
    if name not in spec.slot_names:
        raise ValueError(f"spec has no generic {attribute!r} coefficient")
    beta = params[name] if hasattr(params, "names") else float(params[spec.slot_names.index(name)])
    cols = TT_COLUMNS if attribute == "tt" else TC_COLUMNS
    x = d.column(cols[alternative - 1])
    P = choice_probabilities(utilities(spec, params, d.feature_matrix(), _availability(d)))
    p = P[:, alternative - 1]
    return ElasticityResult(alternative, attribute, self_elasticity(p, x, beta),
                            cross_elasticity(p, x, beta), P)


def elasticity_table(spec, params, d, attribute="tc"):
    """Rows ``(mode, share, self elasticity, cross elasticity)`` using aggregate values.

    The cross column is the share-weighted response of all other modes,
    pooled over them.
    """
    rows = []
    for alt in range(1, N_MODES + 1):
        res = mnl_elasticities(spec, params, d, alt, attribute)
        others = [j for j in range(1, N_MODES + 1) if j != alt]
        w = res.probabilities[:, [j - 1 for j in others]].sum(axis=1)
        cross = float(np.sum(w * res.cross_per_obs) / np.sum(w))
        share = float(res.probabilities[:, alt - 1].mean())
        rows.append((MODE_KEYS[alt - 1], share, res.self_aggregate, cross))
    return rows


# -------------------------------------------------------------- consumer surplus

def logsum(V):
    """``ln sum_i exp(V_i)`` along the last axis; ``-inf`` entries drop out."""
    V = np.asarray(V, dtype=float)
    vmax = np.max(V, axis=-1)
    if np.any(~np.isfinite(vmax)):
        raise AllUnavailableError("no alternative has finite utility")
    return vmax + np.log(np.sum(np.exp(V - vmax[..., None]), axis=-1))


@dataclass(frozen=True, eq=False)
class SurplusChange:
    scenario: str
    per_obs: np.ndarray
    alpha: float = 1.0

    @property
    def total(self):
        return float(np.sum(self.per_obs))


def consumer_surplus_change(spec, params, d, scenario, alpha=1.0):
    """Per-observation change in expected consumer surplus, ``(1/alpha) * delta logsum``."""
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    av = _availability(d)
    before = logsum(utilities(spec, params, d.feature_matrix(), av))
    after = logsum(utilities(spec, params, apply_policy_scenario(d, scenario).feature_matrix(), av))
    return SurplusChange(scenario.name, (after - before) / alpha, alpha)


@dataclass(frozen=True)
class SurplusRow:
    segment: str
    n_obs: int
    total: float
    mean: float
    empty: bool = False


def segment_consumer_surplus(spec, params, d, scenario, seg, alpha=1.0):
    """Sum the per-observation surplus change within each segment."""
    change = consumer_surplus_change(spec, params, d, scenario, alpha)
    rows = []
    for label, mask in seg.segments(d):
        n = int(mask.sum())
        if n == 0:
            rows.append(SurplusRow(label, 0, 0.0, 0.0, True))
            continue
        total = float(np.sum(change.per_obs[mask]))
        rows.append(SurplusRow(label, n, total, total / n))
    return rows
