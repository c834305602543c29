"""Multinomial logit: utility layout, likelihood, Newton estimation, prediction.

Utilities are linear in the parameters, ``V = X @ beta`` with a design
tensor ``X`` of shape ``(n, 8, K)``.  Generic coefficients (travel time and
cost) fill one slice across all alternatives; alternative-specific terms
(constants and individual characteristics) fill a single alternative's
column.  All slots of the reference alternative are pinned at zero by simply
not existing.
"""
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from modechoice.data import FEATURE_NAMES, MODE_CODES, MODE_KEYS, N_MODES, TC_COLUMNS, TT_COLUMNS
from modechoice.exceptions import (
    AllUnavailableError,
    ConvergenceWarning,
    DimensionMismatchError,
    EmptyDatasetError,
    NonFiniteLikelihoodError,
    QuasiSeparationWarning,
    SchemaVersionMismatchError,
    SingularHessianWarning,
)

ESTIMATE_SCHEMA_VERSION = "1.0"

GENERIC_ATTRIBUTES = {"tt": TT_COLUMNS, "tc": TC_COLUMNS}
#: alternative-specific term -> individual column (``None`` is the constant)
INDIVIDUAL_TERMS = {
    "asc": None,
    "veh": "n_two_wheelers",
    "gen": "gender",
    "age": "age",
    "inc": "hh_income",
    "pop": "pop_density",
    "emp": "emp_density",
}

_FEATURE_INDEX = {name: j for j, name in enumerate(FEATURE_NAMES)}


@dataclass(frozen=True)
class MnlSpec:
    """Layout of the systematic utility.

    Parameters
    ----------
    terms
        Alternative-specific slots as ``(term, mode_code)`` pairs where
        ``term`` is a key of :data:`INDIVIDUAL_TERMS`.
    generic
        Generic coefficients applied to every alternative's own attribute.
    reference
        Mode code whose alternative-specific slots are fixed at zero.
    """

    terms: tuple = ()
    generic: tuple = ("tt", "tc")
    reference: int = 1

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((str(t), int(a)) for t, a in self.terms))
        object.__setattr__(self, "generic", tuple(self.generic))
        if self.reference not in MODE_CODES:
            raise ValueError(f"reference alternative {self.reference} outside 1..{N_MODES}")
        for g in self.generic:
            if g not in GENERIC_ATTRIBUTES:
                raise ValueError(f"unknown generic attribute {g!r}")
        for term, alt in self.terms:
            if term not in INDIVIDUAL_TERMS:
                raise ValueError(f"unknown term {term!r}")
            if alt not in MODE_CODES:
                raise ValueError(f"alternative {alt} outside 1..{N_MODES}")
            if alt == self.reference:
                raise ValueError(f"slot {term}_{MODE_KEYS[alt - 1]} belongs to the reference alternative")
        names = self.slot_names
        if len(set(names)) != len(names):
            raise ValueError("duplicate slot names")

    @property
    def slot_names(self):
        names = [f"beta_{g}" for g in self.generic]
        for term, alt in self.terms:
            key = MODE_KEYS[alt - 1]
            names.append(f"asc_{key}" if term == "asc" else f"beta_{term}_{key}")
        return tuple(names)

    @property
    def n_free(self):
        return len(self.generic) + len(self.terms)

    @property
    def asc_alternatives(self):
        return tuple(a for t, a in self.terms if t == "asc")

    def is_constants_only(self):
        return not self.generic and all(t == "asc" for t, _ in self.terms)

    def params(self, values=None, **named):
        """Build :class:`MnlParams`; unnamed slots default to zero."""
        if values is not None:
            return MnlParams(self.slot_names, values)
        unknown = set(named) - set(self.slot_names)
        if unknown:
            raise DimensionMismatchError(f"unknown slot(s) {sorted(unknown)}")
        return MnlParams(self.slot_names, [named.get(s, 0.0) for s in self.slot_names])

    def zeros(self):
        return self.params(np.zeros(self.n_free))

    def design_tensor(self, X):
        """Design tensor ``(n, 8, K)`` from a feature matrix with :data:`FEATURE_NAMES` columns."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(FEATURE_NAMES):
            raise DimensionMismatchError(f"feature matrix must have {len(FEATURE_NAMES)} columns")
        n = X.shape[0]
        Z = np.zeros((n, N_MODES, self.n_free))
        k = 0
        for g in self.generic:
            cols = [_FEATURE_INDEX[c] for c in GENERIC_ATTRIBUTES[g]]
            Z[:, :, k] = X[:, cols]
            k += 1
        for term, alt in self.terms:
            col = INDIVIDUAL_TERMS[term]
            Z[:, alt - 1, k] = 1.0 if col is None else X[:, _FEATURE_INDEX[col]]
            k += 1
        return Z

    def to_dict(self):
        return {"reference": self.reference, "generic": list(self.generic),
                "terms": [[t, a] for t, a in self.terms]}

    @classmethod
    def from_dict(cls, doc):
        return cls(terms=tuple((t, a) for t, a in doc["terms"]), generic=tuple(doc["generic"]),
                   reference=int(doc["reference"]))

    @classmethod
    def constants_only(cls, reference=1):
        return cls(terms=tuple(("asc", a) for a in MODE_CODES if a != reference),
                   generic=(), reference=reference)

    @classmethod
    def full(cls, reference=1):
        """Every term of the utility equation on every non-reference alternative."""
        terms = tuple((t, a) for t in INDIVIDUAL_TERMS for a in MODE_CODES if a != reference)
        return cls(terms=terms, reference=reference)


def default_spec():
    """Layout with the sparse set of significant terms of the reference commuter model.

    Constants on all non-metro modes; two-wheeler ownership on auto and
    two-wheeler; income on all; gender on shared ride, two-wheeler, car,
    cycle and walk; age on shared ride and car; employment density on bus,
    auto, two-wheeler and cycle.  Population density carries no slot.
    """
    terms = [("asc", a) for a in range(2, 9)]
    terms += [("veh", 4), ("veh", 5)]
    terms += [("inc", a) for a in range(2, 9)]
    terms += [("gen", a) for a in (3, 5, 6, 7, 8)]
    terms += [("age", 3), ("age", 6)]
    terms += [("emp", a) for a in (2, 4, 5, 7)]
    return MnlSpec(terms=tuple(terms))


#: Point estimates of the reference commuter model, used as the
#: default ground truth of the synthetic generator.
DEFAULT_TRUE_VALUES = {
    "beta_tt": -0.083, "beta_tc": -0.017,
    "asc_bus": 3.647, "asc_sr": 3.418, "asc_auto": 2.854, "asc_tw": 3.412,
    "asc_car": 3.636, "asc_cycle": 1.967, "asc_walk": 6.652,
    "beta_veh_auto": 0.221, "beta_veh_tw": 0.331,
    "beta_inc_bus": -3.03e-05, "beta_inc_sr": -1.28e-05, "beta_inc_auto": -2.64e-05,
    "beta_inc_tw": -2.37e-05, "beta_inc_car": -1.86e-05, "beta_inc_cycle": -2.49e-05,
    "beta_inc_walk": -2.96e-05,
    "beta_gen_sr": -0.544, "beta_gen_tw": -1.435, "beta_gen_car": -1.107,
    "beta_gen_cycle": -1.963, "beta_gen_walk": 0.414,
    "beta_age_sr": -0.028, "beta_age_car": 0.031,
    "beta_emp_bus": -8.0e-05, "beta_emp_auto": 2.0e-05, "beta_emp_tw": 1.0e-05,
    "beta_emp_cycle": -3.5e-04,
}


def default_true_params(spec=None):
    spec = default_spec() if spec is None else spec
    return spec.params(**{k: v for k, v in DEFAULT_TRUE_VALUES.items() if k in spec.slot_names})


@dataclass(frozen=True, eq=False)
class MnlParams:
    names: tuple
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if vals.shape[0] != len(self.names):
            raise DimensionMismatchError(f"{vals.shape[0]} values for {len(self.names)} slots")
        if not np.all(np.isfinite(vals)):
            raise ValueError("parameter values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", vals)

    def __getitem__(self, name):
        return float(self.values[self.names.index(name)])

    def as_dict(self):
        return dict(zip(self.names, self.values.tolist()))


def _check_params(spec, params):
    values = params.values if isinstance(params, MnlParams) else np.asarray(params, dtype=float)
    if isinstance(params, MnlParams) and params.names != spec.slot_names:
        raise DimensionMismatchError("parameter names do not match the spec slots")
    if values.shape != (spec.n_free,):
        raise DimensionMismatchError(f"expected {spec.n_free} parameters, got {values.shape}")
    return values


def _availability(d):
    av = getattr(d, "availability", None)
    return None if av is None else np.asarray(av, dtype=bool)


# ---------------------------------------------------------------------- utilities

def utilities(spec, params, X, availability=None):
    """Systematic utilities ``(n, 8)`` for a feature matrix; unavailable -> -inf."""
    beta = _check_params(spec, params)
    V = spec.design_tensor(X) @ beta
    if availability is not None:
        V = np.where(availability, V, -np.inf)
    return V


def systematic_utilities(spec, params, obs, availability=None):
    """Systematic utility 8-vector of a single :class:`ChoiceObservation`."""
    row = [getattr(obs, c) for c in FEATURE_NAMES[:7]] + list(obs.travel_time) + list(obs.travel_cost)
    av = None if availability is None else np.asarray(availability, dtype=bool)[None, :]
    return utilities(spec, params, np.array([row], dtype=float), av)[0]


def choice_probabilities(V):
    """Logit probabilities along the last axis, overflow-safe.

    ``-inf`` entries (unavailable alternatives) get probability zero.
    """
    V = np.asarray(V, dtype=float)
    vmax = np.max(V, axis=-1, keepdims=True)
    if np.any(~np.isfinite(vmax)):
        raise AllUnavailableError("no alternative has finite utility")
    e = np.exp(V - vmax)
    return e / e.sum(axis=-1, keepdims=True)


def _logsumexp(V):
    vmax = np.max(V, axis=-1)
    if np.any(~np.isfinite(vmax)):
        raise AllUnavailableError("no alternative has finite utility")
    return vmax + np.log(np.exp(V - vmax[..., None]).sum(axis=-1))


# ---------------------------------------------------------------------- likelihood

@dataclass
class _Problem:
    Z: np.ndarray          # (n, J, K) design
    avail: np.ndarray      # (n, J) bool
    y: np.ndarray          # (n,) chosen index 0..J-1

    @classmethod
    def from_dataset(cls, spec, d):
        if len(d) == 0:
            raise EmptyDatasetError("likelihood undefined on an empty dataset")
        av = _availability(d)
        if av is None:
            av = np.ones((len(d), N_MODES), dtype=bool)
        return cls(spec.design_tensor(d.feature_matrix()), av, d.chosen - 1)

    def evaluate(self, beta, hessian=False):
        Z, av, y = self.Z, self.avail, self.y
        n = Z.shape[0]
        V = np.where(av, Z @ beta, -np.inf)
        lse = _logsumexp(V)
        v_chosen = V[np.arange(n), y]
        ll = float(np.sum(v_chosen - lse))
        if not np.isfinite(ll):
            raise NonFiniteLikelihoodError("log-likelihood is not finite (chosen alternative unavailable or divergent parameters)")
        P = np.exp(V - lse[:, None])
        z_chosen = Z[np.arange(n), y]              # (n, K)
        zbar = np.einsum("nj,njk->nk", P, Z)       # (n, K)
        grad = (z_chosen - zbar).sum(axis=0)
        if not hessian:
            return ll, grad, None
        Zw = Z * np.sqrt(P)[:, :, None]
        Zw = Zw.reshape(-1, Z.shape[2])
        H = -(Zw.T @ Zw - zbar.T @ zbar)
        H = 0.5 * (H + H.T)
        return ll, grad, H


def log_likelihood_and_gradient(spec, params, d):
    """Log-likelihood ``sum_n ln P(chosen_n)`` and its analytic gradient."""
    beta = _check_params(spec, params)
    ll, grad, _ = _Problem.from_dataset(spec, d).evaluate(beta)
    return ll, grad


def log_likelihood_hessian(spec, params, d):
    beta = _check_params(spec, params)
    return _Problem.from_dataset(spec, d).evaluate(beta, hessian=True)[2]


def constants_only_log_likelihood(chosen):
    """Closed-form maximum log-likelihood of a constants-only model."""
    counts = np.bincount(np.asarray(chosen), minlength=N_MODES + 1)[1:]
    counts = counts[counts > 0].astype(float)
    n = counts.sum()
    return float(np.sum(counts * np.log(counts / n)))


# ---------------------------------------------------------------------- estimation

@dataclass(frozen=True, eq=False)
class MnlEstimate:
    spec: MnlSpec
    params: MnlParams
    std_errors: np.ndarray
    t_stats: np.ndarray
    ll_final: float
    ll_constants_only: float
    n_obs: int
    converged: bool
    iterations: int
    std_errors_available: bool = True
    quasi_separation: bool = False
    gradient_norm: float = field(default=float("nan"))

    @property
    def n_params(self):
        return self.spec.n_free

    @property
    def rho2(self):
        return 1.0 - self.ll_final / self.ll_constants_only

    @property
    def adj_rho2(self):
        return 1.0 - (self.ll_final - self.n_params) / self.ll_constants_only

    @property
    def covariance(self):
        return getattr(self, "_covariance", None)

    def coefficient(self, name):
        return self.params[name]

    def table(self):
        """Rows of (slot, estimate, std error, t statistic)."""
        return [(n, float(v), float(s), float(t)) for n, v, s, t in
                zip(self.params.names, self.params.values, self.std_errors, self.t_stats)]

    def to_dict(self):
        def floats(a):
            return [None if not np.isfinite(v) else float(v) for v in np.asarray(a)]

        return {
            "schema_version": ESTIMATE_SCHEMA_VERSION,
            "spec": self.spec.to_dict(),
            "names": list(self.params.names),
            "values": floats(self.params.values),
            "std_errors": floats(self.std_errors),
            "t_stats": floats(self.t_stats),
            "ll_final": self.ll_final,
            "ll_constants_only": self.ll_constants_only,
            "rho2": self.rho2,
            "adj_rho2": self.adj_rho2,
            "n_obs": self.n_obs,
            "converged": self.converged,
            "iterations": self.iterations,
            "std_errors_available": self.std_errors_available,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc):
        if doc.get("schema_version") != ESTIMATE_SCHEMA_VERSION:
            raise SchemaVersionMismatchError(f"unsupported estimate schema {doc.get('schema_version')!r}")
        spec = MnlSpec.from_dict(doc["spec"])

        def arr(key):
            return np.array([np.nan if v is None else v for v in doc[key]], dtype=float)

        return cls(spec=spec, params=MnlParams(tuple(doc["names"]), arr("values")),
                   std_errors=arr("std_errors"), t_stats=arr("t_stats"),
                   ll_final=float(doc["ll_final"]), ll_constants_only=float(doc["ll_constants_only"]),
                   n_obs=int(doc["n_obs"]), converged=bool(doc["converged"]),
                   iterations=int(doc["iterations"]),
                   std_errors_available=bool(doc.get("std_errors_available", True)))


def estimate_mnl(spec, d, max_iter=200, grad_tol=1e-6, start=None):
    """Maximum-likelihood estimation by damped Newton-Raphson.

    Each iteration solves the Newton system on the exact Hessian (by
    Cholesky of its negative) and halves the step until the log-likelihood
    does not decrease; if the Hessian is not negative definite the step
    falls back to steepest ascent.  The design columns are rescaled
    internally so incomes around 1e4 and constants around 1 condition the
    system equally; results are reported in natural units.

    Convergence is declared when the natural-unit gradient satisfies
    ``max|g| <= grad_tol``.  Standard errors are the square roots of the
    diagonal of the inverse negative Hessian at the optimum.
    """
    prob = _Problem.from_dataset(spec, d)
    counts = d.class_counts()
    quasi = False
    for alt in spec.asc_alternatives:
        if counts[alt - 1] == 0:
            quasi = True
            warnings.warn(f"alternative {MODE_KEYS[alt - 1]} is never chosen; its constant is not identified",
                          QuasiSeparationWarning, stacklevel=2)

    K = spec.n_free
    Zflat = prob.Z.reshape(-1, K)[prob.avail.reshape(-1)]
    scale = np.sqrt(np.mean(Zflat ** 2, axis=0)) if Zflat.size else np.ones(K)
    scale = np.where(scale > 0, scale, 1.0)
    scaled = _Problem(prob.Z / scale, prob.avail, prob.y)

    theta = np.zeros(K) if start is None else _check_params(spec, start) * scale
    ll, g, H = scaled.evaluate(theta, hessian=True)
    converged = False
    warned = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g / scale), initial=0.0) <= grad_tol:
            converged = True
            it -= 1
            break
        try:
            L = np.linalg.cholesky(-H)
            step = np.linalg.solve(L.T, np.linalg.solve(L, g))
        except np.linalg.LinAlgError:
            step = g / max(1.0, np.linalg.norm(g))
        t = 1.0
        accepted = False
        while t > 1e-12:
            cand = theta + t * step
            try:
                ll_c, g_c, H_c = scaled.evaluate(cand, hessian=True)
            except NonFiniteLikelihoodError:
                ll_c = -np.inf
            if ll_c >= ll:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        theta, ll, g, H = cand, ll_c, g_c, H_c
        if not warned and np.max(np.abs(theta / scale)) > 50:
            warned = quasi = True
            warnings.warn("a parameter exceeded 50 in magnitude; possible quasi-separation",
                          QuasiSeparationWarning, stacklevel=2)
    else:
        converged = np.max(np.abs(g / scale), initial=0.0) <= grad_tol
    if not converged:
        warnings.warn(f"estimation stopped after {it} iterations without meeting grad_tol",
                      ConvergenceWarning, stacklevel=2)

    beta = theta / scale
    se_ok = True
    try:
        L = np.linalg.cholesky(-H)
        Linv = np.linalg.inv(L)
        cov_s = Linv.T @ Linv
        cov = cov_s / np.outer(scale, scale)
        se = np.sqrt(np.diag(cov))
    except np.linalg.LinAlgError:
        warnings.warn("negative Hessian is singular; standard errors unavailable",
                      SingularHessianWarning, stacklevel=2)
        se_ok = False
        cov = np.full((K, K), np.nan)
        se = np.full(K, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stats = np.where(se > 0, beta / se, np.nan)
    est = MnlEstimate(
        spec=spec,
        params=MnlParams(spec.slot_names, beta),
        std_errors=se,
        t_stats=t_stats,
        ll_final=ll,
        ll_constants_only=constants_only_log_likelihood(d.chosen),
        n_obs=len(d),
        converged=bool(converged),
        iterations=it,
        std_errors_available=se_ok,
        quasi_separation=quasi,
        gradient_norm=float(np.max(np.abs(g / scale), initial=0.0)),
    )
    object.__setattr__(est, "_covariance", cov)
    return est


# ---------------------------------------------------------------------- prediction

def predict_mnl(spec, params, d):
    """Probability matrix ``(n, 8)`` and argmax labels (lowest code wins ties)."""
    V = utilities(spec, params, d.feature_matrix(), _availability(d))
    P = choice_probabilities(V)
    return P, np.argmax(P, axis=1) + 1


class MnlModel:
    """Fitted logit model with the classifier interface used by the ML models.

    ``predict_proba`` takes the unscaled feature matrix of
    :meth:`Dataset.feature_matrix`.
    """

    kind = "mnl"

    def __init__(self, spec, params, estimate=None):
        self.spec = spec
        self.params = params
        self.estimate = estimate

    @classmethod
    def from_estimate(cls, est):
        return cls(est.spec, est.params, est)

    def predict_proba(self, X):
        return choice_probabilities(utilities(self.spec, self.params, X))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1) + 1

    def to_dict(self):
        return {"spec": self.spec.to_dict(), "names": list(self.params.names),
                "values": [float(v) for v in self.params.values],
                "estimate": None if self.estimate is None else self.estimate.to_dict()}

    @classmethod
    def from_dict(cls, doc):
        est = None if doc.get("estimate") is None else MnlEstimate.from_dict(doc["estimate"])
        return cls(MnlSpec.from_dict(doc["spec"]),
                   MnlParams(tuple(doc["names"]), np.array(doc["values"], dtype=float)), est)
