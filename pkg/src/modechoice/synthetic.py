"""Synthetic commuter surveys with known logit ground truth.

Trip distance drives every alternative's level of service: travel time is
``access + 60 * distance / speed`` and cost is ``base + per_km * distance``,
each perturbed by independent log-normal noise of the mode's spread.  Labels
are drawn from the logit probabilities of the configured true parameters.
"""
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from modechoice.data import N_MODES, Dataset
from modechoice.exceptions import DimensionMismatchError
from modechoice.mnl import MnlParams, choice_probabilities, default_spec, default_true_params, utilities


@dataclass(frozen=True)
class ModeService:
    speed_kmh: float
    access_min: float
    time_spread: float
    fare_base: float
    fare_per_km: float
    cost_spread: float


DEFAULT_SERVICE = (
    ModeService(32.0, 10.0, 0.20, 10.0, 2.0, 0.10),   # metro
    ModeService(20.0, 5.0, 0.25, 5.0, 0.5, 0.15),     # bus
    ModeService(18.0, 6.0, 0.25, 8.0, 1.5, 0.20),     # shared ride
    ModeService(20.0, 4.0, 0.20, 25.0, 12.0, 0.15),   # auto
    ModeService(24.0, 3.0, 0.20, 2.0, 3.0, 0.20),     # two-wheeler
    ModeService(22.0, 5.0, 0.20, 60.0, 20.0, 0.20),   # car
    ModeService(14.0, 1.0, 0.15, 0.0, 0.0, 0.0),      # cycle
    ModeService(4.8, 0.5, 0.10, 0.0, 0.0, 0.0),       # walk
)


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator settings.

    ``segment_params`` maps a column name to ``{value: MnlParams}``; rows
    whose column equals ``value`` draw their labels from those parameters
    instead of ``true_params`` (used to plant segment-specific tastes).
    """

    n_observations: int
    true_params: Optional[MnlParams] = None
    spec: object = None
    service: tuple = DEFAULT_SERVICE
    rng_seed: int = 0
    distance_median_km: float = 4.5
    distance_sigma: float = 0.65
    income_median: float = 7000.0
    female_share: float = 0.45
    segment_params: dict = field(default_factory=dict)

    def resolved(self):
        spec = default_spec() if self.spec is None else self.spec
        params = default_true_params(spec) if self.true_params is None else self.true_params
        return spec, params


def generate_synthetic(cfg):
    """Draw a :class:`Dataset` of ``cfg.n_observations`` trips.

    Deterministic given ``cfg.rng_seed``.
    """
    if cfg.n_observations < 1:
        raise ValueError("n_observations must be >= 1")
    spec, params = cfg.resolved()
    for p in [params] + [p for by_value in cfg.segment_params.values() for p in by_value.values()]:
        if tuple(p.names) != spec.slot_names:
            raise DimensionMismatchError("true parameters do not match the utility layout")
    if len(cfg.service) != N_MODES:
        raise DimensionMismatchError(f"service must describe {N_MODES} modes")

    n = int(cfg.n_observations)
    rng = np.random.default_rng(cfg.rng_seed)
    age = rng.integers(18, 66, size=n).astype(float)
    gender = (rng.random(n) < cfg.female_share).astype(float)
    hh_income = np.round(cfg.income_median * np.exp(0.5 * rng.standard_normal(n)), 0)
    n_tw = rng.choice([0.0, 1.0, 2.0], size=n, p=[0.35, 0.5, 0.15])
    metro_avail = (rng.random(n) < 0.3).astype(float)
    pop_density = np.round(19000.0 * np.exp(0.4 * rng.standard_normal(n)), 0)
    emp_density = np.round(8000.0 * np.exp(0.6 * rng.standard_normal(n)), 0)
    trip_purpose = rng.choice([1, 2, 3], size=n, p=[0.6, 0.25, 0.15])
    occupation = rng.choice([1, 2, 3], size=n, p=[0.45, 0.3, 0.25])

    dist = cfg.distance_median_km * np.exp(cfg.distance_sigma * rng.standard_normal(n))
    tt = np.empty((n, N_MODES))
    tc = np.empty((n, N_MODES))
    for j, s in enumerate(cfg.service):
        base_t = s.access_min + 60.0 * dist / s.speed_kmh
        tt[:, j] = np.round(base_t * np.exp(s.time_spread * rng.standard_normal(n)), 2)
        base_c = s.fare_base + s.fare_per_km * dist
        tc[:, j] = np.round(base_c * np.exp(s.cost_spread * rng.standard_normal(n)), 2)
    tt = np.maximum(tt, 0.5)
    u = rng.random(n)

    d = Dataset(ids=np.arange(1, n + 1), age=age, gender=gender, hh_income=hh_income,
                n_two_wheelers=n_tw, metro_avail=metro_avail, pop_density=pop_density,
                emp_density=emp_density, tt=tt, tc=tc, chosen=np.ones(n, dtype=int),
                trip_purpose=trip_purpose, occupation=occupation)
    P = true_probabilities(cfg, d)
    cdf = np.cumsum(P, axis=1)
    chosen = 1 + np.minimum((u[:, None] >= cdf).sum(axis=1), N_MODES - 1)
    return replace(d, chosen=chosen)


def true_probabilities(cfg, d):
    """Logit probabilities of ``d`` under the generator's ground truth."""
    spec, params = cfg.resolved()
    X = d.feature_matrix()
    P = choice_probabilities(utilities(spec, params, X))
    for column, by_value in cfg.segment_params.items():
        col = d.column(column)
        for value, p in by_value.items():
            rows = col == value
            if rows.any():
                P[rows] = choice_probabilities(utilities(spec, p, X[rows]))
    return P
