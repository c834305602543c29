import dataclasses
import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from modechoice.data import N_MODES
from modechoice.econ import (
    PRIVATE_COST_METRO_AT_BUS,
    Rule,
    Scenario,
    SegmentSpec,
    apply_policy_scenario,
    consumer_surplus_change,
    cross_elasticity,
    elasticity_table,
    get_scenario,
    logsum,
    mnl_elasticities,
    segment_consumer_surplus,
    segment_vot,
    self_elasticity,
    value_of_time,
)
from modechoice.exceptions import (
    AllUnavailableError,
    EmptySegmentWarning,
    ScenarioError,
    UnknownSelectorError,
    ZeroCostCoefficientError,
)
from modechoice.mnl import DEFAULT_TRUE_VALUES, MnlSpec, default_spec, predict_mnl
from modechoice.synthetic import SyntheticConfig, generate_synthetic

from conftest import make_dataset


def _doubled(d):
    """Two copies of ``d``: the first all male, the second all female."""
    n = len(d)
    idx = np.tile(np.arange(n), 2)
    kw = {f.name: getattr(d, f.name)[idx] for f in dataclasses.fields(d)
          if isinstance(getattr(d, f.name), np.ndarray)}
    kw.update(ids=np.arange(1, 2 * n + 1), gender=np.repeat([0.0, 1.0], n))
    return dataclasses.replace(d, **kw)

SPEC = default_spec()
TRUE = SPEC.params(**DEFAULT_TRUE_VALUES)


class TestValueOfTime:
    def test_examples(self):
        assert value_of_time(-0.083, -0.017) == pytest.approx(4.882, abs=5e-4)
        assert value_of_time(-0.02, -0.02) == 1.0
        assert value_of_time(0.0, -0.01) == 0.0

    def test_zero_cost(self):
        with pytest.raises(ZeroCostCoefficientError):
            value_of_time(-0.1, 0.0)

    def test_identical_segments(self, survey):
        twice = _doubled(survey)
        spec = MnlSpec(terms=tuple(("asc", a) for a in range(2, 9)))
        rows = segment_vot(spec, twice, SegmentSpec("gender"))
        assert len(rows) == 2
        assert rows[0].vot == pytest.approx(rows[1].vot, rel=1e-10)

    def test_empty_segment_skipped(self, survey):
        d = survey.with_columns({"gender": np.zeros(len(survey))})
        spec = MnlSpec(terms=tuple(("asc", a) for a in range(2, 9)))
        with pytest.warns(EmptySegmentWarning):
            rows = segment_vot(spec, d, SegmentSpec("gender"))
        assert [r.segment for r in rows] == ["male"]

    def test_planted_segment_vot(self):
        # men value time at 5, women at 10 rupees per minute
        spec = MnlSpec(generic=("tt", "tc"), terms=tuple(("asc", a) for a in range(2, 9)))
        men = spec.params(beta_tt=-0.05, beta_tc=-0.01)
        women = spec.params(beta_tt=-0.10, beta_tc=-0.01)
        cfg = SyntheticConfig(20_000, true_params=men, spec=spec, rng_seed=17,
                              segment_params={"gender": {1.0: women}}, female_share=0.5)
        d = generate_synthetic(cfg)
        rows = {r.segment: r for r in segment_vot(spec, d, SegmentSpec("gender"))}
        assert rows["male"].vot == pytest.approx(5.0, rel=0.15)
        assert rows["female"].vot == pytest.approx(10.0, rel=0.15)


class TestElasticityFormulas:
    def test_worked_self_elasticity(self):
        eta = self_elasticity(0.0314, 18.426, -0.011)
        assert abs(10 * eta) == pytest.approx(1.963, abs=5e-4)

    def test_captive_and_zero(self):
        assert self_elasticity(1.0, 50.0, -0.3) == 0.0
        assert cross_elasticity(0.0, 50.0, -0.3) == 0.0

    def test_cross_sign(self):
        assert cross_elasticity(0.0314, 18.426, -0.011) == pytest.approx(0.00637, abs=1e-5)

    def test_probability_checked(self):
        with pytest.raises(ValueError):
            self_elasticity(1.2, 1.0, 1.0)


class TestElasticityAgainstModel:
    @pytest.fixture(scope="class")
    @staticmethod
    def data():
        return generate_synthetic(SyntheticConfig(300, rng_seed=31))

    @staticmethod
    def _probs(d):
        return predict_mnl(SPEC, TRUE, d)[0]

    @pytest.mark.parametrize("alt", [1, 2, 6])
    def test_finite_difference(self, data, alt):
        res = mnl_elasticities(SPEC, TRUE, data, alt, "tc")
        col = f"tc_{['metro','bus','sr','auto','tw','car','cycle','walk'][alt - 1]}"
        h = 1e-3
        bumped = data.with_columns({col: data.column(col) * (1 + h)})
        P0, P1 = self._probs(data), self._probs(bumped)
        arc = (P1 - P0) / P0 / h
        ok = np.abs(res.self_per_obs) > 1e-3
        np.testing.assert_allclose(arc[ok, alt - 1], res.self_per_obs[ok], rtol=0.01)
        others = [j for j in range(N_MODES) if j != alt - 1]
        ok = np.abs(res.cross_per_obs) > 1e-4
        for j in others:
            np.testing.assert_allclose(arc[ok, j], res.cross_per_obs[ok], rtol=0.01)

    def test_cross_is_independent_of_j(self, data):
        h = 1e-7
        bumped = data.with_columns({"tc_car": data.column("tc_car") * (1 + h)})
        P0, P1 = self._probs(data), self._probs(bumped)
        rel = (P1 - P0) / P0
        others = np.delete(rel, 5, axis=1)
        assert np.max(np.abs(others - others[:, :1])) < 1e-9

    def test_convergence_order(self, data):
        res = mnl_elasticities(SPEC, TRUE, data, 2, "tc")
        i = int(np.argmax(np.abs(res.self_per_obs)))
        row = data.subset([i])
        errs = []
        for h in (1e-1, 1e-2):
            b = row.with_columns({"tc_bus": row.column("tc_bus") * (1 + h)})
            p0, p1 = self._probs(row)[0, 1], self._probs(b)[0, 1]
            errs.append(abs((p1 - p0) / p0 / h - res.self_per_obs[i]))
        assert np.log10(errs[0] / errs[1]) >= 0.9

    def test_table(self, data):
        rows = elasticity_table(SPEC, TRUE, data)
        assert len(rows) == N_MODES
        assert all(r[2] <= 0 <= r[3] for r in rows)


class TestLogsum:
    def test_examples(self):
        assert logsum(np.zeros(8)) == pytest.approx(np.log(8), abs=1e-15)
        assert logsum([3.5]) == 3.5
        assert logsum([1000.0, 1000.0]) == pytest.approx(1000 + np.log(2), rel=1e-15)

    def test_masked(self):
        assert logsum([0.0, -np.inf]) == 0.0
        with pytest.raises(AllUnavailableError):
            logsum([-np.inf, -np.inf])

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=8), st.integers(0, 7), st.floats(0, 5))
    def test_monotone(self, v, i, delta):
        v = np.array(v)
        w = v.copy()
        w[i % v.size] += delta
        assert logsum(w) >= logsum(v) - 1e-12


class TestConsumerSurplus:
    def test_null_scenario(self, survey):
        ch = consumer_surplus_change(SPEC, TRUE, survey, Scenario.null())
        np.testing.assert_array_equal(ch.per_obs, 0.0)

    def test_single_alternative_shift(self):
        d = make_dataset(5, seed=1, labels=[2] * 5)
        av = np.zeros((5, N_MODES), dtype=bool)
        av[:, 1] = True
        d = d.with_columns({}, availability=av)
        spec = MnlSpec(generic=("tc",), terms=())
        params = spec.params(beta_tc=-0.02)
        sc = Scenario("bus_up", (Rule("tc_bus", "set", 0.0),))
        ch = consumer_surplus_change(spec, params, d, sc, alpha=2.0)
        np.testing.assert_allclose(ch.per_obs, 0.02 * d.column('tc_bus') / 2.0, rtol=1e-12)

    def test_cost_rise_hurts(self, survey):
        ch = consumer_surplus_change(SPEC, TRUE, survey, get_scenario("cost_up_20"))
        assert np.all(ch.per_obs <= 0)
        P, _ = predict_mnl(SPEC, TRUE, apply_policy_scenario(survey, get_scenario("cost_up_20")))
        assert ch.total < 0 and np.all(np.isfinite(P))

    def test_alpha_positive(self, survey):
        with pytest.raises(ValueError):
            consumer_surplus_change(SPEC, TRUE, survey, Scenario.null(), alpha=0)

    def test_segments_partition_total(self, survey):
        sc = PRIVATE_COST_METRO_AT_BUS
        grand = consumer_surplus_change(SPEC, TRUE, survey, sc).total
        segs = [SegmentSpec("gender"), SegmentSpec("income", (7730.0,)),
                SegmentSpec("trip_purpose"), SegmentSpec("occupation")]
        for seg in segs:
            rows = segment_consumer_surplus(SPEC, TRUE, survey, sc, seg)
            assert sum(r.n_obs for r in rows) == len(survey)
            assert sum(r.total for r in rows) == pytest.approx(grand, abs=1e-9)

    def test_symmetric_segments_equal(self, survey):
        twice = _doubled(survey)
        spec = MnlSpec(terms=tuple(("asc", a) for a in range(2, 9)))
        params = spec.params(beta_tt=-0.08, beta_tc=-0.02, asc_bus=0.3)
        rows = segment_consumer_surplus(spec, params, twice, get_scenario("cost_up_10"), SegmentSpec("gender"))
        assert rows[0].total == pytest.approx(rows[1].total, rel=1e-12)

    def test_empty_segment_flagged(self, survey):
        d = survey.with_columns({"gender": np.zeros(len(survey))})
        rows = segment_consumer_surplus(SPEC, TRUE, d, Scenario.null(), SegmentSpec("gender"))
        assert rows[1].empty and rows[1].total == 0.0


class TestScenarios:
    def test_identity(self, tiny):
        sc = Scenario("id", (Rule("*", "mul", 1.0),))
        assert apply_policy_scenario(tiny, sc).equals(tiny)

    def test_multiplier(self, tiny):
        d = tiny.with_columns({"tc_tw": np.full(len(tiny), 10.0)})
        out = apply_policy_scenario(d, Scenario("x", (Rule("tc_tw", "mul", 1.2),)))
        np.testing.assert_allclose(out.column('tc_tw'), 12.0)
        np.testing.assert_array_equal(d.column('tc_tw'), 10.0)

    def test_rule_order(self, tiny):
        d = tiny.with_columns({"tc_metro": np.full(len(tiny), 18.0), "tc_bus": np.full(len(tiny), 6.0)})
        out = apply_policy_scenario(d, PRIVATE_COST_METRO_AT_BUS)
        np.testing.assert_array_equal(out.column('tc_metro'), 6.0)
        np.testing.assert_allclose(out.column('tc_car'), d.column('tc_car') * 1.2)

    def test_set_after_mul_regardless_of_declaration(self, tiny):
        sc = Scenario("x", (Rule("tc_metro", "set_to_feature", "tc_bus"), Rule("tc_bus", "mul", 2.0)))
        out = apply_policy_scenario(tiny, sc)
        np.testing.assert_allclose(out.column('tc_metro'), 2.0 * tiny.column('tc_bus'))

    def test_composition_and_idempotence(self, tiny):
        once = Scenario("a", (Rule("tc_*", "mul", 1.1),))
        twice = apply_policy_scenario(apply_policy_scenario(tiny, once), once)
        direct = apply_policy_scenario(tiny, Scenario("b", (Rule("tc_*", "mul", 1.21),)))
        np.testing.assert_allclose(twice.feature_matrix(), direct.feature_matrix(), rtol=1e-14)
        setter = Scenario("s", (Rule("tc_metro", "set", 5.0),))
        a = apply_policy_scenario(tiny, setter)
        assert apply_policy_scenario(a, setter).equals(a)

    def test_unknown_selector(self, tiny):
        with pytest.raises(UnknownSelectorError):
            apply_policy_scenario(tiny, Scenario("x", (Rule("tc_rocket", "mul", 2.0),)))

    @pytest.mark.parametrize("bad", [dict(op="add", value=1), dict(op="mul", value=0.0),
                                     dict(op="mul", value=float("inf")), dict(op="set_to_feature", value=3)])
    def test_invalid_rules(self, bad):
        with pytest.raises(ScenarioError):
            Rule("tc_bus", **bad)

    def test_json_roundtrip(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(PRIVATE_COST_METRO_AT_BUS.to_json())
        assert get_scenario(str(path)) == PRIVATE_COST_METRO_AT_BUS
        assert json.loads(path.read_text())["rules"][2]["op"] == "set_to_feature"


class TestSegments:
    def test_income_bands_partition(self, survey):
        segs = SegmentSpec("income", (5000.0, 10000.0)).segments(survey)
        assert [s[0] for s in segs] == ["low", "medium", "high"]
        total = np.sum([m.astype(int) for _, m in segs], axis=0)
        np.testing.assert_array_equal(total, 1)

    def test_bad_edges(self):
        with pytest.raises(ValueError):
            SegmentSpec("income", (3.0, 1.0))
        with pytest.raises(ValueError):
            SegmentSpec("shoe_size")
