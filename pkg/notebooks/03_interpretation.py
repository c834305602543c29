"""
Reading the fitted models
=========================

Importance rankings, ICE curves on travel cost and the average change in
mode shares under policy scenarios.
"""
from modechoice.data import FEATURE_NAMES, MODE_KEYS, apply_minmax, fit_minmax
from modechoice.econ import PRESETS
from modechoice.evaluation import train_rf
from modechoice.interpret import average_ice, feature_importance, ice_curves, scenario_average_change
from modechoice.models import ScaledModel
from modechoice.synthetic import SyntheticConfig, generate_synthetic

d = generate_synthetic(SyntheticConfig(2000, rng_seed=5))
scaler = fit_minmax(d)
rf = train_rf(apply_minmax(scaler, d).feature_matrix(), d.chosen, seed=5, n_trees=40, max_depth=8)
model = ScaledModel(rf, scaler, FEATURE_NAMES)       # accepts raw features

imp = feature_importance(rf, "mean-decrease-impurity")
print("top features:", [imp.feature_names[j] for j in imp.ranking()[:5]])

curves = ice_curves(model, d.subset(d.ids[:40]), "tc_bus", n_grid=10, reference=d)
grid, mean = average_ice(curves)
print("bus probability as bus cost rises:", mean[:, MODE_KEYS.index("bus")].round(3))

for name in sorted(PRESETS):
    delta = scenario_average_change(model, d, PRESETS[name]).delta_pp
    print(f"{name:>36s}  bus {delta[1]:+.2f} pp  metro {delta[0]:+.2f} pp")
