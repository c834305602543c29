"""
Trees, boosting and SVMs against the logit
==========================================

Fit every classifier on min-max scaled features and compare macro-F1 on a
stratified hold-out split.
"""
import numpy as np

from modechoice.data import apply_minmax, fit_minmax, stratified_split
from modechoice.evaluation import classification_report, confusion_matrix, grid_search_cv, train_gbt, train_rf
from modechoice.synthetic import SyntheticConfig, generate_synthetic

d = generate_synthetic(SyntheticConfig(3000, rng_seed=3))
train, test = stratified_split(d, 0.7, seed=3)
scaler = fit_minmax(train)             # fitted on the training rows only
Xtr, Xte = apply_minmax(scaler, train).feature_matrix(), apply_minmax(scaler, test).feature_matrix()
ytr, yte = train.chosen, test.chosen

search = grid_search_cv("dt", {"max_depth": [3, 6, 9], "ccp_alpha": [0.0, 1e-3]}, Xtr, ytr, k=3, seed=3)
print("decision tree best:", search.best_params, round(search.best_score, 4))

models = {
    "rf": train_rf(Xtr, ytr, seed=3, n_trees=50, max_depth=8),
    "gbt": train_gbt(Xtr, ytr, seed=3, n_rounds=60, max_depth=3, eta=0.1),
}
for name, m in models.items():
    rep = classification_report(confusion_matrix(yte, m.predict(Xte)))
    print(f"{name}: macro-F1 {rep.macro_f1:.3f}, accuracy {rep.accuracy:.1f}%")

# boosting loss falls round by round
staged = [np.mean(-np.log(P[np.arange(len(ytr)), ytr - 1] + 1e-300))
          for P in models["gbt"].staged_predict_proba(Xtr)]
print("log-loss after rounds 1, 30, 60:", [round(float(staged[i]), 3) for i in (0, 29, 59)])
