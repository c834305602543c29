"""Uniform classifier wrappers shared by evaluation, interpretation and persistence.

Every model exposes ``predict_proba(X)`` returning an ``(n, 8)`` matrix and
``predict(X)`` returning mode codes, where ``X`` is the raw (unscaled)
feature matrix of :meth:`Dataset.feature_matrix`.
"""
import numpy as np

from modechoice.data import FEATURE_NAMES, ScalerParams
from modechoice.mnl import MnlModel
from modechoice.svm import SvmMulticlassModel
from modechoice.trees import BoostedModel, DecisionTreeModel, ForestModel

MODEL_CLASSES = {
    "mnl": MnlModel,
    "dt": DecisionTreeModel,
    "rf": ForestModel,
    "gbt": BoostedModel,
    "svm": SvmMulticlassModel,
}


class ScaledModel:
    """A model trained on min-max scaled features, fed raw features."""

    def __init__(self, model, scaler, feature_names=FEATURE_NAMES):
        self.model = model
        self.scaler = scaler
        self.feature_names = tuple(feature_names)

    @property
    def kind(self):
        return self.model.kind

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        return X if self.scaler is None else self.scaler.transform(X, self.feature_names)

    def predict_proba(self, X):
        return self.model.predict_proba(self.transform(X))

    def predict(self, X):
        return self.model.predict(self.transform(X))

    def to_dict(self):
        return {"kind": self.kind, "model": self.model.to_dict(),
                "scaler": None if self.scaler is None else self.scaler.to_dict(),
                "feature_names": list(self.feature_names)}

    @classmethod
    def from_dict(cls, doc):
        model = MODEL_CLASSES[doc["kind"]].from_dict(doc["model"])
        scaler = None if doc.get("scaler") is None else ScalerParams.from_dict(doc["scaler"])
        return cls(model, scaler, doc.get("feature_names", FEATURE_NAMES))


def unwrap(model):
    """The underlying fitted model of a possibly scaled wrapper."""
    return model.model if isinstance(model, ScaledModel) else model
