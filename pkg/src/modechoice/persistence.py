"""JSON model artifacts."""
import datetime as _dt
import json
from dataclasses import dataclass, field

from modechoice._util import atomic_write_text
from modechoice.data import FEATURE_NAMES, ScalerParams
from modechoice.exceptions import CorruptArtifactError, SchemaMismatchError, SchemaVersionMismatchError
from modechoice.mnl import MnlEstimate, MnlModel
from modechoice.models import MODEL_CLASSES, ScaledModel

ARTIFACT_SCHEMA_VERSION = "1.0"


@dataclass
class ModelArtifact:
    """A fitted model with everything needed to reuse it on raw features.

    ``metadata`` carries the seed, a UTC timestamp and the digest of the
    configuration that produced the model.  The timestamp is the only
    non-deterministic field anywhere in the outputs.
    """

    kind: str
    model: object
    scaler: ScalerParams = None
    feature_names: tuple = FEATURE_NAMES
    metadata: dict = field(default_factory=dict)

    @classmethod
    def build(cls, model, scaler=None, seed=None, config_digest=None, feature_names=FEATURE_NAMES):
        meta = {"seed": seed, "config_digest": config_digest,
                "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}
        return cls(model.kind, model, scaler, tuple(feature_names), meta)

    def predictor(self):
        """Model accepting the raw feature matrix."""
        return ScaledModel(self.model, self.scaler, self.feature_names)

    def to_dict(self):
        return {
            "schema_version": ARTIFACT_SCHEMA_VERSION,
            "kind": self.kind,
            "feature_names": list(self.feature_names),
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
            "metadata": self.metadata,
            "model": self.model.to_dict(),
        }


def save_model(artifact, path):
    atomic_write_text(path, json.dumps(artifact.to_dict(), allow_nan=False) + "\n")
    return path


def load_model(path, expected_features=FEATURE_NAMES):
    """Read an artifact, validating version and feature schema.

    Bare MNL estimate files are accepted too and wrapped as an ``mnl``
    artifact without a scaler.

    Raises
    ------
    CorruptArtifactError
        Unparseable JSON or missing fields.
    SchemaVersionMismatchError
        The artifact was written by an incompatible format version.
    SchemaMismatchError
        The artifact's feature list differs from ``expected_features``.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptArtifactError(f"{path}: not a valid artifact ({exc})") from exc
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise CorruptArtifactError(f"{path}: missing schema_version")
    if "ll_final" in doc and "kind" not in doc:
        # a bare logit estimate as written by ``MnlEstimate.to_json``
        try:
            est = MnlEstimate.from_dict(doc)
        except (KeyError, TypeError) as exc:
            raise CorruptArtifactError(f"{path}: malformed estimate ({exc})") from exc
        return ModelArtifact("mnl", MnlModel.from_estimate(est))
    if doc["schema_version"] != ARTIFACT_SCHEMA_VERSION:
        raise SchemaVersionMismatchError(
            f"{path}: artifact schema {doc['schema_version']!r}, expected {ARTIFACT_SCHEMA_VERSION!r}")
    try:
        kind = doc["kind"]
        names = tuple(doc["feature_names"])
        if expected_features is not None and names != tuple(expected_features):
            raise SchemaMismatchError(f"{path}: artifact features do not match the expected schema")
        model = MODEL_CLASSES[kind].from_dict(doc["model"])
        scaler = None if doc.get("scaler") is None else ScalerParams.from_dict(doc["scaler"])
        return ModelArtifact(kind, model, scaler, names, dict(doc.get("metadata", {})))
    except SchemaMismatchError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptArtifactError(f"{path}: malformed artifact ({exc})") from exc
