"""Offline prescription-policy pipeline.

Survey records go in one end; a trained mixed-action policy, its learned
glucose simulator, and an inference service come out the other.  Stages:
ingest -> Gower/medoid clustering -> quantile aggregation -> environment
model -> soft actor-critic training -> evaluation and serving.
"""

__version__ = "0.1.0"

from .errors import BanditrxError, ConfigError, DataQualityError, NumericError
from .core import (Feature, FeatureKind, FeatureSchema, Record, RecordSet,
                   default_schema, load_schema, validate_record)
from .reward import DOMAIN_FLOOR, MagniParams, magni_risk, reward, zero_risk_glucose

__all__ = [
    "__version__",
    "BanditrxError", "ConfigError", "DataQualityError", "NumericError",
    "Feature", "FeatureKind", "FeatureSchema", "Record", "RecordSet",
    "default_schema", "load_schema", "validate_record",
    "DOMAIN_FLOOR", "MagniParams", "magni_risk", "reward", "zero_risk_glucose",
]
