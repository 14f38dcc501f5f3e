"""Dataset schemas, CSV ingestion, synthetic data and public sources."""

from faircox.data.loader import load_csv, write_csv
from faircox.data.schema import (
    DatasetSchema,
    MissingPolicy,
    ProtectedCoding,
    load_schema,
    save_schema,
)
from faircox.data.sources import DatasetFetcher, bundled_schema_path, get_source
from faircox.data.synthetic import SyntheticSpec, generate_synthetic, schema_for_synthetic

__all__ = [
    "DatasetFetcher",
    "DatasetSchema",
    "MissingPolicy",
    "ProtectedCoding",
    "SyntheticSpec",
    "bundled_schema_path",
    "generate_synthetic",
    "get_source",
    "load_csv",
    "load_schema",
    "save_schema",
    "schema_for_synthetic",
    "write_csv",
]
