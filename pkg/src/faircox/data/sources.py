"""Public survival datasets and their bundled schemas."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import requests

from faircox.errors import ConfigError, FairCoxError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetSource:
    name: str
    url: str
    filename: str
    schema_file: str


SOURCES = {
    "flc": DatasetSource(
        name="flc",
        url="https://vincentarelbundock.github.io/Rdatasets/csv/survival/flchain.csv",
        filename="flchain.csv",
        schema_file="flc.json",
    ),
    "compas": DatasetSource(
        name="compas",
        url="https://raw.githubusercontent.com/propublica/compas-analysis/master/cox-parsed.csv",
        filename="compas-cox-parsed.csv",
        schema_file="compas.json",
    ),
}


def get_source(name: str) -> DatasetSource:
    try:
        return SOURCES[name.lower()]
    except KeyError:
        raise ConfigError(
            f"unknown dataset {name!r}; known datasets: {', '.join(sorted(SOURCES))}"
        ) from None


def _find_path(name: str) -> Path:
    """Find a path, trying CWD first then relative to the source checkout."""
    cwd_path = Path.cwd() / name
    if cwd_path.exists():
        return cwd_path
    file_path = Path(__file__).parent.parent.parent.parent / name
    if file_path.exists():
        return file_path
    return cwd_path


SCHEMAS_PATH = _find_path("schemas")


def bundled_schema_path(name: str) -> Path:
    return SCHEMAS_PATH / get_source(name).schema_file


class DatasetFetcher:
    """Downloads public CSV files into a local data directory."""

    def __init__(self, data_dir: str | Path, timeout: float = 30.0):
        self.data_dir = Path(data_dir)
        self.timeout = timeout

    def fetch(self, name: str, overwrite: bool = False) -> Path:
        source = get_source(name)
        target = self.data_dir / source.filename
        if target.exists() and not overwrite:
            logger.info(f"Using cached {source.name} data at {target}")
            return target
        logger.info(f"Downloading {source.name} data from {source.url}")
        try:
            response = requests.get(source.url, timeout=self.timeout)
            response.raise_for_status()
        except requests.RequestException as exc:
            raise FairCoxError(f"download of {source.name} failed: {exc}") from exc
        self.data_dir.mkdir(parents=True, exist_ok=True)
        target.write_bytes(response.content)
        logger.info(f"Saved {len(response.content)} bytes to {target}")
        return target
