"""On-disk cache of asymptotic spectral densities keyed by their parameters."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from collections.abc import Callable
from pathlib import Path
from typing import Any

from freespec.errors import CacheError, LoadError
from freespec.exporters import density_from_dict, density_to_dict
from freespec.models import SpectralDensity

log = logging.getLogger(__name__)

CACHE_ENV_VAR = "FREESPEC_CACHE_DIR"


def default_cache_dir() -> Path:
    """``$FREESPEC_CACHE_DIR`` if set, else ``~/.cache/freespec``."""
    override = os.environ.get(CACHE_ENV_VAR)
    if override:
        return Path(override)
    return Path.home() / ".cache" / "freespec"


class AsdCache:
    """Content-addressed store of :class:`SpectralDensity` JSON documents.

    Writes go to a temporary file in the cache directory followed by
    ``os.replace``, so concurrent readers only ever see complete entries.
    """

    def __init__(self, directory: Path | str | None = None) -> None:
        self.directory = Path(directory) if directory is not None else default_cache_dir()
        self._memo: dict[str, SpectralDensity] = {}

    @staticmethod
    def key(**params: Any) -> str:
        """SHA-256 of the canonical (sorted, compact) JSON of *params*."""
        canonical = json.dumps(params, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def path_for(self, key: str) -> Path:
        return self.directory / f"asd-{key}.json"

    def get(self, key: str) -> SpectralDensity | None:
        """Return the cached density, or ``None`` on a miss or unreadable entry."""
        if key in self._memo:
            return self._memo[key]
        path = self.path_for(key)
        if not path.exists():
            return None
        try:
            density = density_from_dict(json.loads(path.read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError, TypeError, LoadError) as exc:
            log.warning("ignoring unreadable cache entry %s: %s", path.name, exc)
            return None
        self._memo[key] = density
        return density

    def put(self, key: str, density: SpectralDensity) -> Path:
        """Store *density* under *key* and return the entry path.

        Raises:
            CacheError: If the directory or entry cannot be written.
        """
        path = self.path_for(key)
        payload = json.dumps(density_to_dict(density), indent=None, separators=(",", ":"))
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            fd, tmp_name = tempfile.mkstemp(dir=self.directory, prefix=".asd-", suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    fh.write(payload)
                os.replace(tmp_name, path)
            except BaseException:
                Path(tmp_name).unlink(missing_ok=True)
                raise
        except OSError as exc:
            raise CacheError(f"Failed to write cache entry {path}: {exc}") from exc
        self._memo[key] = density
        return path

    def get_or_compute(self, key: str, compute: Callable[[], SpectralDensity]) -> SpectralDensity:
        cached = self.get(key)
        if cached is not None:
            log.info("ASD cache hit %s", key[:12])
            return cached
        log.info("ASD cache miss %s; computing", key[:12])
        density = compute()
        self.put(key, density)
        return density
