# spnet/utils/cache_manager.py
from datetime import datetime, timedelta
from pathlib import Path
from typing import Dict, Optional, Union

from ..config import VIEW_CACHE_MAX_ENTRIES, VIEW_CACHE_TTL_SECONDS
from ..projection.codec import read_image
from ..projection.render import DepthImage


class ViewCacheManager:
    """Decoded SPDI views keyed by file path, dropped when stale or when the file changes"""

    def __init__(self, max_entries: int = VIEW_CACHE_MAX_ENTRIES):
        self._cache: Dict[str, Dict] = {}
        self._default_ttl = timedelta(seconds=VIEW_CACHE_TTL_SECONDS)
        self._max_entries = max_entries

    @staticmethod
    def _key(path: Union[str, Path]) -> str:
        return str(Path(path).resolve())

    def get(self, path: Union[str, Path]) -> Optional[DepthImage]:
        """Get a cached view if not expired and the file is unchanged"""
        cache_key = self._key(path)
        if cache_key not in self._cache:
            return None

        entry = self._cache[cache_key]
        try:
            mtime = Path(path).stat().st_mtime_ns
        except OSError:
            mtime = None

        if datetime.now() - entry["cached_at"] < self._default_ttl and entry["mtime_ns"] == mtime:
            return entry["image"]
        # Clean up stale entry
        del self._cache[cache_key]
        return None

    def set(self, path: Union[str, Path], image: DepthImage) -> None:
        if len(self._cache) >= self._max_entries:
            # oldest insertion goes first
            del self._cache[next(iter(self._cache))]
        self._cache[self._key(path)] = {
            "image": image,
            "mtime_ns": Path(path).stat().st_mtime_ns,
            "cached_at": datetime.now(),
        }

    def load(self, path: Union[str, Path], source_id: str = "") -> DepthImage:
        """Read through the cache"""
        image = self.get(path)
        if image is None:
            image = read_image(path, source_id=source_id)
            self.set(path, image)
        return image

    def invalidate(self, path: Union[str, Path]) -> None:
        cache_key = self._key(path)
        if cache_key in self._cache:
            del self._cache[cache_key]

    def clear(self) -> None:
        self._cache.clear()

# Global instance
view_cache = ViewCacheManager()
