"""
Reproducible chunked loss streams.

A (seed, stream, chunk) triple fixes the generator of one chunk, so the
loss vectors behind an estimate never depend on the allocation being
evaluated or on how many worker threads run the chunks.
"""
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, TypeVar, Union

import numpy as np
from cachetools import LRUCache

from riskalloc.errors import DomainError
from riskalloc.services.distribution_service.joint_models import JointModel
from utils.config_manager import ConfigManager

logger = logging.getLogger(__name__)

T = TypeVar("T")

_config_manager = None
_chunk_cache = None
_cache_lock = threading.Lock()


def _get_config() -> ConfigManager:
    """Get or create the global config manager instance."""
    global _config_manager
    if _config_manager is None:
        _config_manager = ConfigManager()
    return _config_manager


def _get_cache() -> LRUCache:
    global _chunk_cache
    with _cache_lock:
        if _chunk_cache is None:
            _chunk_cache = LRUCache(maxsize=max(_get_config().CACHE_BYTES, 1),
                                    getsizeof=lambda arr: arr.nbytes)
        return _chunk_cache


def clear_cache():
    """Drop every memoised chunk."""
    with _cache_lock:
        if _chunk_cache is not None:
            _chunk_cache.clear()


def chunk_generator(seed: int, chunk: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one chunk of one stream."""
    if seed < 0:
        raise DomainError(f"seed must be nonnegative, got {seed}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(chunk)))))


def chunk_sizes(n: int, chunk_size: Optional[int] = None) -> List[int]:
    if n < 1:
        raise DomainError(f"sample count must be at least 1, got {n}")
    chunk_size = chunk_size or _get_config().CHUNK_SIZE
    full, rest = divmod(int(n), chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def draw_chunk(model: JointModel, seed: int, chunk: int, size: int,
               stream: int = 0, cache: bool = True) -> np.ndarray:
    """
    Loss matrix of one chunk, memoised by (model, seed, stream, chunk, size).

    The returned array is read-only; it may be shared with other callers.
    """
    key = (model, int(seed), int(stream), int(chunk), int(size))
    if cache:
        store = _get_cache()
        with _cache_lock:
            hit = store.get(key)
        if hit is not None:
            return hit
    losses = model.sample(chunk_generator(seed, chunk, stream), size)
    losses.flags.writeable = False
    if cache:
        with _cache_lock:
            try:
                store[key] = losses
            except ValueError:
                logger.debug(f"Chunk of {losses.nbytes} bytes exceeds the cache budget")
    return losses


def map_chunks(model: JointModel, n: int, seed: int, fn: Callable[[np.ndarray], T],
               stream: int = 0, cache: bool = True) -> List[T]:
    """
    Apply fn to every chunk of an n-sample stream.

    Returns:
        fn's results in chunk order, whatever the number of workers.
    """
    sizes = chunk_sizes(n)
    workers = min(_get_config().THREADS, len(sizes))

    def run(index: int) -> T:
        return fn(draw_chunk(model, seed, index, sizes[index], stream=stream, cache=cache))

    logger.debug(f"Evaluating {len(sizes)} chunks of {model.kind} on {workers} workers")
    if workers <= 1:
        return [run(i) for i in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(run, range(len(sizes))))


def draw_losses(model: JointModel, n: int, seed: int, stream: int = 0, cache: bool = True) -> np.ndarray:
    """The full n x d loss matrix of a stream."""
    parts = map_chunks(model, n, seed, lambda losses: losses, stream=stream, cache=cache)
    return np.concatenate(parts, axis=0)


@dataclass
class Moments:
    """Running count, mean and centred sum of squares, combined pairwise."""

    count: int
    mean: Union[float, np.ndarray]
    m2: Union[float, np.ndarray]

    @classmethod
    def of(cls, values: np.ndarray) -> "Moments":
        values = np.asarray(values, dtype=float)
        mean = values.mean(axis=0)
        return cls(values.shape[0], mean, ((values - mean) ** 2).sum(axis=0))

    def combine(self, other: "Moments") -> "Moments":
        if self.count == 0:
            return other
        if other.count == 0:
            return self
        total = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / total)
        m2 = self.m2 + other.m2 + delta ** 2 * (self.count * other.count / total)
        return Moments(total, mean, m2)

    @property
    def std_error(self):
        if self.count < 2:
            return np.zeros_like(self.mean) if np.ndim(self.mean) else 0.0
        return np.sqrt(self.m2 / (self.count - 1) / self.count)


def reduce_moments(parts: List[Moments]) -> Moments:
    """Combine per-chunk moments in chunk order."""
    total = Moments(0, 0.0, 0.0)
    for part in parts:
        total = total.combine(part)
    return total


def use_config(manager: Optional[ConfigManager]):
    """Take worker, chunk and cache settings from the given manager; None reloads the default."""
    global _config_manager, _chunk_cache
    with _cache_lock:
        _config_manager = manager
        _chunk_cache = None
