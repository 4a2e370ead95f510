"""Streaming statistics for long simulated runs."""

from typing import Dict, Optional, Tuple

import numpy as np

DEFAULT_BATCHES = 20


class BatchMeans:
    """
    Batch-means estimate of a long-run average and its standard error.

    Samples arrive in time order, possibly in chunks. The stream of ``horizon``
    samples is cut into ``n_batches`` consecutive blocks; the last block absorbs
    the remainder when the horizon does not divide evenly.
    """

    def __init__(
        self,
        horizon: int,
        shape: Tuple[int, ...] = (),
        n_batches: int = DEFAULT_BATCHES,
    ):
        """
        Args:
            horizon: Total number of samples that will be added
            shape: Shape of one sample
            n_batches: Number of blocks
        """
        if horizon < n_batches:
            raise ValueError(f"horizon {horizon} is shorter than {n_batches} batches")
        self.horizon = horizon
        self.shape = tuple(shape)
        self.n_batches = n_batches
        self.block_size = horizon // n_batches
        self._sums = np.zeros((n_batches,) + self.shape)
        self._counts = np.zeros(n_batches, dtype=np.int64)
        self._seen = 0

    def _block_of(self, index: int) -> int:
        return min(index // self.block_size, self.n_batches - 1)

    def add(self, samples: np.ndarray) -> None:
        """Add a chunk of samples with the time axis first."""
        samples = np.asarray(samples, dtype=float)
        start = 0
        total = samples.shape[0]
        while start < total:
            block = self._block_of(self._seen)
            if block == self.n_batches - 1:
                stop = total
            else:
                stop = min(total, start + (block + 1) * self.block_size - self._seen)
            self._sums[block] += samples[start:stop].sum(axis=0)
            self._counts[block] += stop - start
            self._seen += stop - start
            start = stop

    def add_sum(self, total: np.ndarray, count: int) -> None:
        """Add a pre-summed chunk that lies inside a single block."""
        block = self._block_of(self._seen)
        last = self._block_of(self._seen + count - 1)
        if block != last:
            raise ValueError("pre-summed chunk straddles a block boundary")
        self._sums[block] += total
        self._counts[block] += count
        self._seen += count

    def room_in_block(self) -> int:
        """Samples that fit before the current block closes."""
        block = self._block_of(self._seen)
        if block == self.n_batches - 1:
            return self.horizon - self._seen
        return (block + 1) * self.block_size - self._seen

    @property
    def count(self) -> int:
        return self._seen

    @property
    def mean(self) -> np.ndarray:
        return self._sums.sum(axis=0) / max(self._seen, 1)

    @property
    def batch_means(self) -> np.ndarray:
        counts = np.maximum(self._counts, 1).reshape((-1,) + (1,) * len(self.shape))
        return self._sums / counts

    @property
    def stderr(self) -> np.ndarray:
        """Standard error of the mean from the spread of the batch means."""
        return self.batch_means.std(axis=0, ddof=1) / np.sqrt(self.n_batches)


class TailSample:
    """
    Systematic subsample of a scalar series for tail statistics.

    Keeps every ``stride``-th value and doubles the stride (dropping every
    other kept value) whenever ``capacity`` is reached. Max, count and mean are
    exact.
    """

    def __init__(self, capacity: int = 8192):
        self.capacity = capacity
        self.stride = 1
        self._kept: list[float] = []
        self._count = 0
        self._max = 0.0
        self._sum = 0.0

    def update(self, value: float) -> None:
        if self._count % self.stride == 0:
            self._kept.append(value)
            if len(self._kept) >= self.capacity:
                self._kept = self._kept[::2]
                self.stride *= 2
        self._count += 1
        self._sum += value
        if value > self._max:
            self._max = value

    @property
    def count(self) -> int:
        return self._count

    def summary(
        self, quantiles: Tuple[float, ...] = (0.5, 0.9, 0.99, 0.999)
    ) -> Dict[str, Optional[float]]:
        if not self._count:
            return {"count": 0, "max": None, "mean": None}
        out: Dict[str, Optional[float]] = {
            "count": float(self._count),
            "max": self._max,
            "mean": self._sum / self._count,
        }
        kept = np.asarray(self._kept)
        for q in quantiles:
            out[f"q{q:g}"] = float(np.quantile(kept, q))
        return out
