"""Counter-based random streams.

A number is a pure function of ``(seed, channel, path, step, slot)``: the
SplitMix64 finalizer is applied after folding in each coordinate. Paths can
therefore be simulated in any batch split or thread layout and still see
exactly the same draws.
"""
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

CHANNELS = {"walk": 1, "clock": 2, "aux": 3, "sample": 4}


def _mix(z):
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def _fold(h, v):
    with np.errstate(over="ignore"):
        return _mix(h + _GOLDEN + np.asarray(v, dtype=np.uint64) * _GOLDEN)


def counter_uniform(seed, channel, path, step, slot):
    """Uniform doubles in [0, 1); arguments broadcast against each other."""
    with np.errstate(over="ignore"):
        h = _fold(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), CHANNELS.get(channel, channel))
        h = _fold(h, path)
        h = _fold(h, step)
        h = _fold(h, slot)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


class CounterStream:
    """Draws for a batch of paths at one step.

    Successive ``random`` calls consume successive slots, so a path's draws
    depend only on its own id and on how many draws it has requested.
    """

    def __init__(self, seed, path_ids, step, channel="walk"):
        self.seed = int(seed)
        self.path_ids = np.asarray(path_ids, dtype=np.uint64)
        self.step = int(step)
        self.channel = channel
        self._slot = 0

    def __len__(self):
        return len(self.path_ids)

    def random(self, k, subset=None):
        ids = self.path_ids if subset is None else self.path_ids[subset]
        slots = np.arange(self._slot, self._slot + k, dtype=np.uint64)
        self._slot += k
        return counter_uniform(self.seed, self.channel, ids[:, None], self.step, slots[None, :])


class GeneratorStream:
    """Adapter giving a ``numpy.random.Generator`` the stream interface."""

    def __init__(self, rng, batch):
        self.rng = rng
        self.batch = int(batch)

    def __len__(self):
        return self.batch

    def random(self, k, subset=None):
        n = self.batch if subset is None else len(np.arange(self.batch)[subset])
        return self.rng.random((n, k))


def as_stream(rng, batch):
    if isinstance(rng, (CounterStream, GeneratorStream)):
        return rng
    if rng is None:
        rng = np.random.default_rng()
    elif isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    return GeneratorStream(rng, batch)


def clock_arrivals(seed, path_ids, horizon, rate):
    """Jump times of independent rate-``rate`` Poisson clocks on ``[0, horizon]``.

    Inter-arrival ``j`` of path ``i`` is ``-log(1 - U)/rate`` with ``U`` taken
    from slot ``j`` of the clock channel. Returns ``(times, counts)`` where
    ``times`` is a ``(paths, max_count)`` array padded with ``inf``.
    """
    path_ids = np.asarray(path_ids, dtype=np.uint64)
    n = len(path_ids)
    mean = rate * horizon
    chunk = max(8, int(np.ceil(mean + 4.0 * np.sqrt(mean) + 8)))
    blocks = []
    last = np.zeros(n)
    slot = 0
    while True:
        slots = np.arange(slot, slot + chunk, dtype=np.uint64)
        u = counter_uniform(seed, "clock", path_ids[:, None], 0, slots[None, :])
        arrivals = last[:, None] + np.cumsum(-np.log1p(-u) / rate, axis=1)
        blocks.append(arrivals)
        last = arrivals[:, -1]
        slot += chunk
        if n == 0 or last.min() > horizon:
            break
    times = np.concatenate(blocks, axis=1) if blocks else np.zeros((n, 0))
    times[times > horizon] = np.inf
    counts = np.isfinite(times).sum(axis=1)
    width = int(counts.max()) if n else 0
    return times[:, :width], counts
