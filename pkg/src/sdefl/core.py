"""Randomness, Gaussian helpers, and the sampled-path container.

Everything stochastic in this package flows through :class:`RandomSource`, a
thin wrapper over a counter-based bit generator (Philox) keyed by
``(seed, stream)``.  Two sources with the same key always produce the same
draws, on any platform, and ``substream`` derives statistically independent
child streams without consuming state, so results never depend on evaluation
order.
"""

import math
from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# Fixed substream tags. Simulators and filters draw each noise source from its
# own substream so that e.g. a Bates run with zero jump intensity consumes the
# same diffusion draws as the matching Heston run.
STREAM_W1 = 1
STREAM_W2 = 2
STREAM_JUMP_TRIGGER = 3
STREAM_JUMP_SIZE = 4
STREAM_PF_INIT = 5
STREAM_PF_PROPOSAL = 6
STREAM_PF_RESAMPLE = 7


class DomainError(ValueError):
    """A numeric argument is outside its mathematical domain."""


class ShapeError(ValueError):
    """Array/series sizes do not line up."""


class InitError(ValueError):
    """An optimization start point is unusable (non-finite objective)."""


class DegenerateSystemError(RuntimeError):
    """A filter produced a non-positive innovation or state variance."""


class DegeneracyError(RuntimeError):
    """All particle weights vanished."""


class ScenarioError(ValueError):
    """A scenario file is malformed or internally inconsistent."""


def _splitmix64(x):
    # Standard splitmix64 finalizer; good avalanche, cheap, pure-Python u64.
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class RandomSource:
    """Deterministic, splittable source of random draws.

    ``seed`` names the experiment; ``stream`` separates independent uses of
    the same seed.  Equal (seed, stream) pairs give identical sequences.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) <= _MASK64):
            raise DomainError(f"seed must fit in 64 bits, got {self.seed}")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "stream", int(self.stream) & _MASK64)

    def substream(self, tag):
        """Child source for an independent purpose (int tag)."""
        mixed = _splitmix64(self.stream ^ ((int(tag) & _MASK64) * _GOLDEN & _MASK64))
        return RandomSource(self.seed, mixed)

    def generator(self):
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def normals(self, n):
        if n < 0:
            raise ShapeError(f"cannot draw {n} normals")
        return self.generator().standard_normal(int(n))

    def uniforms(self, n):
        if n < 0:
            raise ShapeError(f"cannot draw {n} uniforms")
        return self.generator().random(int(n))

    def poissons(self, lam, n):
        if lam < 0:
            raise DomainError(f"Poisson rate must be >= 0, got {lam}")
        if n < 0:
            raise ShapeError(f"cannot draw {n} Poisson counts")
        return self.generator().poisson(lam, int(n))


def standard_normals(src, n):
    """n i.i.d. N(0, 1) draws from ``src``; n = 0 gives an empty array."""
    return src.normals(n)


def normal_pdf(x, mean, std):
    """Gaussian density; vectorizes over any argument.

    std must be > 0 (elementwise).
    """
    std_arr = np.asarray(std, dtype=float)
    if np.any(std_arr <= 0.0):
        raise DomainError("normal_pdf requires std > 0")
    z = (np.asarray(x, dtype=float) - mean) / std_arr
    out = np.exp(-0.5 * z * z) / (std_arr * math.sqrt(2.0 * math.pi))
    if np.ndim(x) == 0 and np.ndim(mean) == 0 and np.ndim(std) == 0:
        return float(out)
    return out


def normal_cdf(x):
    """Standard normal CDF via erf; |error| well under 1e-7."""
    if np.ndim(x) == 0:
        return 0.5 * (1.0 + math.erf(float(x) / math.sqrt(2.0)))
    flat = np.asarray(x, dtype=float)
    out = np.array([0.5 * (1.0 + math.erf(v / math.sqrt(2.0))) for v in flat.ravel()])
    return out.reshape(flat.shape)


@dataclass(frozen=True)
class Path:
    """A discretely sampled trajectory on the implicit grid t0 + k*dt.

    ``values`` is 1-dim for scalar processes or (n, d) for joint ones. The
    array is copied and frozen; entry times are never stored per-point.
    """

    t0: float
    dt: float
    values: np.ndarray
    seed: RandomSource | None = None
    warnings: tuple = ()

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.size == 0:
            raise ShapeError("a path needs at least one sample")
        if vals.ndim not in (1, 2):
            raise ShapeError(f"path values must be 1- or 2-dim, got ndim={vals.ndim}")
        if not (self.dt > 0.0):
            raise DomainError(f"dt must be positive, got {self.dt}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "warnings", tuple(self.warnings))

    def __len__(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    def times(self):
        return self.t0 + self.dt * np.arange(len(self))

    def column(self, k):
        """k-th component as a 1-dim array (k must be 0 for scalar paths)."""
        if self.values.ndim == 1:
            if k != 0:
                raise ShapeError("scalar path has only component 0")
            return self.values
        return self.values[:, k]

    def tail(self, start):
        """Sub-path from index ``start`` onward (same grid, shifted t0)."""
        if not (0 <= start < len(self)):
            raise ShapeError(f"tail start {start} out of range for length {len(self)}")
        return Path(self.t0 + start * self.dt, self.dt, self.values[start:],
                    seed=self.seed, warnings=self.warnings)


def _as_values(obj):
    if isinstance(obj, Path):
        return obj.values
    return np.asarray(obj, dtype=float)


def rmse(a, b):
    """Root-mean-square difference between two equally shaped paths/arrays."""
    va, vb = _as_values(a), _as_values(b)
    if va.shape != vb.shape:
        raise ShapeError(f"rmse shapes differ: {va.shape} vs {vb.shape}")
    d = va - vb
    return float(np.sqrt(np.mean(d * d)))
