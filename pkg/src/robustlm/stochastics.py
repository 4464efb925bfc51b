"""Seedable random streams and the distribution samplers used across the package.

Streams are counter-based: each ``RngStream`` drives a Philox4x64 generator
whose 128-bit key is derived from ``(master_seed, stream_id, *path)``.  Two
streams with the same identity replay the same draws no matter which process
or in which order they are created, which is what keeps parallel simulation
output independent of the worker count.

Gamma variates use the Marsaglia-Tsang squeeze method for shape >= 1.  For
shape < 1 the boosting identity

    Gamma(a) = Gamma(a + 1) * U ** (1 / a),   U ~ Uniform(0, 1)

is applied, so the rejection loop always runs with a shape of at least one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError

_UINT64_MAX = 2**64 - 1


def _check_u64(value: int, name: str) -> int:
    value = int(value)
    if not 0 <= value <= _UINT64_MAX:
        raise InvalidParameterError(f"{name} must be a 64-bit unsigned integer, got {value}")
    return value


@dataclass
class RngStream:
    """One independent random stream, identified by ``(master_seed, stream_id, path)``.

    ``path`` addresses nested substreams (``stream.child(3)`` appends 3).  The
    stream owns mutable generator state; share it with one task at a time.
    """

    master_seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.master_seed = _check_u64(self.master_seed, "master_seed")
        self.stream_id = _check_u64(self.stream_id, "stream_id")
        self.path = tuple(_check_u64(p, "substream index") for p in self.path)
        seq = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=(self.stream_id, *self.path)
        )
        key = seq.generate_state(2, dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def child(self, *index: int) -> RngStream:
        """Independent substream; does not advance this stream."""
        return RngStream(self.master_seed, self.stream_id, self.path + tuple(index))

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def uniform(self, size=None):
        return self.generator.random(size)

    def standard_exponential(self, size=None):
        return self.generator.standard_exponential(size)


def _finite(name, *values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError(f"{name}: parameters must be finite")


def sample_normal(rng: RngStream, mean=0.0, sd=1.0, size=None):
    """Normal draws with the given mean and standard deviation (``sd = 0`` returns ``mean``)."""
    _finite("sample_normal", mean, sd)
    if np.any(np.asarray(sd) < 0):
        raise InvalidParameterError("sample_normal: sd must be >= 0")
    if size is None:
        size = np.broadcast(np.asarray(mean), np.asarray(sd)).shape or None
    z = rng.standard_normal(size)
    out = mean + sd * z
    # sd == 0 must return mean bit-exactly even if z were extreme
    out = np.where(np.asarray(sd) == 0, mean, out)
    return float(out) if np.ndim(out) == 0 else out


def _marsaglia_tsang(rng: RngStream, shape: np.ndarray) -> np.ndarray:
    """Gamma(shape, 1) draws for a flat array of shapes, all >= 1."""
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty_like(shape)
    pending = np.arange(shape.size)
    while pending.size:
        dp, cp = d[pending], c[pending]
        x = rng.standard_normal(pending.size)
        u = rng.uniform(pending.size)
        v = 1.0 + cp * x
        ok = v > 0
        v = np.where(ok, v * v * v, 1.0)
        x2 = x * x
        accept = ok & (
            (u < 1.0 - 0.0331 * x2 * x2)
            | (np.log(u) < 0.5 * x2 + dp * (1.0 - v + np.log(v)))
        )
        out[pending[accept]] = dp[accept] * v[accept]
        pending = pending[~accept]
    return out


def sample_gamma(rng: RngStream, shape, size=None):
    """Gamma(shape, scale=1) draws, strictly positive.

    ``shape`` may be a scalar or an array; with ``size`` given, a scalar shape
    is broadcast to that many draws.  Shape exactly 1 is drawn as a standard
    exponential.
    """
    a = np.asarray(shape, dtype=float)
    _finite("sample_gamma", a)
    if np.any(a <= 0):
        raise InvalidParameterError("sample_gamma: shape must be > 0")
    scalar = size is None and a.ndim == 0
    if size is not None:
        a = np.broadcast_to(a, size)
    flat = np.ascontiguousarray(a, dtype=float).ravel()
    out = np.empty_like(flat)

    unit = flat == 1.0
    if unit.all():
        out[:] = rng.standard_exponential(flat.size)
    else:
        if unit.any():
            out[unit] = rng.standard_exponential(int(unit.sum()))
        rest = ~unit
        small = flat < 1.0
        boosted = np.where(small, flat + 1.0, flat)[rest]
        g = _marsaglia_tsang(rng, boosted)
        sm = small[rest]
        if sm.any():
            u = rng.uniform(int(sm.sum()))
            g[sm] *= u ** (1.0 / flat[rest][sm])
        out[rest] = g
    # boosting can underflow for tiny shapes; keep the support strictly positive
    np.maximum(out, np.finfo(float).tiny, out=out)
    out = out.reshape(a.shape)
    return float(out) if scalar else out


def sample_dirichlet_counts(rng: RngStream, counts, size=None):
    """Dirichlet(counts) weights via normalised Gamma(n_k) variates.

    Returns a length-K vector, or an array of shape ``(size, K)``.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 1 or counts.size == 0:
        raise InvalidParameterError("sample_dirichlet_counts: counts must be a non-empty vector")
    if np.any(counts <= 0) or np.any(counts != np.round(counts)):
        raise InvalidParameterError("sample_dirichlet_counts: counts must be positive integers")
    shape = counts.shape if size is None else (int(size), counts.size)
    g = sample_gamma(rng, counts, size=shape)
    return g / g.sum(axis=-1, keepdims=True)


def sample_student_t(rng: RngStream, df, loc=0.0, scale=1.0, size=None):
    """``loc + scale * T`` with T standard Student-t on ``df`` degrees of freedom.

    T is built as Z / sqrt(2 G / df) with Z standard normal and G ~ Gamma(df / 2).
    """
    _finite("sample_student_t", df, loc, scale)
    df = np.asarray(df, dtype=float)
    if np.any(df <= 0):
        raise InvalidParameterError("sample_student_t: df must be > 0")
    if np.any(np.asarray(scale) <= 0):
        raise InvalidParameterError("sample_student_t: scale must be > 0")
    if size is None:
        size = np.broadcast(df, np.asarray(loc), np.asarray(scale)).shape
    z = rng.standard_normal(size)
    g = sample_gamma(rng, np.broadcast_to(df, size) / 2.0, size=size)
    t = z / np.sqrt(2.0 * g / df)
    out = loc + scale * t
    return float(out) if np.ndim(out) == 0 else out
