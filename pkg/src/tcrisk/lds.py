"""Sobol points, random shifts and a common point-source interface.

Points are produced in Gray-code order with 32-bit integer lanes. By
default the all-zeros point at index 0 is skipped, so the first emitted
point is ``(0.5, ..., 0.5)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import DomainError

BITS = 32
_SCALE = 1.0 / float(1 << BITS)
MAX_DIMENSION = 1111


@lru_cache(maxsize=1)
def _read_table():
    text = resources.files("tcrisk").joinpath("data/sobol_directions.txt").read_text()
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = [int(tok) for tok in line.split()]
        dim, degree, a = fields[:3]
        m = fields[3:]
        if len(m) != degree or dim != len(rows) + 1:
            raise ValueError(f"malformed direction-number line: {line!r}")
        rows.append((degree, a, tuple(m)))
    return tuple(rows)


def direction_integers(dimension: int) -> np.ndarray:
    """Return the ``(dimension, BITS)`` table of direction integers ``v_k``.

    ``v_k = m_k << (BITS - k)`` with the ``m_k`` extended by the usual
    recurrence over the primitive polynomial coefficients.
    """
    table = _read_table()
    if dimension < 1 or dimension > len(table):
        raise DomainError(
            f"Sobol dimension must be in [1, {len(table)}], got {dimension}"
        )
    out = np.zeros((dimension, BITS), dtype=np.uint64)
    for j in range(dimension):
        degree, a, m_init = table[j]
        m = [0] * (BITS + 1)
        if degree == 0:
            for k in range(1, BITS + 1):
                m[k] = 1
        else:
            for k in range(1, degree + 1):
                m[k] = m_init[k - 1]
            for k in range(degree + 1, BITS + 1):
                val = m[k - degree] ^ (m[k - degree] << degree)
                for i in range(1, degree):
                    if (a >> (degree - 1 - i)) & 1:
                        val ^= m[k - i] << i
                m[k] = val
        for k in range(1, BITS + 1):
            out[j, k - 1] = m[k] << (BITS - k)
    return out


def _gray_points(v: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Integer Sobol points at arbitrary indices (Gray-code ordering)."""
    idx = np.asarray(indices, dtype=np.uint64)
    gray = idx ^ (idx >> np.uint64(1))
    x = np.zeros((idx.size, v.shape[0]), dtype=np.uint64)
    top = int(gray.max()).bit_length() if idx.size else 0
    if top > BITS:
        raise DomainError(f"Sobol index exceeds 2^{BITS} points")
    for b in range(top):
        mask = ((gray >> np.uint64(b)) & np.uint64(1)).astype(bool)
        if mask.any():
            x[mask] ^= v[:, b]
    return x


class SobolGenerator:
    """Stateful Sobol generator.

    Parameters
    ----------
    dimension : int
        Number of coordinates, at most 1111.
    start_index : int
        Index of the first point to emit. The default 1 skips the origin.
    """

    def __init__(self, dimension: int, start_index: int = 1):
        self.dimension = int(dimension)
        self.direction_numbers = direction_integers(self.dimension)
        if start_index < 0:
            raise DomainError("start_index must be nonnegative")
        self.index = int(start_index)
        self.gray_state = _gray_points(
            self.direction_numbers, np.array([self.index], dtype=np.uint64)
        )[0]

    def next(self) -> np.ndarray:
        """Emit the point at the current index and advance by one."""
        point = self.gray_state * _SCALE
        # x_{i+1} = x_i ^ v_c, c = position of the lowest zero bit of i
        i = self.index
        c = ((~i) & (i + 1)).bit_length() - 1
        self.gray_state = self.gray_state ^ self.direction_numbers[:, c]
        self.index += 1
        return point.astype(np.float64)

    def take(self, n: int) -> np.ndarray:
        """Emit the next ``n`` points as an ``(n, dimension)`` array."""
        if n <= 0:
            return np.empty((0, self.dimension))
        indices = np.arange(self.index, self.index + n, dtype=np.uint64)
        pts = _gray_points(self.direction_numbers, indices)
        self.index += n
        self.gray_state = _gray_points(
            self.direction_numbers, np.array([self.index], dtype=np.uint64)
        )[0]
        return pts * _SCALE

    def points_at(self, indices) -> np.ndarray:
        """Random-access evaluation; does not touch the generator state."""
        return _gray_points(self.direction_numbers, indices) * _SCALE


def sobol_next(gen: SobolGenerator) -> np.ndarray:
    return gen.next()


@dataclass(frozen=True)
class RandomShift:
    """Uniform shift vector for one randomization of a point set."""

    shift: np.ndarray
    seed: object = None

    def __post_init__(self):
        w = np.asarray(self.shift, dtype=np.float64)
        if w.ndim != 1 or np.any(w < 0.0) or np.any(w >= 1.0):
            raise DomainError("shift components must lie in [0, 1)")
        w.setflags(write=False)
        object.__setattr__(self, "shift", w)

    @classmethod
    def draw(cls, dimension: int, seed) -> "RandomShift":
        rng = np.random.default_rng(seed)
        return cls(rng.random(dimension), seed)

    @property
    def dimension(self) -> int:
        return self.shift.size


def apply_shift(points, shift) -> np.ndarray:
    """Componentwise ``(u + w) mod 1``.

    ``points`` may be one point or an ``(n, d)`` array; ``shift`` a
    :class:`RandomShift`, a vector of length ``d``, or an ``(n, d)`` array
    of per-row shifts.
    """
    w = shift.shift if isinstance(shift, RandomShift) else np.asarray(shift, float)
    u = np.asarray(points, dtype=np.float64)
    if u.shape[-1] != w.shape[-1]:
        raise DomainError(
            f"dimension mismatch: points have {u.shape[-1]}, shift has {w.shape[-1]}"
        )
    out = u + w
    out -= np.floor(out)
    return out


@dataclass
class PseudoRandomSource:
    """Seeded uniform stream (PCG64, period 2^128)."""

    dimension: int
    seed: object = None
    kind: str = field(default="pseudorandom", init=False)

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)

    def draw(self, n: int) -> np.ndarray:
        return self._rng.random((n, self.dimension))


@dataclass
class ShiftedSobolSource:
    """Sobol points from index 1 onward, all moved by one random shift."""

    dimension: int
    seed: object = None
    kind: str = field(default="sobol_shifted", init=False)

    def __post_init__(self):
        self.shift = RandomShift.draw(self.dimension, self.seed)
        self._gen = SobolGenerator(self.dimension)

    def draw(self, n: int) -> np.ndarray:
        return apply_shift(self._gen.take(n), self.shift)


PointSource = PseudoRandomSource | ShiftedSobolSource

_KINDS = {"pseudorandom": PseudoRandomSource, "sobol_shifted": ShiftedSobolSource}


def make_point_source(kind: str, dimension: int, seed=None) -> PointSource:
    if dimension < 1:
        raise DomainError("dimension must be >= 1")
    try:
        cls = _KINDS[kind]
    except KeyError:
        raise ValueError(
            f"unsupported point source {kind!r}; expected one of {sorted(_KINDS)}"
        ) from None
    return cls(int(dimension), seed)
