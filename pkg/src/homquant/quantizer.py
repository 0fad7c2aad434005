"""Finite static d-homogeneous spherical quantizer.

A nonzero state is projected onto the weighted unit sphere along its dilation
orbit, whitened by ``P^(1/2)`` to a Euclidean unit vector, expressed in
spherical angles, and every angle is snapped to the center of a uniform bin.
Polar angles get ``m`` bins over ``[0, pi]``; the azimuth gets ``2m`` bins
over ``[0, 2 pi)``, so there are ``2 m^(n-1)`` seeds.

Seeds are numbered by a mixed-radix index over the bin tuple (first angle
most significant).  On the wire the origin uses code 0 and seed ``i`` uses
code ``i + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dilation import Dilation, canonical_norm_batch, sqrtm_spd
from .errors import (
    BudgetTooSmallError,
    ConfigurationError,
    DecodeError,
    InvalidAngleError,
    InvalidInputError,
)

__all__ = [
    "Resolution",
    "QuantizedSample",
    "SphericalQuantizer",
    "from_spherical",
    "to_spherical",
    "quantize_angle",
    "budget_to_resolution",
    "delta_bound",
    "prop4_bound",
    "quantize",
    "quantize_batch",
]

TWO_PI = 2.0 * math.pi
ORIGIN = -1


# ---------------------------------------------------------------------------
# spherical coordinates


def _g1(Phi):
    """Angles of shape (k, n-1) to Euclidean unit vectors of shape (k, n)."""
    k, p = Phi.shape
    Z = np.empty((k, p + 1))
    sin_prod = np.ones(k)
    for i in range(p):
        Z[:, i] = np.cos(Phi[:, i]) * sin_prod
        sin_prod = sin_prod * np.sin(Phi[:, i])
    Z[:, p] = sin_prod
    return Z


def _g2(Z):
    """Euclidean unit vectors of shape (k, n) to angles of shape (k, n-1)."""
    k, n = Z.shape
    Phi = np.empty((k, n - 1))
    # tail[:, i] = sqrt(sum_{j > i} z_j^2)
    tail = np.sqrt(np.cumsum((Z[:, ::-1] ** 2), axis=1)[:, ::-1])
    for i in range(n - 2):
        Phi[:, i] = np.arctan2(tail[:, i + 1], Z[:, i])
    az = np.arctan2(Z[:, n - 1], Z[:, n - 2])
    az = np.where(az < 0.0, az + TWO_PI, az)
    Phi[:, n - 2] = np.where(az >= TWO_PI, az - TWO_PI, az)
    return Phi


def from_spherical(angles) -> np.ndarray:
    """Unit vector with the given spherical angles ``[phi_1, ..., phi_{n-1}]``.

    Polar angles must lie in ``[0, pi]``, the last (azimuthal) one in ``[0, 2 pi)``.
    """
    phi = np.atleast_1d(np.asarray(angles, dtype=float))
    if phi.ndim != 1 or phi.size == 0 or not np.all(np.isfinite(phi)):
        raise InvalidAngleError("expected a non-empty vector of finite angles")
    if np.any(phi[:-1] < 0.0) or np.any(phi[:-1] > math.pi):
        raise InvalidAngleError("polar angles must lie in [0, pi]")
    if not 0.0 <= phi[-1] < TWO_PI:
        raise InvalidAngleError("azimuthal angle must lie in [0, 2 pi)")
    return _g1(phi[None, :])[0]


def to_spherical(z) -> np.ndarray:
    """Spherical angles of a Euclidean unit vector (``atan2(0, 0) = 0`` on degenerate tails)."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size < 2 or not np.all(np.isfinite(z)):
        raise InvalidInputError("expected a finite vector of length >= 2")
    if abs(np.linalg.norm(z) - 1.0) > 1e-9:
        raise InvalidInputError("vector is not of unit length")
    return _g2(z[None, :])[0]


def quantize_angle(phi: float, delta_step: float, bins: int):
    """Snap an angle to the center of its uniform bin.

    Returns ``(center, bin)`` with ``bin = min(floor(phi / delta_step), bins - 1)``.
    """
    b = int(min(max(math.floor(phi / delta_step), 0), bins - 1))
    return (b + 0.5) * delta_step, b


# ---------------------------------------------------------------------------
# sizing


class Resolution(NamedTuple):
    m: int
    delta_step: float
    seed_count: int
    delta_N: float


def _int_root_floor(value: float, k: int) -> int:
    """Largest integer ``m`` with ``m^k <= value``."""
    m = int(math.floor(value ** (1.0 / k)))
    while m > 0 and m**k > value:
        m -= 1
    while (m + 1) ** k <= value:
        m += 1
    return m


def delta_bound(delta_step: float, n: int) -> float:
    """Worst-case seed distance ``2 sqrt(1 - cos^(2(n-1))(delta_step / 2))``."""
    c = math.cos(0.5 * delta_step) ** (2 * (n - 1))
    return 2.0 * math.sqrt(max(1.0 - c, 0.0))


def budget_to_resolution(n: int, N: int, floor_mode: bool = True) -> Resolution:
    """Bins per polar angle, angle step, seed count and error bound for ``N`` seeds.

    With ``floor_mode=False`` the error bound uses the real-valued
    ``(N/2)^(1/(n-1))`` instead of its floor; the bins stay integer.
    """
    if n < 2:
        raise InvalidInputError("spherical sizing needs n >= 2")
    if N < 2:
        raise BudgetTooSmallError(f"budget N={N} is too small")
    m = _int_root_floor(N / 2.0, n - 1)
    if m <= 2:
        raise BudgetTooSmallError(f"budget N={N} gives m={m} bins per angle; need m >= 3")
    step = math.pi / m
    m_eff = m if floor_mode else (N / 2.0) ** (1.0 / (n - 1))
    return Resolution(m, step, 2 * m ** (n - 1), delta_bound(math.pi / m_eff, n))


def prop4_bound(delta_step: float, n: int) -> float:
    """Distance bound for unit vectors whose angles differ by at most ``delta_step``."""
    if not 0.0 < delta_step < 0.5 * math.pi:
        raise InvalidInputError("angle step must lie in (0, pi/2)")
    c = math.cos(0.5 * delta_step) ** (2 * (n - 1))
    return math.sqrt(max(2.0 - 2.0 * (2.0 * c - 1.0), 0.0))


# ---------------------------------------------------------------------------
# quantizer


class QuantizedSample(NamedTuple):
    """Quantizer output: seed vector, seed index (``-1`` for the origin) and wire code."""

    seed: np.ndarray
    index: int

    @property
    def code(self) -> int:
        return self.index + 1


@dataclass(frozen=True, eq=False)
class SphericalQuantizer:
    """Uniform-angle spherical quantizer on the ``P``-weighted unit sphere.

    Build it with :meth:`from_budget` (seed budget ``N``) or :meth:`from_bins`
    (explicit ``m``).  For ``n = 1`` the sphere is ``{+-1/sqrt(P)}`` and the
    quantizer reduces to the sign.
    """

    dim: int
    budget: int
    m: int
    delta_step: float
    delta_N: float
    weight: np.ndarray
    floor_mode: bool = True
    weight_sqrt: np.ndarray = field(init=False, repr=False)
    weight_isqrt: np.ndarray = field(init=False, repr=False)
    radices: tuple = field(init=False, repr=False)
    seeds: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.weight, dtype=float))
        if P.shape != (self.dim, self.dim):
            raise InvalidInputError("weight shape does not match the quantizer dimension")
        S, S_inv = sqrtm_spd(P)
        object.__setattr__(self, "weight", 0.5 * (P + P.T))
        object.__setattr__(self, "weight_sqrt", S)
        object.__setattr__(self, "weight_isqrt", S_inv)
        if self.dim == 1:
            radices = (2,)
            seeds = np.array([[1.0], [-1.0]]) * S_inv[0, 0]
        else:
            radices = (self.m,) * (self.dim - 2) + (2 * self.m,)
            bins = np.array(list(np.ndindex(*radices)), dtype=float)
            seeds = _g1((bins + 0.5) * self.delta_step) @ S_inv.T
        if len(seeds) > self.budget:
            raise BudgetTooSmallError("seed count exceeds the budget")
        seeds.setflags(write=False)
        object.__setattr__(self, "radices", radices)
        object.__setattr__(self, "seeds", seeds)

    @classmethod
    def from_budget(cls, dim: int, budget: int, weight, floor_mode: bool = True):
        if dim == 1:
            if budget < 2:
                raise BudgetTooSmallError("the scalar quantizer needs two seeds")
            return cls(1, int(budget), 1, math.pi, 0.0, weight, floor_mode)
        res = budget_to_resolution(dim, budget, floor_mode)
        return cls(dim, int(budget), res.m, res.delta_step, res.delta_N, weight, floor_mode)

    @classmethod
    def from_bins(cls, dim: int, m: int, weight):
        if dim < 2:
            raise InvalidInputError("explicit bins need n >= 2")
        if m <= 2:
            raise BudgetTooSmallError(f"m={m} bins per angle; need m >= 3")
        step = math.pi / m
        return cls(dim, 2 * m ** (dim - 1), m, step, delta_bound(step, dim), weight, True)

    @property
    def seed_count(self) -> int:
        return len(self.seeds)

    @property
    def bits(self) -> int:
        return max(1, math.ceil(math.log2(self.seed_count + 1)))

    # -- sphere map -----------------------------------------------------

    def sphere_indices(self, Z, return_angles=False):
        """Seed indices of points ``Z`` (rows) lying on the ``P``-unit sphere."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if self.dim == 1:
            idx = np.where(Z[:, 0] >= 0.0, 0, 1)
            return (idx, None) if return_angles else idx
        Phi = _g2(Z @ self.weight_sqrt.T)
        B = np.floor(Phi / self.delta_step).astype(np.int64)
        B = np.clip(B, 0, np.array(self.radices) - 1)
        idx = np.ravel_multi_index(tuple(B.T), self.radices)
        return (idx, Phi) if return_angles else idx

    def boundary_margin(self, Z) -> np.ndarray:
        """Smallest angular distance of each row to an interior bin edge."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if self.dim == 1:
            return np.abs(Z[:, 0] @ self.weight_sqrt.T)
        _, Phi = self.sphere_indices(Z, return_angles=True)
        frac = Phi / self.delta_step
        dist = np.abs(frac - np.round(frac)) * self.delta_step
        return dist.min(axis=1)

    # -- codec ----------------------------------------------------------

    def seed(self, index: int) -> np.ndarray:
        if index == ORIGIN:
            return np.zeros(self.dim)
        if not 0 <= index < self.seed_count:
            raise DecodeError(f"seed index {index} out of range")
        return self.seeds[index].copy()

    def bin_tuple(self, index: int) -> tuple:
        return tuple(int(b) for b in np.unravel_index(index, self.radices))

    def encode(self, sample) -> str:
        """Big-endian bit string of the wire code of a sample (or seed index)."""
        index = sample.index if isinstance(sample, QuantizedSample) else int(sample)
        if not ORIGIN <= index < self.seed_count:
            raise InvalidInputError(f"seed index {index} out of range")
        return format(index + 1, f"0{self.bits}b")

    def decode(self, bits) -> QuantizedSample:
        """Inverse of :meth:`encode`."""
        if isinstance(bits, str):
            if len(bits) != self.bits or set(bits) - {"0", "1"}:
                raise DecodeError(f"expected {self.bits} binary digits, got {bits!r}")
            code = int(bits, 2)
        else:
            code = int(bits)
        if not 0 <= code <= self.seed_count:
            raise DecodeError(f"code {code} does not name a seed")
        index = code - 1
        return QuantizedSample(self.seed(index), index)

    def code_hex(self, index: int) -> str:
        width = (self.bits + 3) // 4
        return format(index + 1, f"0{width}x")

    # -- serialization --------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n": self.dim,
            "N": self.budget,
            "m": self.m,
            "delta_step": self.delta_step,
            "delta_N": self.delta_N,
            "P": self.weight.tolist(),
            "floor_mode": self.floor_mode,
        }

    @classmethod
    def from_dict(cls, doc: dict):
        try:
            q = cls.from_budget(int(doc["n"]), int(doc["N"]), np.array(doc["P"], float), bool(doc["floor_mode"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed quantizer document: {exc}") from exc
        if "m" in doc and int(doc["m"]) != q.m:
            raise InvalidInputError("stored m disagrees with the budget")
        return q


def _check_weight(q: SphericalQuantizer, d: Dilation):
    if q.dim != d.dim or np.abs(q.weight - d.weight).max() > 1e-12 * max(1.0, np.abs(d.weight).max()):
        raise ConfigurationError("quantizer and dilation use different weights")


def quantize_batch(q: SphericalQuantizer, d: Dilation, X):
    """Seed indices (``-1`` for the origin) and seeds for every row of ``X``."""
    _check_weight(q, d)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    vals, logs = canonical_norm_batch(d, X, return_log=True)
    idx = np.full(X.shape[0], ORIGIN, dtype=np.int64)
    seeds = np.zeros_like(X)
    nz = vals > 0.0
    if nz.any():
        Z = d.flow(-logs[nz], X[nz])
        idx[nz] = q.sphere_indices(Z)
        seeds[nz] = q.seeds[idx[nz]]
    return idx, seeds


def quantize(q: SphericalQuantizer, d: Dilation, x) -> QuantizedSample:
    """Quantize one state; the origin maps to the zero seed."""
    x = np.asarray(x, dtype=float)
    if x.shape != (q.dim,) or not np.all(np.isfinite(x)):
        raise InvalidInputError("expected a finite state vector")
    idx, seeds = quantize_batch(q, d, x[None, :])
    return QuantizedSample(seeds[0], int(idx[0]))
