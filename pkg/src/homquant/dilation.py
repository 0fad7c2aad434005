"""Linear dilations, weighted norms and the canonical homogeneous norm.

A linear dilation is the one-parameter group ``d(s) = expm(s * G)`` generated
by an anti-Hurwitz matrix ``G``.  Together with a weight ``P`` satisfying
``P G + G^T P > 0`` it defines the canonical homogeneous norm ``||x||_d``:
the unique ``e^s`` with ``||d(-s) x||_P = 1``.

Most functions accept a single vector; the ``*_batch`` variants take an
array of shape ``(k, n)`` and solve all implicit equations at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError, InvalidWeightError, UndefinedAtOriginError

__all__ = [
    "Dilation",
    "HomNormValue",
    "matrix_exponential",
    "sqrtm_spd",
    "check_monotonicity",
    "dilation_apply",
    "canonical_norm",
    "canonical_norm_batch",
    "canonical_norm_gradient",
    "homogeneous_projector",
    "projector_batch",
]

#: Default absolute threshold on ``||x||_P`` below which ``x`` counts as zero.
ZERO_TOL = 1e-12
# Eigenvector condition number above which the flow falls back to expm.
_EIG_COND_MAX = 1e6
_MAX_BISECT = 200


def _as_matrix(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return M


def matrix_exponential(M):
    """Dense matrix exponential ``e^M``.

    Scaling and squaring with a degree-13 Pade approximant (``scipy.linalg.expm``).
    """
    M = _as_matrix(M, "M")
    return sla.expm(M)


def sqrtm_spd(P):
    """Symmetric positive square root of an SPD matrix and its inverse.

    Raises
    ------
    InvalidWeightError
        If ``P`` is not symmetric or has a non-positive eigenvalue.
    """
    P = _as_matrix(P, "P")
    scale = max(1.0, np.abs(P).max())
    if np.abs(P - P.T).max() > 1e-10 * scale:
        raise InvalidWeightError("weight matrix is not symmetric")
    w, V = np.linalg.eigh(0.5 * (P + P.T))
    if w[0] <= 0.0:
        raise InvalidWeightError(f"weight matrix is not positive definite (min eig {w[0]:.3e})")
    r = np.sqrt(w)
    return (V * r) @ V.T, (V / r) @ V.T


def check_monotonicity(G, P):
    """Test strict monotonicity of ``expm(s G)`` with respect to ``||.||_P``.

    Returns
    -------
    ok : bool
        ``lambda_min(P G + G^T P) > 0``.
    beta : float
        ``0.5 * lambda_min(S G S^-1 + S^-1 G^T S)`` with ``S = P^(1/2)``.
    """
    G = _as_matrix(G, "G")
    S, S_inv = sqrtm_spd(P)
    P = 0.5 * (P + np.asarray(P, dtype=float).T)
    if G.shape != P.shape:
        raise InvalidInputError("G and P must have the same shape")
    lam = np.linalg.eigvalsh(P @ G + G.T @ P)[0]
    M = S @ G @ S_inv
    beta = 0.5 * np.linalg.eigvalsh(M + M.T)[0]
    return bool(lam > 0.0), float(beta)


class HomNormValue(NamedTuple):
    """Canonical homogeneous norm of a vector and its logarithm.

    ``log_value`` is ``-inf`` for the zero vector.
    """

    value: float
    log_value: float


@dataclass(frozen=True, eq=False)
class Dilation:
    """Linear dilation ``d(s) = expm(s G)`` paired with a monotone weight ``P``.

    Parameters
    ----------
    generator : array_like, shape (n, n)
        Anti-Hurwitz generator ``G``.
    weight : array_like, shape (n, n)
        SPD matrix with ``P G + G^T P > 0``.
    zero_tol : float
        Vectors with ``||x||_P <= zero_tol`` are treated as the origin.
    """

    generator: np.ndarray
    weight: np.ndarray
    zero_tol: float = ZERO_TOL
    beta: float = field(init=False)
    weight_sqrt: np.ndarray = field(init=False, repr=False)
    weight_isqrt: np.ndarray = field(init=False, repr=False)
    eta: float = field(init=False, repr=False)
    _eig: tuple | None = field(init=False, repr=False)

    def __post_init__(self):
        G = _as_matrix(self.generator, "generator")
        P = _as_matrix(self.weight, "weight")
        if G.shape != P.shape:
            raise InvalidInputError("generator and weight must have the same shape")
        S, S_inv = sqrtm_spd(P)
        P = 0.5 * (P + P.T)
        if np.any(np.linalg.eigvals(G).real <= 0.0):
            raise InvalidInputError("generator is not anti-Hurwitz")
        ok, beta = check_monotonicity(G, P)
        if not ok or beta <= 0.0:
            raise InvalidInputError(
                f"dilation is not strictly monotone w.r.t. the weight (beta={beta:.3e})"
            )
        M = S @ G @ S_inv
        eta = 0.5 * np.linalg.eigvalsh(M + M.T)[-1]
        G.setflags(write=False)
        P.setflags(write=False)
        object.__setattr__(self, "generator", G)
        object.__setattr__(self, "weight", P)
        object.__setattr__(self, "beta", float(beta))
        object.__setattr__(self, "eta", float(eta))
        object.__setattr__(self, "weight_sqrt", S)
        object.__setattr__(self, "weight_isqrt", S_inv)
        object.__setattr__(self, "_eig", _eig_route(G))

    @property
    def dim(self) -> int:
        return self.generator.shape[0]

    def matrix(self, s: float) -> np.ndarray:
        """The matrix ``d(s)``."""
        if self._eig is not None:
            lam, V, V_inv = self._eig
            D = (V * np.exp(s * lam)) @ V_inv
            return D.real.copy()
        return sla.expm(s * self.generator)

    def apply(self, s: float, x) -> np.ndarray:
        return dilation_apply(self, s, x)

    def flow(self, s, X) -> np.ndarray:
        """Row-wise ``d(s_k) x_k`` for ``s`` of shape (k,) and ``X`` of shape (k, n)."""
        s = np.asarray(s, dtype=float)
        X = np.asarray(X, dtype=float)
        if self._eig is not None:
            lam, V, V_inv = self._eig
            Y = X @ V_inv.T
            return ((np.exp(np.multiply.outer(s, lam)) * Y) @ V.T).real
        E = sla.expm(s[:, None, None] * self.generator)
        return np.einsum("kij,kj->ki", E, X)

    def wnorm(self, x) -> float:
        """Weighted Euclidean norm ``sqrt(x^T P x)``."""
        x = np.asarray(x, dtype=float)
        return math.sqrt(max(float(x @ self.weight @ x), 0.0))


def _eig_route(G):
    lam, V = np.linalg.eig(G)
    if not np.all(np.isfinite(V)) or np.linalg.cond(V) > _EIG_COND_MAX:
        return None
    V_inv = np.linalg.inv(V)
    # accept only if the decomposition reproduces G to working accuracy
    err = np.abs((V * lam) @ V_inv - G).max()
    if err > 1e-12 * max(1.0, np.abs(G).max()):
        return None
    return lam, V, V_inv


def _check_vector(d: Dilation, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (d.dim,):
        raise InvalidInputError(f"expected a vector of length {d.dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("vector has non-finite entries")
    return x


def dilation_apply(d: Dilation, s: float, x) -> np.ndarray:
    """Return ``d(s) x = expm(s G) x``."""
    if not math.isfinite(s):
        raise InvalidInputError("dilation parameter must be finite")
    x = _check_vector(d, x)
    return d.matrix(s) @ x


def _log_sq_norm(d: Dilation, s, X):
    Z = d.flow(-s, X)
    q = np.einsum("ki,ij,kj->k", Z, d.weight, Z)
    return np.log(q), Z


def _solve_log_norm(d: Dilation, X):
    """Vectorized root of ``ln ||d(-s) x||_P^2 = 0`` for every row of ``X``.

    Doubling bracket from ``s0 = ln ||x||_P``, bisection, then one Newton polish.
    """
    k = X.shape[0]
    q0 = np.einsum("ki,ij,kj->k", X, d.weight, X)
    s0 = 0.5 * np.log(q0)
    phi0, _ = _log_sq_norm(d, s0, X)
    lo = s0.copy()
    hi = s0.copy()
    up = phi0 > 0.0  # root lies above s0
    step = np.ones(k)
    active = phi0 != 0.0
    for _ in range(64):
        if not active.any():
            break
        trial = np.where(up, s0 + step, s0 - step)
        phi, _ = _log_sq_norm(d, trial, X)
        flipped = np.where(up, phi <= 0.0, phi >= 0.0)
        done = active & flipped
        hi = np.where(done & up, trial, hi)
        lo = np.where(done & ~up, trial, lo)
        # tighten the other end with the last non-flipped trial
        lo = np.where(active & up & ~flipped, trial, lo)
        hi = np.where(active & ~up & ~flipped, trial, hi)
        active &= ~flipped
        step = np.where(active, 2.0 * step, step)
    if active.any():
        raise InvalidInputError("could not bracket the homogeneous norm")
    for _ in range(_MAX_BISECT):
        width = hi - lo
        if np.all(width <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(hi))):
            break
        mid = 0.5 * (lo + hi)
        phi, _ = _log_sq_norm(d, mid, X)
        pos = phi > 0.0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    s = 0.5 * (lo + hi)
    phi, Z = _log_sq_norm(d, s, X)
    PZ = Z @ d.weight
    dphi = -2.0 * np.einsum("ki,ki->k", PZ, Z @ d.generator.T) / np.einsum("ki,ki->k", PZ, Z)
    polished = s - phi / dphi
    return np.clip(polished, np.minimum(lo, hi), np.maximum(lo, hi))


def canonical_norm_batch(d: Dilation, X, return_log=False):
    """Canonical homogeneous norms of the rows of ``X``.

    Rows with ``||x||_P <= d.zero_tol`` get norm 0 (log norm ``-inf``).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != d.dim or not np.all(np.isfinite(X)):
        raise InvalidInputError("expected finite rows of length %d" % d.dim)
    q = np.einsum("ki,ij,kj->k", X, d.weight, X)
    nz = np.sqrt(np.maximum(q, 0.0)) > d.zero_tol
    logs = np.full(X.shape[0], -np.inf)
    if nz.any():
        logs[nz] = _solve_log_norm(d, X[nz])
    vals = np.where(nz, np.exp(logs), 0.0)
    if return_log:
        return vals, logs
    return vals


def canonical_norm(d: Dilation, x) -> HomNormValue:
    """Canonical homogeneous norm ``||x||_d``."""
    x = _check_vector(d, x)
    vals, logs = canonical_norm_batch(d, x[None, :], return_log=True)
    return HomNormValue(float(vals[0]), float(logs[0]))


def _nonzero_norm(d: Dilation, x):
    x = _check_vector(d, x)
    if d.wnorm(x) <= d.zero_tol:
        raise UndefinedAtOriginError("undefined at the origin")
    return x, canonical_norm(d, x)


def canonical_norm_gradient(d: Dilation, x) -> np.ndarray:
    """Gradient of ``||x||_d`` with respect to ``x`` (returned as a 1-D row)."""
    x, nv = _nonzero_norm(d, x)
    D = d.matrix(-nv.log_value)
    z = D @ x
    Pz = d.weight @ z
    denom = float(Pz @ d.generator @ z)
    return nv.value * (Pz @ D) / denom


def homogeneous_projector(d: Dilation, x) -> np.ndarray:
    """Project ``x != 0`` onto the unit sphere along its dilation orbit."""
    x, nv = _nonzero_norm(d, x)
    return d.matrix(-nv.log_value) @ x


def projector_batch(d: Dilation, X):
    """Row-wise projector; returns ``(Z, norms)`` with zero rows left at zero."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    vals, logs = canonical_norm_batch(d, X, return_log=True)
    Z = np.zeros_like(X)
    nz = vals > 0.0
    if nz.any():
        Z[nz] = d.flow(-logs[nz], X[nz])
    return Z, vals
