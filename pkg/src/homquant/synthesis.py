"""Homogenizing feedback, quantized-feedback LMI synthesis and certification.

Pipeline for a controllable pair ``(A, B)``:

1. :func:`solve_homogenization` solves ``A G0 + B Y0 = G0 A + A``,
   ``G0 B = 0`` and returns ``K0``, the nilpotent ``A0 = A + B K0`` and the
   dilation generator ``Gd = I + mu G0``.
2. :func:`solve_gain_lmi` finds ``(X, Y)`` with ``X Gd^T + Gd X > 0``,
   ``X > 0`` and the S-procedure block inequality for a quantizer error
   budget ``delta``; the feedback is ``K = Y X^-1`` and the weight ``P = X^-1``.
3. :func:`verify_lmi` and :func:`compute_rho` re-check a candidate with exact
   eigenvalues, independently of how it was produced.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (
    CannotInvertError,
    ControllabilityError,
    HomogenizationSingularError,
    InfeasibleError,
    InvalidInputError,
    NoSolutionError,
    NotCertifiedError,
)
from .lmi import AffineLMI, maximize_margin

__all__ = [
    "PlantModel",
    "HomogenizationResult",
    "GainCertificate",
    "controllability_rank",
    "solve_homogenization",
    "verify_lmi",
    "assemble_W",
    "compute_rho",
    "certificate_rho",
    "solve_gain_lmi",
    "solve_baseline_lmi",
    "maximize_decay_rate",
    "matched_gain_scale",
    "homogeneity_residuals",
    "certificate_to_dict",
    "certificate_from_dict",
]

log = logging.getLogger(__name__)

MARGIN_MIN = 1e-6
RANK_TOL = 1e-9
TAU_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)


def _finite(M, name, shape=None):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} has non-finite entries")
    if shape is not None and M.shape != shape:
        raise InvalidInputError(f"{name} must have shape {shape}, got {M.shape}")
    return M


def controllability_rank(A, B, tol=RANK_TOL):
    """Numerical rank of ``[B, AB, ..., A^(n-1) B]``.

    Singular values below ``tol * sigma_max`` count as zero.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    sv = np.linalg.svd(np.hstack(blocks), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


@dataclass(frozen=True, eq=False)
class PlantModel:
    """Controllable LTI pair ``dx/dt = A x + B u``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        n = A.shape[0]
        if A.shape != (n, n) or B.ndim != 2 or B.shape[0] != n:
            raise InvalidInputError(f"inconsistent shapes A {A.shape}, B {B.shape}")
        _finite(A, "A")
        _finite(B, "B")
        rank = controllability_rank(A, B)
        if rank < n:
            raise ControllabilityError(f"pair (A, B) is not controllable: rank {rank} < {n}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True, eq=False)
class HomogenizationResult:
    G0: np.ndarray
    Y0: np.ndarray
    K0: np.ndarray
    Gd: np.ndarray
    mu: float
    residual_eq: float
    residual_GB: float
    residual_nil: float

    def closed(self, plant: PlantModel) -> np.ndarray:
        """``A0 = A + B K0``."""
        return plant.A + plant.B @ self.K0


def solve_homogenization(plant: PlantModel, mu: float = -1.0) -> HomogenizationResult:
    """Minimum-norm solution of the homogenization equations.

    Both matrix equations are vectorized (column-major) into one linear
    least-squares system in ``(vec G0, vec Y0)``.
    """
    if not -1.0 <= mu < 0.0:
        raise InvalidInputError(f"homogeneity degree must lie in [-1, 0), got {mu}")
    A, B = plant.A, plant.B
    n, m = plant.n, plant.m
    I = np.eye(n)
    top = np.hstack([np.kron(I, A) - np.kron(A.T, I), np.kron(I, B)])
    bottom = np.hstack([np.kron(B.T, I), np.zeros((n * m, m * n))])
    M = np.vstack([top, bottom])
    rhs = np.concatenate([A.flatten(order="F"), np.zeros(n * m)])
    sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
    G0 = sol[: n * n].reshape((n, n), order="F")
    Y0 = sol[n * n :].reshape((m, n), order="F")

    res_eq = np.linalg.norm(A @ G0 + B @ Y0 - G0 @ A - A)
    res_gb = np.linalg.norm(G0 @ B)
    if res_eq > 1e-9 * (1 + np.linalg.norm(A)) or res_gb > 1e-9 * (1 + np.linalg.norm(B)):
        raise NoSolutionError(f"homogenization residuals too large ({res_eq:.2e}, {res_gb:.2e})")

    shifted = G0 - I
    if np.linalg.cond(shifted) > 1e12:
        raise HomogenizationSingularError("G0 - I is singular")
    K0 = np.linalg.solve(shifted.T, Y0.T).T
    K0[np.abs(K0) < 1e-14 * (1 + np.abs(K0).max())] = 0.0
    A0 = A + B @ K0
    nil = np.linalg.norm(np.linalg.matrix_power(A0, n))
    if nil > 1e-9 * (1 + np.linalg.norm(A0) ** n):
        raise NoSolutionError(f"A + B K0 is not nilpotent (residual {nil:.2e})")
    Gd = I + mu * G0
    return HomogenizationResult(G0, Y0, K0, Gd, float(mu), float(res_eq), float(res_gb), float(nil))


def homogeneity_residuals(A0, B, Gd, s_values):
    """Worst relative residuals of ``A0 d(s) = e^-s d(s) A0`` and ``d(s) B = e^s B``.

    These are the degree ``-1`` homogeneity relations that follow from
    ``A0 Gd - Gd A0 = -A0`` and ``Gd B = B``.  With the factors in the other
    order (``d(s) A0 = e^-s A0 d(s)``) the relation does not hold.
    """
    ra = rb = 0.0
    for s in s_values:
        D = sla.expm(s * Gd)
        lhs = A0 @ D
        ra = max(ra, np.abs(lhs - np.exp(-s) * D @ A0).max() / max(1.0, np.abs(lhs).max()))
        lhs = D @ B
        rb = max(rb, np.abs(lhs - np.exp(s) * B).max() / max(1.0, np.abs(lhs).max()))
    return ra, rb


# ---------------------------------------------------------------------------
# certificates


def _inverse(X):
    X = 0.5 * (X + X.T)
    if np.linalg.cond(X) > 1e14:
        raise CannotInvertError("X is numerically singular")
    return np.linalg.inv(X)


def assemble_W(A0, B, P, K, delta, tau):
    """S-procedure matrix in ``P`` coordinates."""
    BK = B @ K
    top = A0.T @ P + P @ A0 + BK.T @ P + P @ BK + delta**2 * tau * P
    W = np.block([[top, P @ BK], [BK.T @ P, -tau * P]])
    return 0.5 * (W + W.T)


def verify_lmi(A0, B, Gd, X, Y, delta, tau):
    """Exact margins of a candidate ``(X, Y)``.

    Returns
    -------
    margin_mono, margin_posdef, margin_W : float
        ``lambda_min(X Gd^T + Gd X)``, ``lambda_min(X)`` and
        ``lambda_max(W)`` with ``P = X^-1``, ``K = Y X^-1``.
    """
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Gd = np.atleast_2d(np.asarray(Gd, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n = A0.shape[0]
    if X.shape != (n, n) or Gd.shape != (n, n) or B.shape[0] != n or Y.shape != (B.shape[1], n):
        raise InvalidInputError("inconsistent shapes in verify_lmi")
    P = _inverse(X)
    K = Y @ P
    mono = np.linalg.eigvalsh(X @ Gd.T + Gd @ X)[0]
    posdef = np.linalg.eigvalsh(0.5 * (X + X.T))[0]
    W = assemble_W(A0, B, P, K, delta, tau)
    return float(mono), float(posdef), float(np.linalg.eigvalsh(W)[-1])


def compute_rho(W, M):
    """Largest ``rho`` with ``W <= -rho M``, i.e. ``lambda_min`` of the pencil ``(-W, M)``."""
    W = np.asarray(W, dtype=float)
    M = np.asarray(M, dtype=float)
    if np.linalg.eigvalsh(W)[-1] >= 0.0:
        raise NotCertifiedError("W is not negative definite")
    if np.linalg.eigvalsh(M)[0] <= 0.0:
        raise NotCertifiedError("weight block is not positive definite")
    rho = sla.eigh(-W, M, eigvals_only=True)[0]
    return float(rho)


def certificate_rho(A0, B, Gd, P, K, delta, tau):
    W = assemble_W(A0, B, P, K, delta, tau)
    M = sla.block_diag(Gd.T @ P + P @ Gd, P)
    return compute_rho(W, M)


@dataclass(frozen=True, eq=False)
class GainCertificate:
    """Synthesis output for the quantized homogeneous feedback ``u = K q(x)``."""

    X: np.ndarray
    Y: np.ndarray
    K: np.ndarray
    P: np.ndarray
    delta: float
    tau: float
    margin_mono: float
    margin_posdef: float
    margin_W: float
    rho: float
    Gd: np.ndarray = field(repr=False, default=None)

    @property
    def certified(self) -> bool:
        return self.margin_mono >= MARGIN_MIN and self.margin_posdef > 0 and self.margin_W <= -MARGIN_MIN

    def rescaled(self, c: float) -> "GainCertificate":
        """Certificate for ``(cX, cY)``; ``K`` and ``rho`` are unchanged, ``P`` becomes ``P / c``."""
        if c <= 0:
            raise InvalidInputError("scale must be positive")
        return GainCertificate(
            c * self.X, c * self.Y, self.K, self.P / c, self.delta, self.tau,
            c * self.margin_mono, c * self.margin_posdef, self.margin_W / c, self.rho, self.Gd,
        )


def make_certificate(A0, B, Gd, X, Y, delta, tau) -> GainCertificate:
    """Build a certificate from ``(X, Y)``; ``rho`` is NaN when ``W`` is not negative definite."""
    X = 0.5 * (np.asarray(X, dtype=float) + np.asarray(X, dtype=float).T)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    mono, posdef, mw = verify_lmi(A0, B, Gd, X, Y, delta, tau)
    P = _inverse(X)
    P = 0.5 * (P + P.T)
    K = Y @ P
    try:
        rho = certificate_rho(A0, B, Gd, P, K, delta, tau) if mono > 0 and posdef > 0 else float("nan")
    except NotCertifiedError:
        rho = float("nan")
    return GainCertificate(X, Y, K, P, float(delta), float(tau), mono, posdef, mw, rho, np.asarray(Gd, float))


def _sym_basis(n):
    """Basis of traceless symmetric matrices (so ``I + span`` keeps ``trace = n``)."""
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            out.append(E)
    for i in range(n - 1):
        E = np.zeros((n, n))
        E[i, i] = 1.0
        E[n - 1, n - 1] = -1.0
        out.append(E)
    return out


def _gain_blocks(A0, B, Gd, X, Y, delta, tau, rate=0.0):
    BY = B @ Y
    mono = X @ Gd.T + Gd @ X
    top = X @ A0.T + A0 @ X + BY.T + BY + delta**2 * tau * X + rate * mono
    L = np.block([[top, BY], [BY.T, (rate - tau) * X]])
    return [mono, X, -L]


def _gain_problem(A0, B, Gd, delta, tau, rate=0.0):
    n, m = B.shape
    X_basis = _sym_basis(n)
    Y_basis = []
    for i in range(m):
        for j in range(n):
            E = np.zeros((m, n))
            E[i, j] = 1.0
            Y_basis.append(E)
    zeroY = np.zeros((m, n))
    zeroX = np.zeros((n, n))
    # constant part is linear in (X, Y) evaluated at X = I; the delta/tau terms carry no offset
    base = _gain_blocks(A0, B, Gd, np.eye(n), zeroY, delta, tau, rate)
    cols = [_gain_blocks(A0, B, Gd, E, zeroY, delta, tau, rate) for E in X_basis]
    cols += [_gain_blocks(A0, B, Gd, zeroX, E, delta, tau, rate) for E in Y_basis]
    coeffs = [np.stack([c[b] for c in cols]) for b in range(3)]
    lmi = AffineLMI(base, coeffs, ("mono", "posdef", "W"))

    def unpack(v):
        k = len(X_basis)
        X = np.eye(n) + np.tensordot(v[:k], np.array(X_basis), axes=1) if k else np.eye(n)
        Y = np.tensordot(v[k:], np.array(Y_basis), axes=1)
        return X, Y

    def pack(X, Y):
        k = len(X_basis)
        v = np.zeros(k + m * n)
        idx = 0
        for i in range(n):
            for j in range(i + 1, n):
                v[idx] = X[i, j]
                idx += 1
        for i in range(n - 1):
            v[idx] = X[i, i] - 1.0
            idx += 1
        v[k:] = Y.flatten()
        return v

    return lmi, unpack, pack


def _random_spd_start(n, rng):
    R = rng.normal(size=(n, n))
    X = np.eye(n) + 0.1 * R @ R.T
    return n * X / np.trace(X)


def _as_problem(A0, B, Gd, delta):
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    Gd = np.atleast_2d(np.asarray(Gd, dtype=float))
    if not 0.0 < delta < 1.0:
        raise InvalidInputError(f"delta must lie in (0, 1), got {delta}")
    return A0, B, Gd


def solve_gain_lmi(A0, B, Gd, delta, tau=None, *, seed=0, restarts=5, max_evals=50_000, tau_search=True,
                   rate=0.0):
    """Max-margin solution of the quantized-feedback LMI, normalized to ``trace(X) = n``.

    ``tau`` defaults to ``1 / delta``.  When that fails and ``tau_search`` is
    set, ``tau`` is retried on the grid ``{0.25, 0.5, 1, 2, 4} / delta``.

    A positive ``rate`` tightens the block inequality to
    ``L + rate * blkdiag(X Gd^T + Gd X, X) < 0``, so any solution has
    ``rho > rate``.

    Raises
    ------
    InfeasibleError
        No restart reached the certification margins; carries the best margin.
    """
    A0, B, Gd = _as_problem(A0, B, Gd, delta)
    if rate < 0:
        raise InvalidInputError("rate must be non-negative")
    taus = [1.0 / delta if tau is None else float(tau)]
    if tau_search:
        taus += [c / delta for c in TAU_GRID if not np.isclose(c / delta, taus[0])]
    if tau is not None and tau <= 0:
        raise InvalidInputError("tau must be positive")
    rng = np.random.default_rng(seed)
    n = A0.shape[0]
    best = (-np.inf, None)
    for tau_k in taus:
        lmi, unpack, pack = _gain_problem(A0, B, Gd, delta, tau_k, rate)
        starts = [pack(np.eye(n), np.zeros((B.shape[1], n)))]
        starts += [pack(_random_spd_start(n, rng), np.zeros((B.shape[1], n))) for _ in range(restarts - 1)]
        for r, v0 in enumerate(starts):
            res = maximize_margin(lmi, v0, target=0.0, max_evals=max_evals)
            log.debug("tau=%g restart %d: margin %.3e after %d evals", tau_k, r, res.margin, res.evaluations)
            if res.margin > best[0]:
                best = (res.margin, (tau_k, res.point))
            if res.margin <= 0:
                continue
            X, Y = unpack(res.point)
            cert = make_certificate(A0, B, Gd, X, Y, delta, tau_k)
            if cert.certified and np.isfinite(cert.rho) and cert.rho > 0:
                return cert
    raise InfeasibleError(
        f"no certificate for delta={delta} within budget (best margin {best[0]:.3e})",
        best_margin=best[0],
        best_point=best[1],
    )


def maximize_decay_rate(A0, B, Gd, delta, tau, *, fraction=0.9, rel_tol=0.02, seed=0, restarts=3,
                        max_evals=20_000):
    """Bisect on the LMI decay-rate shift and return a certificate at ``fraction`` of the best rate.

    Backing off from the supremum keeps the block inequality strictly
    feasible, so the returned certificate still has usable margins.
    """
    A0, B, Gd = _as_problem(A0, B, Gd, delta)
    if not 0.0 < fraction <= 1.0:
        raise InvalidInputError("fraction must lie in (0, 1]")

    def attempt(rate):
        try:
            return solve_gain_lmi(A0, B, Gd, delta, tau, seed=seed, restarts=restarts, max_evals=max_evals,
                                  tau_search=False, rate=rate)
        except InfeasibleError:
            return None

    lo_cert = attempt(0.0)
    if lo_cert is None:
        raise InfeasibleError(f"no certificate for delta={delta}", best_margin=-np.inf)
    lo = max(lo_cert.rho, 0.0)
    hi = None
    step = max(2.0 * lo, 1e-3)
    while hi is None:
        if attempt(step) is None:
            hi = step
        else:
            lo, step = step, 2.0 * step
            if step > 1e6:
                raise InvalidInputError("decay rate appears unbounded")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if attempt(mid) is None:
            hi = mid
        else:
            lo = mid
    log.debug("decay rate bracket [%g, %g]", lo, hi)
    cert = attempt(fraction * lo) if lo > 0 else None
    return cert if cert is not None else lo_cert


def matched_gain_scale(cert: GainCertificate, B, amplitude, *, kappa_ratio=0.9):
    """Scale ``c`` for ``cert.rescaled(c)`` so a matched disturbance ``B gamma``, ``|gamma| <= amplitude``,
    meets ``||B gamma||_P <= kappa beta`` with ``kappa = kappa_ratio * rho``.

    ``rho`` and ``beta`` do not change under rescaling while
    ``||B gamma||_{P/c}`` shrinks like ``c^-1/2``, hence the closed form.
    """
    if amplitude < 0:
        raise InvalidInputError("amplitude must be non-negative")
    if not 0.0 < kappa_ratio < 1.0:
        raise InvalidInputError("kappa_ratio must lie in (0, 1)")
    if not (np.isfinite(cert.rho) and cert.rho > 0):
        raise NotCertifiedError("certificate has no positive rho")
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] != cert.P.shape[0]:
        B = B.T
    S = sla.sqrtm(cert.P).real
    Si = np.linalg.inv(S)
    H = S @ cert.Gd @ Si
    beta = np.linalg.eigvalsh(0.5 * (H + H.T))[0]
    gain = amplitude * np.linalg.norm(S @ B, 2)
    c = (gain / (beta * kappa_ratio * cert.rho)) ** 2
    return float(max(c, 1.0)) if amplitude > 0 else 1.0


def solve_baseline_lmi(A0, B, Gd, rho, *, seed=0, restarts=5, max_evals=50_000):
    """Solve ``X A0^T + A0 X + Y^T B^T + B Y + rho (X Gd^T + Gd X) = 0`` with ``X > 0``, ``X Gd^T + Gd X > 0``.

    The equality is eliminated exactly (particular solution plus null space,
    with ``trace(X) = n`` fixing the scale); the inequalities are then handled
    by the same max-margin ascent as :func:`solve_gain_lmi`.
    """
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    Gd = np.atleast_2d(np.asarray(Gd, dtype=float))
    if rho <= 0:
        raise InvalidInputError("rho must be positive")
    n, m = B.shape
    iu = np.triu_indices(n)
    nx = len(iu[0])

    def unvec(u):
        X = np.zeros((n, n))
        X[iu] = u[:nx]
        X = X + np.triu(X, 1).T
        Y = u[nx:].reshape(m, n)
        return X, Y

    def eq(X, Y):
        E = X @ A0.T + A0 @ X + Y.T @ B.T + B @ Y + rho * (X @ Gd.T + Gd @ X)
        return E[iu]

    dim = nx + m * n
    cols = []
    for k in range(dim):
        u = np.zeros(dim)
        u[k] = 1.0
        X, Y = unvec(u)
        cols.append(np.concatenate([eq(X, Y), [np.trace(X)]]))
    L = np.array(cols).T
    rhs = np.zeros(L.shape[0])
    rhs[-1] = n
    u_p = np.linalg.lstsq(L, rhs, rcond=None)[0]
    if np.linalg.norm(L @ u_p - rhs) > 1e-8 * (1 + np.linalg.norm(L)):
        raise InfeasibleError("equality constraints are inconsistent", best_margin=-np.inf)
    N = sla.null_space(L)
    tol_eq = 1e-8 * (1 + np.linalg.norm(A0) + np.linalg.norm(B) + rho * np.linalg.norm(Gd))

    def blocks(X):
        return [X @ Gd.T + Gd @ X, X]

    Xp, _ = unvec(u_p)
    base = blocks(Xp)
    if N.shape[1]:
        coeffs = [np.stack([blocks(unvec(N[:, k])[0])[b] for k in range(N.shape[1])]) for b in range(2)]
    else:
        coeffs = [np.zeros((0, n, n)), np.zeros((0, n, n))]
    lmi = AffineLMI(base, coeffs, ("mono", "posdef"))
    rng = np.random.default_rng(seed)
    best = -np.inf
    starts = [np.zeros(N.shape[1])] + [0.1 * rng.normal(size=N.shape[1]) for _ in range(restarts - 1)]
    for v0 in starts:
        if N.shape[1]:
            res = maximize_margin(lmi, v0, target=0.0, max_evals=max_evals)
            v, t = res.point, res.margin
        else:
            v, t = v0, lmi.margin(v0)
        best = max(best, t)
        X, Y = unvec(u_p + N @ v)
        X = 0.5 * (X + X.T)
        resid = np.abs(X @ A0.T + A0 @ X + Y.T @ B.T + B @ Y + rho * (X @ Gd.T + Gd @ X)).max()
        if t > 0 and resid <= tol_eq:
            return X, Y
        if not N.shape[1]:
            break
    raise InfeasibleError(f"baseline LMI infeasible within budget (best margin {best:.3e})", best_margin=best)


# ---------------------------------------------------------------------------
# serialization


def _mat(M):
    return np.asarray(M, dtype=float).tolist()


def certificate_to_dict(plant: PlantModel, hom: HomogenizationResult, cert: GainCertificate) -> dict:
    """JSON-ready document with row-major matrices at full double precision."""
    return {
        "A": _mat(plant.A),
        "B": _mat(plant.B),
        "G0": _mat(hom.G0),
        "K0": _mat(hom.K0),
        "Gd": _mat(hom.Gd),
        "mu": hom.mu,
        "X": _mat(cert.X),
        "Y": _mat(cert.Y),
        "K": _mat(cert.K),
        "P": _mat(cert.P),
        "delta": cert.delta,
        "tau": cert.tau,
        "margins": {
            "mono": cert.margin_mono,
            "posdef": cert.margin_posdef,
            "W": cert.margin_W,
        },
        "rho": cert.rho,
    }


def certificate_from_dict(doc: dict, delta=None, tau=None):
    """Rebuild ``(plant, hom, cert)``; margins and ``rho`` are recomputed, not trusted.

    ``X``/``Y`` may be replaced by ``P``/``K`` alone (``X = P^-1``, ``Y = K X``).
    """
    try:
        plant = PlantModel(np.array(doc["A"], float), np.array(doc["B"], float))
        mu = float(doc.get("mu", -1.0))
        hom = solve_homogenization(plant, mu)
        if "Gd" in doc and np.abs(np.array(doc["Gd"], float) - hom.Gd).max() > 1e-8:
            raise InvalidInputError("stored Gd does not match the homogenization of (A, B)")
        if "X" in doc:
            X = np.array(doc["X"], float)
            Y = np.atleast_2d(np.array(doc["Y"], float))
        else:
            X = np.linalg.inv(np.array(doc["P"], float))
            Y = np.atleast_2d(np.array(doc["K"], float)) @ X
        delta = float(doc["delta"] if delta is None else delta)
        tau = float(doc.get("tau", 1.0 / delta) if tau is None else tau)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidInputError):
            raise
        raise InvalidInputError(f"malformed certificate document: {exc}") from exc
    cert = make_certificate(hom.closed(plant), plant.B, hom.Gd, X, Y, delta, tau)
    return plant, hom, cert


def dumps_certificate(plant, hom, cert) -> str:
    return json.dumps(certificate_to_dict(plant, hom, cert), indent=2, sort_keys=True)
