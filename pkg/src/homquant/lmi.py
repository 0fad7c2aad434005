"""Max-margin feasibility for small block-diagonal linear matrix inequalities.

The constraint is ``F(v) = F0 + sum_k v_k F_k`` with every block symmetric;
we search for ``v`` maximizing ``t = lambda_min(F(v))`` over all blocks.
``lambda_min`` is replaced by the entropic soft-min

    f_mu(v) = -mu * log(sum_i exp(-lambda_i / mu)),

a smooth lower bound within ``mu * log(dim)`` of the true margin whose
gradient is ``sum_i w_i v_i^T F_k v_i`` with softmax weights ``w``.  Ascent
runs with quasi-Newton steps while ``mu`` is shrunk geometrically; the
returned margin is always the exact eigenvalue, never the smoothed one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

__all__ = ["AffineLMI", "MarginResult", "maximize_margin"]


@dataclass
class AffineLMI:
    """Block-diagonal affine symmetric matrix function.

    ``base[b]`` is the constant part of block ``b`` and ``coeffs[b]`` has
    shape ``(p, nb, nb)``: the coefficient of each decision variable.
    """

    base: list
    coeffs: list
    names: tuple = ()

    @property
    def nvars(self) -> int:
        return self.coeffs[0].shape[0]

    def blocks(self, v):
        return [F0 + np.tensordot(v, Fk, axes=1) for F0, Fk in zip(self.base, self.coeffs)]

    def block_margins(self, v):
        return np.array([np.linalg.eigvalsh(0.5 * (M + M.T))[0] for M in self.blocks(v)])

    def margin(self, v) -> float:
        return float(self.block_margins(v).min())

    def _softmin(self, v, mu):
        lam_all = []
        grads = []
        for M, Fk in zip(self.blocks(v), self.coeffs):
            lam, V = np.linalg.eigh(0.5 * (M + M.T))
            lam_all.append(lam)
            # d lambda_i / d v_k = V_i^T F_k V_i
            grads.append(np.einsum("ai,kab,bi->ik", V, Fk, V))
        lam = np.concatenate(lam_all)
        J = np.concatenate(grads, axis=0)
        lo = lam.min()
        e = np.exp(-(lam - lo) / mu)
        Z = e.sum()
        f = lo - mu * np.log(Z)
        w = e / Z
        return f, w @ J


@dataclass
class MarginResult:
    point: np.ndarray
    margin: float
    evaluations: int
    restart: int


def maximize_margin(lmi: AffineLMI, v0, *, target=0.0, max_evals=50_000, mu_final=1e-9, tol=1e-12):
    """Ascend from ``v0`` on the smoothed margin until it stalls or the budget runs out.

    Stops early once the exact margin exceeds ``target`` and the smoothing
    parameter is already small relative to the margin.
    """
    v = np.asarray(v0, dtype=float).copy()
    lam0 = np.concatenate([np.linalg.eigvalsh(M) for M in lmi.blocks(v)])
    scale = max(1.0, float(np.abs(lam0).max()))
    mu = 0.1 * scale
    used = 0
    best_v, best_t = v.copy(), lmi.margin(v)
    while used < max_evals:
        res = minimize(
            lambda z: tuple(-a for a in lmi._softmin(z, mu)),
            v,
            jac=True,
            method="L-BFGS-B",
            options={"maxfun": min(2000, max_evals - used), "ftol": tol, "gtol": 1e-12 * scale},
        )
        used += res.nfev
        v = res.x
        t = lmi.margin(v)
        if t > best_t:
            best_v, best_t = v.copy(), t
        if mu <= mu_final * scale:
            break
        if best_t > target and mu < 1e-3 * abs(best_t):
            break
        mu *= 0.1
    return MarginResult(best_v, best_t, used, 0)
