"""Fixed-step simulation of the quantized homogeneous closed loop.

The plant ``dx/dt = A x + B u + g(t, x)`` is driven by ``u = K q(x)`` where
``q`` is the homogeneous spherical quantizer.  The right-hand side is
discontinuous across quantization cells; solutions are approximated with
classical RK4 at a small fixed step, re-quantizing at every stage (or
holding the control over a sampling period).  The integration loop is
compiled (see ``_kernel``); :func:`closed_loop_rhs` is the plain numpy
reference for the same vector field.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .dilation import Dilation, canonical_norm
from .errors import (
    ConfigurationError,
    DivergenceError,
    InsufficientDataError,
    InvalidInputError,
    UndefinedAtOriginError,
)
from .quantizer import SphericalQuantizer, quantize
from .synthesis import GainCertificate, HomogenizationResult, PlantModel

__all__ = [
    "PerturbationSpec",
    "BaselineGain",
    "SimulationConfig",
    "Trajectory",
    "closed_loop_rhs",
    "integrate",
    "lyapunov_report",
    "perturbation_margin",
    "settling_time",
    "lyapunov_rate",
]

PERTURBATION_KINDS = ("none", "matched-sinusoid", "matched-custom-amplitude", "mismatched-table")
DIVERGE_AT = 1e9


@dataclass(frozen=True)
class PerturbationSpec:
    """Additive disturbance ``g(t, x)``.

    ``matched-sinusoid``: ``g = B * amplitude * sin(frequency t) * direction``.
    ``matched-custom-amplitude``: the same shape with the amplitude sized so
    that ``||B gamma||_P = beta * kappa_budget``.
    ``mismatched-table``: ``g(t)`` linearly interpolated from ``table_t``/``table_g``.
    """

    kind: str = "none"
    amplitude: float = 0.0
    kappa_budget: float | None = None
    beta: float | None = None
    frequency: float = 1.0
    direction: tuple | None = None
    table_t: tuple | None = None
    table_g: tuple | None = None

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise InvalidInputError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "matched-custom-amplitude" and self.kappa_budget is None:
            raise InvalidInputError("matched-custom-amplitude needs kappa_budget")
        if self.kind == "mismatched-table" and (self.table_t is None or self.table_g is None):
            raise InvalidInputError("mismatched-table needs table_t and table_g")

    @property
    def matched(self) -> bool:
        return self.kind in ("matched-sinusoid", "matched-custom-amplitude")

    def resolved(self, B, P, beta):
        """Return ``(kind_code, amplitude, direction, table_t, table_g)`` for the kernel."""
        n, m = B.shape
        direction = np.ones(m) if self.direction is None else np.asarray(self.direction, float)
        tt = np.zeros(1)
        tg = np.zeros((1, n))
        if self.kind == "none":
            return _kernel.PERT_NONE, 0.0, direction, tt, tg
        if self.kind == "mismatched-table":
            tt = np.asarray(self.table_t, float)
            tg = np.atleast_2d(np.asarray(self.table_g, float))
            if tg.shape != (len(tt), n) or np.any(np.diff(tt) <= 0):
                raise ConfigurationError("perturbation table must be (len(t), n) with increasing t")
            return _kernel.PERT_TABLE, 0.0, direction, tt, tg
        amp = self.amplitude
        if self.kind == "matched-custom-amplitude":
            b = self.beta if self.beta is not None else beta
            Bd = B @ direction
            amp = b * self.kappa_budget / math.sqrt(Bd @ P @ Bd)
        return _kernel.PERT_MATCHED_SINE, float(amp), direction, tt, tg

    def value(self, t, B, P=None, beta=None):
        code, amp, direction, tt, tg = self.resolved(B, np.eye(B.shape[0]) if P is None else P, beta or 1.0)
        if code == _kernel.PERT_NONE:
            return np.zeros(B.shape[0])
        if code == _kernel.PERT_TABLE:
            return np.array([np.interp(t, tt, tg[:, i]) for i in range(B.shape[0])])
        return amp * math.sin(self.frequency * t) * (B @ direction)


@dataclass(frozen=True, eq=False)
class BaselineGain:
    """Unquantized homogeneous feedback ``u = K0 x + ||x||_d^(1+mu) K d(-ln||x||_d) x``."""

    K0: np.ndarray
    K: np.ndarray
    P: np.ndarray
    mu: float = -1.0


@dataclass(frozen=True, eq=False)
class SimulationConfig:
    plant: PlantModel
    homogenization: HomogenizationResult
    certificate: GainCertificate
    quantizer: SphericalQuantizer | None
    x0: np.ndarray
    t_end: float = 20.0
    h: float = 1e-4
    eps_dead: float | None = None
    settle_threshold: float = 0.02
    dwell: float = 0.5
    sample_period: float | None = None
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    baseline: BaselineGain | None = None
    record_every: int = 1

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (self.plant.n,) or not np.all(np.isfinite(x0)):
            raise ConfigurationError("x0 must be a finite vector of the plant dimension")
        object.__setattr__(self, "x0", x0)
        if not self.h > 0 or not self.t_end > 0:
            raise ConfigurationError("h and t_end must be positive")
        if self.record_every < 1:
            raise ConfigurationError("record_every must be >= 1")
        if self.baseline is None:
            if self.quantizer is None:
                raise ConfigurationError("a quantizer is required for the quantized loop")
            P = self.certificate.P
            if self.quantizer.dim != self.plant.n or np.abs(self.quantizer.weight - P).max() > 1e-9 * max(
                1.0, np.abs(P).max()
            ):
                raise ConfigurationError("certificate and quantizer use different weights P")
        if self.eps_dead is not None and self.eps_dead < self.dilation.zero_tol:
            raise ConfigurationError("eps_dead must not be below the zero threshold")

    @property
    def dilation(self) -> Dilation:
        d = self.__dict__.get("_dilation")
        if d is None:
            P = self.baseline.P if self.baseline is not None else self.certificate.P
            d = Dilation(self.homogenization.Gd, P)
            object.__setattr__(self, "_dilation", d)
        return d

    @property
    def deadband(self) -> float:
        """Origin deadband on ``||x||_d`` (default ``1e-6 ||x0||_d``)."""
        if self.eps_dead is not None:
            return self.eps_dead
        x0n = canonical_norm(self.dilation, self.x0).value
        return max(1e-6 * x0n, self.dilation.zero_tol)

    def control(self, x) -> np.ndarray:
        """Control value at state ``x`` (numpy path)."""
        d = self.dilation
        nv = canonical_norm(d, x)
        inside = nv.value < self.deadband
        if self.baseline is not None:
            u = self.baseline.K0 @ x
            if not inside:
                z = d.matrix(-nv.log_value) @ x
                u = u + nv.value ** (1 + self.baseline.mu) * (self.baseline.K @ z)
            return u
        if inside:
            return np.zeros(self.plant.m)
        return self.certificate.K @ quantize(self.quantizer, d, x).seed


def closed_loop_rhs(cfg: SimulationConfig, t: float, x) -> np.ndarray:
    """``A x + B u(x) + g(t, x)`` evaluated with the library routines."""
    x = np.asarray(x, dtype=float)
    d = cfg.dilation
    g = cfg.perturbation.value(t, cfg.plant.B, d.weight, d.beta)
    return cfg.plant.A @ x + cfg.plant.B @ cfg.control(x) + g


def perturbation_margin(cfg: SimulationConfig, t: float, x) -> float:
    """``||x||_d * <d(-s)x, P d(-s) g> / <d(-s)x, P Gd d(-s)x>`` with ``s = ln||x||_d``."""
    x = np.asarray(x, dtype=float)
    d = cfg.dilation
    nv = canonical_norm(d, x)
    if nv.value < cfg.deadband or nv.value == 0.0:
        raise UndefinedAtOriginError("perturbation margin is undefined inside the deadband")
    g = cfg.perturbation.value(t, cfg.plant.B, d.weight, d.beta)
    D = d.matrix(-nv.log_value)
    z = D @ x
    return float(nv.value * (z @ d.weight @ (D @ g)) / (z @ d.weight @ d.generator @ z))


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    seed_indices: np.ndarray
    hom_norm: np.ndarray
    lyap_rate: np.ndarray
    perturbation_margin: np.ndarray
    settling_time: float | None
    budget_ok: bool | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def header(self) -> list:
        n = self.states.shape[1]
        m = self.controls.shape[1]
        return ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)] + [
            "seed_index",
            "hom_norm",
            "lyap_rate",
        ]

    def to_csv(self, fh, decimation: int = 1, comment: str | None = None):
        """Write ``t,x1..xn,u1..um,seed_index,hom_norm,lyap_rate`` rows."""
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.header())
        for k in range(0, len(self.times), max(1, decimation)):
            row = [repr(float(self.times[k]))]
            row += [repr(float(v)) for v in self.states[k]]
            row += [repr(float(v)) for v in self.controls[k]]
            row += [int(self.seed_indices[k]), repr(float(self.hom_norm[k])), repr(float(self.lyap_rate[k]))]
            w.writerow(row)

    def csv_text(self, decimation: int = 1) -> str:
        buf = io.StringIO()
        self.to_csv(buf, decimation)
        return buf.getvalue()


def lyapunov_rate(hom_norm, dt) -> np.ndarray:
    """Five-point centered derivative, second-order one-sided at the ends."""
    f = np.asarray(hom_norm, dtype=float)
    r = np.full(f.shape, np.nan)
    if len(f) >= 5:
        r[2:-2] = (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / (12 * dt)
    if len(f) >= 3:
        r[:2] = np.gradient(f[:3], dt)[:2]
        r[-2:] = np.gradient(f[-3:], dt)[-2:]
    return r


def settling_time(times, hom_norm, threshold: float, dwell: float):
    """Start of the trailing window where ``hom_norm <= threshold`` (``None`` if shorter than ``dwell``)."""
    above = np.nonzero(hom_norm > threshold)[0]
    if above.size == 0:
        return float(times[0])
    k = above[-1] + 1
    if k >= len(times) or times[-1] - times[k] < dwell - 1e-12:
        return None
    return float(times[k])


def integrate(cfg: SimulationConfig) -> Trajectory:
    """Fixed-step RK4 integration of the closed loop.

    Raises
    ------
    DivergenceError
        The state norm exceeded ``1e9``.
    """
    plant = cfg.plant
    d = cfg.dilation
    n, m = plant.n, plant.m
    nsteps = int(round(cfg.t_end / cfg.h))
    hold = 0
    if cfg.sample_period is not None:
        hold = max(1, int(round(cfg.sample_period / cfg.h)))
    nrec = nsteps // cfg.record_every + 1

    if d._eig is not None:
        lam, V, Vinv = (np.asarray(a, np.complex128) for a in d._eig)
        use_eig = True
    else:
        lam = np.zeros(n, np.complex128)
        V = Vinv = np.zeros((n, n), np.complex128)
        use_eig = False

    if cfg.baseline is None:
        mode = _kernel.MODE_QUANTIZED
        q = cfg.quantizer
        seeds = np.ascontiguousarray(q.seeds)
        radices = np.array(q.radices, dtype=np.int64)
        step = q.delta_step
        Kq = cfg.certificate.K
        K0 = np.zeros((m, n))
        Kb = np.zeros((m, n))
        mu = -1.0
    else:
        mode = _kernel.MODE_BASELINE
        seeds = np.zeros((1, n))
        radices = np.ones(max(n - 1, 1), dtype=np.int64)
        step = math.pi
        Kq = np.zeros((m, n))
        K0 = cfg.baseline.K0
        Kb = cfg.baseline.K
        mu = cfg.baseline.mu

    kind, amp, direction, tt, tg = cfg.perturbation.resolved(plant.B, d.weight, d.beta)
    P = np.ascontiguousarray(d.weight)
    out_t = np.empty(nrec)
    out_x = np.empty((nrec, n))
    out_u = np.empty((nrec, m))
    out_idx = np.empty(nrec, dtype=np.int64)
    out_log = np.empty(nrec)
    out_margin = np.empty(nrec)
    status, rec, t_fail = _kernel.simulate(
        np.ascontiguousarray(plant.A), np.ascontiguousarray(plant.B), mode,
        np.ascontiguousarray(Kq, float), np.ascontiguousarray(K0, float), np.ascontiguousarray(Kb, float), float(mu),
        np.ascontiguousarray(d.generator), P, np.ascontiguousarray(P @ d.generator), np.ascontiguousarray(d.weight_sqrt),
        use_eig, lam, np.ascontiguousarray(V), np.ascontiguousarray(Vinv), d.beta, d.eta, d.zero_tol,
        float(step), radices, seeds,
        kind, amp, float(cfg.perturbation.frequency), np.asarray(direction, float), tt, np.ascontiguousarray(tg),
        cfg.x0, float(cfg.h), nsteps, hold, float(cfg.deadband), cfg.record_every, DIVERGE_AT,
        out_t, out_x, out_u, out_idx, out_log, out_margin,
    )
    if status == _kernel.STATUS_DIVERGED:
        raise DivergenceError(f"state norm exceeded {DIVERGE_AT:g} at t={t_fail:.4f}", time=t_fail)

    hom = np.where(np.isfinite(out_log), np.exp(out_log), 0.0)
    dt = cfg.h * cfg.record_every
    rate = lyapunov_rate(hom, dt)
    x0n = hom[0]
    T = settling_time(out_t, hom, cfg.settle_threshold * x0n, cfg.dwell)
    budget_ok = None
    if cfg.perturbation.matched and cfg.perturbation.kappa_budget is not None:
        Bd = plant.B @ direction
        peak = abs(amp) * math.sqrt(Bd @ P @ Bd)
        beta = cfg.perturbation.beta if cfg.perturbation.beta is not None else d.beta
        budget_ok = bool(peak <= beta * cfg.perturbation.kappa_budget * (1 + 1e-12))
    return Trajectory(
        out_t, out_x, out_u, out_idx, hom, rate, out_margin, T, budget_ok,
        meta={"h": cfg.h, "record_dt": dt, "deadband": cfg.deadband, "x0_norm": float(x0n)},
    )


def lyapunov_report(traj: Trajectory, rho: float, kappa: float = 0.0, *, tol: float = 1e-6,
                    band: float = 0.02, bound: float | None = None):
    """Median decay rate of ``||x||_d`` and the fraction of samples slower than certified.

    Only samples with ``||x||_d`` above ``band * ||x0||_d`` whose whole
    five-point stencil stays above the band are evaluated.  A sample violates
    the certificate when its rate exceeds ``bound`` (default ``-(rho - kappa)``)
    by more than ``tol``.

    Returns
    -------
    median_rate, violation_fraction : float
    """
    hom = np.asarray(traj.hom_norm)
    if len(hom) < 5:
        raise InsufficientDataError("need at least five samples")
    level = band * hom[0]
    ok = hom > level
    # stencil k-2..k+2 must lie outside the band
    keep = np.zeros_like(ok)
    keep[2:-2] = ok[:-4] & ok[1:-3] & ok[2:-2] & ok[3:-1] & ok[4:]
    keep &= np.isfinite(traj.lyap_rate)
    if keep.sum() == 0:
        raise InsufficientDataError("no samples outside the chattering band")
    rates = traj.lyap_rate[keep]
    limit = -(rho - kappa) if bound is None else bound
    return float(np.median(rates)), float(np.mean(rates > limit + tol))


def summary(traj: Trajectory, rho: float | None = None) -> dict:
    out = {
        "settling_time": traj.settling_time,
        "final_norm": float(np.linalg.norm(traj.states[-1])),
        "max_perturbation_margin": float(np.nanmax(traj.perturbation_margin)) if np.any(
            np.isfinite(traj.perturbation_margin)) else None,
        "budget_ok": traj.budget_ok,
        "samples": len(traj),
    }
    if rho is not None and np.isfinite(rho):
        try:
            med, frac = lyapunov_report(traj, rho)
            out["median_rate"] = med
            out["violation_fraction"] = frac
        except InsufficientDataError:
            out["median_rate"] = None
            out["violation_fraction"] = None
    return out
