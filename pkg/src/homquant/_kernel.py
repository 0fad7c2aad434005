"""Compiled fixed-step RK4 loop for the quantized (or baseline) closed loop.

Everything here mirrors the numpy code in ``dilation`` and ``quantizer`` but
works on one state at a time without allocation.  The implicit norm equation
``ln ||d(-s) x||_P^2 = 0`` is solved by safeguarded Newton: the slope of the
left side lies in ``[-2 eta, -2 beta]``, which gives an exact bracket around
any starting guess.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

MODE_QUANTIZED = 0
MODE_BASELINE = 1

PERT_NONE = 0
PERT_MATCHED_SINE = 1
PERT_TABLE = 2

STATUS_OK = 0
STATUS_DIVERGED = 1


@njit(cache=True)
def _expm_small(M, out):
    n = M.shape[0]
    nrm = 0.0
    for j in range(n):
        col = 0.0
        for i in range(n):
            col += abs(M[i, j])
        nrm = max(nrm, col)
    k = 0
    while nrm > 0.5:
        nrm *= 0.5
        k += 1
    scale = 0.5**k
    term = np.eye(n)
    for i in range(n):
        for j in range(n):
            out[i, j] = 1.0 if i == j else 0.0
    tmp = np.empty((n, n))
    for p in range(1, 20):
        for i in range(n):
            for j in range(n):
                acc = 0.0
                for l in range(n):
                    acc += term[i, l] * M[l, j]
                tmp[i, j] = acc * scale / p
        for i in range(n):
            for j in range(n):
                term[i, j] = tmp[i, j]
                out[i, j] += tmp[i, j]
    for _ in range(k):
        for i in range(n):
            for j in range(n):
                acc = 0.0
                for l in range(n):
                    acc += out[i, l] * out[l, j]
                tmp[i, j] = acc
        for i in range(n):
            for j in range(n):
                out[i, j] = tmp[i, j]


@njit(cache=True)
def _flow(s, x, y, use_eig, lam, V, G, work, z):
    """z = d(-s) x; ``y = V^-1 x`` must be precomputed when ``use_eig``."""
    n = x.shape[0]
    if use_eig:
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += (V[i, j] * np.exp(-s * lam[j]) * y[j]).real
            z[i] = acc
    else:
        M = -s * G
        _expm_small(M, work)
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += work[i, j] * x[j]
            z[i] = acc


@njit(cache=True)
def _quad(P, a, b):
    n = a.shape[0]
    acc = 0.0
    for i in range(n):
        for j in range(n):
            acc += a[i] * P[i, j] * b[j]
    return acc


@njit(cache=True)
def _log_norm(x, s_guess, zero_tol, use_eig, lam, V, Vinv, G, P, PG, beta, eta, y, work, z):
    """Return ``ln ||x||_d`` (``-inf`` at the origin); leaves ``z = d(-s) x``."""
    n = x.shape[0]
    q0 = _quad(P, x, x)
    if not q0 > zero_tol * zero_tol:
        for i in range(n):
            z[i] = 0.0
        return -np.inf
    if use_eig:
        for i in range(n):
            acc = 0j
            for j in range(n):
                acc += Vinv[i, j] * x[j]
            y[i] = acc
    s = s_guess
    if not math.isfinite(s):
        s = 0.5 * math.log(q0)
    _flow(s, x, y, use_eig, lam, V, G, work, z)
    phi = math.log(_quad(P, z, z))
    if phi == 0.0:
        return s
    if phi > 0.0:
        lo = s + phi / (2.0 * eta)
        hi = s + phi / (2.0 * beta)
    else:
        lo = s + phi / (2.0 * beta)
        hi = s + phi / (2.0 * eta)
    for _ in range(200):
        dphi = -2.0 * _quad(PG, z, z) / _quad(P, z, z)
        s_new = s - phi / dphi
        if not (lo < s_new < hi):
            s_new = 0.5 * (lo + hi)
        s = s_new
        _flow(s, x, y, use_eig, lam, V, G, work, z)
        phi = math.log(_quad(P, z, z))
        if phi > 0.0:
            lo = s
        else:
            hi = s
        if abs(phi) <= 1e-15 or hi - lo <= 4e-16 * max(1.0, abs(s)):
            break
    return s


@njit(cache=True)
def _seed_index(z, n, Psqrt, delta_step, radices, w, phi):
    if n == 1:
        return 0 if z[0] >= 0.0 else 1
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += Psqrt[i, j] * z[j]
        w[i] = acc
    for i in range(n - 2):
        tail = 0.0
        for j in range(i + 1, n):
            tail += w[j] * w[j]
        phi[i] = math.atan2(math.sqrt(tail), w[i])
    az = math.atan2(w[n - 1], w[n - 2])
    if az < 0.0:
        az += TWO_PI
    if az >= TWO_PI:
        az -= TWO_PI
    phi[n - 2] = az
    idx = 0
    for i in range(n - 1):
        b = int(math.floor(phi[i] / delta_step))
        if b < 0:
            b = 0
        if b > radices[i] - 1:
            b = radices[i] - 1
        idx = idx * radices[i] + b
    return idx


@njit(cache=True)
def simulate(
    A, B, mode, Kq, K0, Kb, mu,
    G, P, PG, Psqrt, use_eig, lam, V, Vinv, beta, eta, zero_tol,
    delta_step, radices, seeds,
    pert_kind, pert_amp, pert_freq, pert_dir, table_t, table_g,
    x0, h, nsteps, hold_steps, eps_dead, record_every, diverge_at,
    out_t, out_x, out_u, out_idx, out_lognorm, out_margin,
):
    """Integrate and record every ``record_every``-th sample.

    Returns ``(status, samples_written, time_of_failure)``.
    """
    n = A.shape[0]
    m = B.shape[1]
    y = np.empty(n, dtype=np.complex128)
    work = np.empty((n, n))
    z = np.empty(n)
    w = np.empty(n)
    phi = np.empty(max(n - 1, 1))
    x = x0.copy()
    u = np.zeros(m)
    held_u = np.zeros(m)
    held_idx = -1
    g = np.zeros(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    xs = np.empty(n)
    log_eps = math.log(eps_dead) if eps_dead > 0.0 else -np.inf
    s_guess = np.inf
    rec = 0

    for step in range(nsteps + 1):
        t = step * h
        # --- control at the step start (needed for the record and for holding)
        s = _log_norm(x, s_guess, zero_tol, use_eig, lam, V, Vinv, G, P, PG, beta, eta, y, work, z)
        if math.isfinite(s):
            s_guess = s
        idx = _control(x, s, log_eps, mode, Kq, K0, Kb, mu, n, m, Psqrt, delta_step, radices, seeds, z, w, phi, u)
        if hold_steps > 0 and step % hold_steps == 0:
            held_idx = idx
            for i in range(m):
                held_u[i] = u[i]

        if step % record_every == 0:
            out_t[rec] = t
            for i in range(n):
                out_x[rec, i] = x[i]
            for i in range(m):
                out_u[rec, i] = held_u[i] if hold_steps > 0 else u[i]
            out_idx[rec] = held_idx if hold_steps > 0 else idx
            out_lognorm[rec] = s
            out_margin[rec] = _pert_margin(
                t, x, s, log_eps, pert_kind, pert_amp, pert_freq, pert_dir, table_t, table_g, B,
                use_eig, lam, V, Vinv, G, P, PG, g, y, work, z, w,
            )
            rec += 1
        if step == nsteps:
            break

        nrm = 0.0
        for i in range(n):
            nrm += x[i] * x[i]
        if not (math.sqrt(nrm) <= diverge_at):
            return STATUS_DIVERGED, rec, t

        # --- RK4 with per-stage control (or frozen control in hold mode)
        for stage in range(4):
            if stage == 0:
                ts = t
                for i in range(n):
                    xs[i] = x[i]
            elif stage == 1:
                ts = t + 0.5 * h
                for i in range(n):
                    xs[i] = x[i] + 0.5 * h * k1[i]
            elif stage == 2:
                ts = t + 0.5 * h
                for i in range(n):
                    xs[i] = x[i] + 0.5 * h * k2[i]
            else:
                ts = t + h
                for i in range(n):
                    xs[i] = x[i] + h * k3[i]
            if hold_steps > 0:
                for i in range(m):
                    u[i] = held_u[i]
            elif stage > 0:
                ss = _log_norm(xs, s_guess, zero_tol, use_eig, lam, V, Vinv, G, P, PG, beta, eta, y, work, z)
                _control(xs, ss, log_eps, mode, Kq, K0, Kb, mu, n, m, Psqrt, delta_step, radices, seeds, z, w, phi, u)
            _perturbation(ts, pert_kind, pert_amp, pert_freq, pert_dir, table_t, table_g, B, g)
            if stage == 0:
                kk = k1
            elif stage == 1:
                kk = k2
            elif stage == 2:
                kk = k3
            else:
                kk = k4
            for i in range(n):
                acc = g[i]
                for j in range(n):
                    acc += A[i, j] * xs[j]
                for j in range(m):
                    acc += B[i, j] * u[j]
                kk[i] = acc
        for i in range(n):
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return STATUS_OK, rec, nsteps * h


@njit(cache=True)
def _control(x, s, log_eps, mode, Kq, K0, Kb, mu, n, m, Psqrt, delta_step, radices, seeds, z, w, phi, u):
    """Fill ``u``; returns the seed index (-1 inside the deadband / for the baseline)."""
    inside = not (s >= log_eps)
    if mode == 0:
        if inside:
            for i in range(m):
                u[i] = 0.0
            return -1
        idx = _seed_index(z, n, Psqrt, delta_step, radices, w, phi)
        for i in range(m):
            acc = 0.0
            for j in range(n):
                acc += Kq[i, j] * seeds[idx, j]
            u[i] = acc
        return idx
    for i in range(m):
        acc = 0.0
        for j in range(n):
            acc += K0[i, j] * x[j]
        u[i] = acc
    if not inside:
        gain = math.exp((1.0 + mu) * s)
        for i in range(m):
            acc = 0.0
            for j in range(n):
                acc += Kb[i, j] * z[j]
            u[i] += gain * acc
    return -1


@njit(cache=True)
def _perturbation(t, kind, amp, freq, direction, table_t, table_g, B, g):
    n = B.shape[0]
    m = B.shape[1]
    for i in range(n):
        g[i] = 0.0
    if kind == 1:
        a = amp * math.sin(freq * t)
        for i in range(n):
            acc = 0.0
            for j in range(m):
                acc += B[i, j] * direction[j]
            g[i] = a * acc
    elif kind == 2:
        for i in range(n):
            g[i] = np.interp(t, table_t, table_g[:, i])


@njit(cache=True)
def _pert_margin(t, x, s, log_eps, kind, amp, freq, direction, table_t, table_g, B,
                 use_eig, lam, V, Vinv, G, P, PG, g, y, work, z, w):
    if kind == 0:
        return 0.0
    if not (s >= log_eps):
        return np.nan
    n = x.shape[0]
    _perturbation(t, kind, amp, freq, direction, table_t, table_g, B, g)
    # z currently holds d(-s) x from the record-time norm solve; w <- d(-s) g
    if use_eig:
        for i in range(n):
            acc = 0j
            for j in range(n):
                acc += Vinv[i, j] * g[j]
            y[i] = acc
    _flow(s, g, y, use_eig, lam, V, G, work, w)
    num = _quad(P, z, w)
    den = _quad(PG, z, z)
    return math.exp(s) * num / den
