"""Reference data and ready-made configurations.

``chain_*`` is the 3-state nilpotent plant with a single input that serves
as the running example: ``A`` has a strictly upper-triangular structure and
the input enters the last state only.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .dilation import Dilation
from .quantizer import SphericalQuantizer
from .simulator import PerturbationSpec, SimulationConfig
from .synthesis import (
    GainCertificate,
    PlantModel,
    make_certificate,
    matched_gain_scale,
    maximize_decay_rate,
    solve_gain_lmi,
    solve_homogenization,
)

CHAIN_A = np.array([[0.0, 2.0, 3.0], [0.0, 0.0, 4.0], [0.0, 0.0, 0.0]])
CHAIN_B = np.array([[0.0], [0.0], [1.5]])
CHAIN_GD = np.array([[3.0, -0.75, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]])
CHAIN_X0 = np.array([2.0, 1.0, 1.0])
CHAIN_DELTA = 0.4
CHAIN_TAU = 2.5
CHAIN_PERTURBATION = PerturbationSpec("matched-sinusoid", amplitude=0.2)
# published weight and gain (4 decimals)
PUBLISHED_P = np.array([[0.0053, 0.0037, 0.0185], [0.0037, 0.0212, 0.0381], [0.0185, 0.0381, 0.2522]])
PUBLISHED_K = -np.array([[0.1327, 0.4089, 1.7270]])


def chain_plant() -> PlantModel:
    return PlantModel(CHAIN_A, CHAIN_B)


def published_dilation() -> Dilation:
    return Dilation(CHAIN_GD, PUBLISHED_P)


@lru_cache(maxsize=None)
def _chain_cert(delta, tau, seed):
    plant = chain_plant()
    hom = solve_homogenization(plant)
    return solve_gain_lmi(hom.closed(plant), plant.B, hom.Gd, delta, tau, seed=seed)


def synthesize_chain_certificate(delta=CHAIN_DELTA, tau=CHAIN_TAU, seed=0) -> GainCertificate:
    return _chain_cert(float(delta), None if tau is None else float(tau), int(seed))


@lru_cache(maxsize=None)
def _robust_cert(delta, tau, amplitude, seed):
    plant = chain_plant()
    hom = solve_homogenization(plant)
    cert = maximize_decay_rate(hom.closed(plant), plant.B, hom.Gd, delta, tau, seed=seed)
    return cert.rescaled(matched_gain_scale(cert, plant.B, amplitude))


def robust_chain_certificate(delta=CHAIN_DELTA, tau=CHAIN_TAU, amplitude=None, seed=0) -> GainCertificate:
    """Near-max decay-rate certificate, rescaled so the matched disturbance stays below ``0.9 rho``.

    This is the default certificate for the closed-loop runs: the plain
    max-margin solution at ``trace(X) = n`` leaves too little control
    authority against a disturbance of amplitude 0.2.
    """
    amp = CHAIN_PERTURBATION.amplitude if amplitude is None else float(amplitude)
    return _robust_cert(float(delta), float(tau), amp, int(seed))


def published_certificate(delta=CHAIN_DELTA, tau=CHAIN_TAU) -> GainCertificate:
    """Certificate rebuilt from the printed ``P`` and ``K`` (``X = P^-1``, ``Y = K X``)."""
    plant = chain_plant()
    hom = solve_homogenization(plant)
    X = np.linalg.inv(PUBLISHED_P)
    return make_certificate(hom.closed(plant), plant.B, hom.Gd, X, PUBLISHED_K @ X, delta, tau)


def chain_config(certificate=None, *, budget=512, floor_mode=True, x0=CHAIN_X0,
                 perturbation=CHAIN_PERTURBATION, **kwargs) -> SimulationConfig:
    plant = chain_plant()
    hom = solve_homogenization(plant)
    cert = certificate if certificate is not None else robust_chain_certificate()
    q = SphericalQuantizer.from_budget(plant.n, budget, cert.P, floor_mode)
    return SimulationConfig(plant, hom, cert, q, np.asarray(x0, float), perturbation=perturbation, **kwargs)


def scalar_config(**kwargs) -> SimulationConfig:
    """``dx/dt = u``, ``u = -q(x)`` with the two-point quantizer: ``dx/dt = -sign(x)``."""
    plant = PlantModel(np.zeros((1, 1)), np.ones((1, 1)))
    hom = solve_homogenization(plant)
    cert = make_certificate(hom.closed(plant), plant.B, hom.Gd, np.eye(1), -np.eye(1), 0.4, 2.5)
    q = SphericalQuantizer.from_budget(1, 2, cert.P)
    kwargs.setdefault("x0", np.array([1.0]))
    return SimulationConfig(plant, hom, cert, q, **kwargs)
