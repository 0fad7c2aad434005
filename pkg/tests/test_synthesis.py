import json

import numpy as np
import pytest
import scipy.linalg as sla

from homquant import scenarios as examples
from homquant.dilation import Dilation
from homquant.errors import (
    ControllabilityError,
    InfeasibleError,
    InvalidInputError,
    NotCertifiedError,
)
from homquant.synthesis import (
    PlantModel,
    assemble_W,
    certificate_from_dict,
    certificate_to_dict,
    compute_rho,
    controllability_rank,
    homogeneity_residuals,
    make_certificate,
    matched_gain_scale,
    maximize_decay_rate,
    solve_baseline_lmi,
    solve_gain_lmi,
    solve_homogenization,
    verify_lmi,
)

DOUBLE_INTEGRATOR = PlantModel(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]))


# -- homogenization ----------------------------------------------------------


def test_double_integrator_homogenization():
    hom = solve_homogenization(DOUBLE_INTEGRATOR)
    np.testing.assert_allclose(hom.G0, [[-1.0, 0.0], [0.0, 0.0]], atol=1e-12)
    np.testing.assert_allclose(hom.Y0, 0.0, atol=1e-12)
    np.testing.assert_allclose(hom.K0, 0.0, atol=1e-12)
    np.testing.assert_allclose(hom.Gd, [[2.0, 0.0], [0.0, 1.0]], atol=1e-12)


def test_chain_homogenization(chain_plant):
    hom = solve_homogenization(chain_plant)
    np.testing.assert_allclose(hom.G0, [[-2.0, 0.75, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 0.0]], atol=1e-10)
    assert np.linalg.norm(hom.K0) <= 1e-9
    np.testing.assert_allclose(hom.Gd, examples.CHAIN_GD, atol=1e-9)


def test_scalar_homogenization():
    hom = solve_homogenization(PlantModel(np.zeros((1, 1)), np.ones((1, 1))))
    assert hom.G0[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert hom.K0[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert hom.Gd[0, 0] == pytest.approx(1.0)


def test_mu_enters_generator(chain_plant):
    hom = solve_homogenization(chain_plant, mu=-0.5)
    np.testing.assert_allclose(hom.Gd, np.eye(3) - 0.5 * hom.G0, atol=1e-12)


@pytest.mark.parametrize("mu", [0.0, -1.5, 0.3])
def test_mu_out_of_range(chain_plant, mu):
    with pytest.raises(InvalidInputError):
        solve_homogenization(chain_plant, mu)


def test_non_nilpotent_plant_gets_homogenizing_feedback(rng):
    # a controllable companion-form plant with a non-nilpotent A
    A = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-1.0, 2.0, 0.5]])
    B = np.array([[0.0], [0.0], [1.0]])
    plant = PlantModel(A, B)
    hom = solve_homogenization(plant)
    A0 = hom.closed(plant)
    scale = 1 + np.linalg.norm(A0) ** 3
    assert np.linalg.norm(np.linalg.matrix_power(A0, 3)) <= 1e-9 * scale
    assert hom.residual_eq <= 1e-9 * (1 + np.linalg.norm(A))
    assert hom.residual_GB <= 1e-9 * (1 + np.linalg.norm(B))
    assert np.abs(hom.K0).max() > 0.1


def test_uncontrollable_plant_rejected():
    with pytest.raises(ControllabilityError):
        PlantModel(np.zeros((2, 2)), np.array([[1.0], [0.0]]))
    with pytest.raises(ControllabilityError):
        PlantModel(np.zeros((1, 1)), np.zeros((1, 1)))


def test_plant_shape_checks():
    with pytest.raises(InvalidInputError):
        PlantModel(np.zeros((2, 3)), np.ones((2, 1)))
    with pytest.raises(InvalidInputError):
        PlantModel(np.zeros((2, 2)), np.ones((3, 1)))
    with pytest.raises(InvalidInputError):
        PlantModel(np.array([[np.nan, 0.0], [0.0, 0.0]]), np.ones((2, 1)))


def test_controllability_rank(chain_plant):
    assert controllability_rank(chain_plant.A, chain_plant.B) == 3
    assert controllability_rank(np.zeros((2, 2)), np.array([[1.0], [0.0]])) == 1


def test_homogeneity_identities(rng, chain_plant):
    hom = solve_homogenization(chain_plant)
    A0 = hom.closed(chain_plant)
    rA, rB = homogeneity_residuals(A0, chain_plant.B, hom.Gd, rng.uniform(-3, 3, 20))
    assert rA <= 1e-9 and rB <= 1e-9


# -- LMI checks ---------------------------------------------------------------


def test_verify_zero_gain_closed_form():
    mono, posdef, mw = verify_lmi(np.zeros((2, 2)), np.ones((2, 1)), np.eye(2), np.eye(2), np.zeros((1, 2)), 0.5, 2.0)
    assert mono == pytest.approx(2.0)
    assert posdef == pytest.approx(1.0)
    assert mw == pytest.approx(0.5)


def test_verify_rejects_bad_shapes():
    with pytest.raises(InvalidInputError):
        verify_lmi(np.zeros((2, 2)), np.ones((2, 1)), np.eye(2), np.eye(3), np.zeros((1, 2)), 0.5, 2.0)


def test_compute_rho_trivial_cases(rng):
    assert compute_rho(-np.eye(4), np.eye(4)) == pytest.approx(1.0)
    R = rng.normal(size=(4, 4))
    M = R @ R.T + np.eye(4)
    assert compute_rho(-2 * M, M) == pytest.approx(2.0)


def test_compute_rho_needs_negative_W():
    with pytest.raises(NotCertifiedError):
        compute_rho(np.eye(2), np.eye(2))
    with pytest.raises(NotCertifiedError):
        compute_rho(-np.eye(2), -np.eye(2))


def test_compute_rho_is_tight(rng):
    R = rng.normal(size=(4, 4))
    M = R @ R.T + np.eye(4)
    W = -(R.T @ R + 0.5 * np.eye(4))
    rho = compute_rho(W, M)
    assert np.linalg.eigvalsh(W + rho * M)[-1] == pytest.approx(0.0, abs=1e-10)
    assert np.linalg.eigvalsh(W + 0.99 * rho * M)[-1] < 0


def test_published_matrices_pass_with_slack(chain_plant):
    hom = solve_homogenization(chain_plant)
    A0 = hom.closed(chain_plant)
    X = np.linalg.inv(examples.PUBLISHED_P)
    mono, posdef, mw = verify_lmi(A0, chain_plant.B, hom.Gd, X, examples.PUBLISHED_K @ X, 0.4, 2.5)
    W = assemble_W(A0, chain_plant.B, examples.PUBLISHED_P, examples.PUBLISHED_K, 0.4, 2.5)
    assert mono > 0 and posdef > 0
    assert mw <= 1e-2 * np.linalg.norm(W, 2)


def test_scalar_lmi_hand_oracle():
    # X = 1, Y = -k: mono 2, W = [[-2k + d^2 t, -k], [-k, -t]];
    # negative definite iff k^2 - 5k + 1 < 0 at d = 0.4, t = 2.5, i.e. k in (0.209, 4.79)
    A0, B, Gd = np.zeros((1, 1)), np.ones((1, 1)), np.eye(1)
    for k in (0.1, 10.0):
        assert verify_lmi(A0, B, Gd, np.eye(1), -k * np.eye(1), 0.4, 2.5)[2] > 0
    k, d, t = 2.5, 0.4, 2.5
    mono, posdef, mw = verify_lmi(A0, B, Gd, np.eye(1), -k * np.eye(1), d, t)
    expected = np.linalg.eigvalsh(np.array([[-2 * k + d * d * t, -k], [-k, -t]]))[-1]
    assert mono == pytest.approx(2.0)
    assert mw == pytest.approx(expected)
    assert mw < 0


def test_scalar_lmi_solver():
    cert = solve_gain_lmi(np.zeros((1, 1)), np.ones((1, 1)), np.eye(1), 0.4)
    assert cert.certified and cert.rho > 0
    assert cert.K[0, 0] < 0
    assert cert.X[0, 0] == pytest.approx(1.0)


def test_chain_certificate(chain_certificate):
    c = chain_certificate
    assert c.margin_mono >= 1e-6 and c.margin_W <= -1e-6 and c.rho > 0
    assert np.trace(c.X) == pytest.approx(3.0)
    np.testing.assert_allclose(c.K, c.Y @ c.P, atol=1e-12)
    np.testing.assert_allclose(c.P @ c.X, np.eye(3), atol=1e-9)


def test_certificate_defines_monotone_dilation(chain_certificate):
    d = Dilation(chain_certificate.Gd, chain_certificate.P)
    assert d.beta > 0


def test_small_delta_feasible(chain_plant):
    hom = solve_homogenization(chain_plant)
    cert = solve_gain_lmi(hom.closed(chain_plant), chain_plant.B, hom.Gd, 1e-3)
    assert cert.certified


def test_double_integrator_gain(chain_plant):
    hom = solve_homogenization(DOUBLE_INTEGRATOR)
    cert = solve_gain_lmi(hom.closed(DOUBLE_INTEGRATOR), DOUBLE_INTEGRATOR.B, hom.Gd, 0.4)
    assert cert.certified and cert.rho > 0


def test_infeasible_reports_best_margin(chain_plant):
    hom = solve_homogenization(chain_plant)
    with pytest.raises(InfeasibleError) as info:
        solve_gain_lmi(hom.closed(chain_plant), chain_plant.B, hom.Gd, 0.9, restarts=1, max_evals=2000)
    assert np.isfinite(info.value.best_margin)


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.1])
def test_delta_domain(chain_plant, delta):
    hom = solve_homogenization(chain_plant)
    with pytest.raises(InvalidInputError):
        solve_gain_lmi(hom.closed(chain_plant), chain_plant.B, hom.Gd, delta)


@pytest.mark.parametrize("c", [0.1, 10.0])
def test_margin_signs_scale_invariant(chain_plant, chain_certificate, c):
    hom = solve_homogenization(chain_plant)
    A0 = hom.closed(chain_plant)
    cert = chain_certificate
    base = verify_lmi(A0, chain_plant.B, hom.Gd, cert.X, cert.Y, cert.delta, cert.tau)
    scaled = verify_lmi(A0, chain_plant.B, hom.Gd, c * cert.X, c * cert.Y, cert.delta, cert.tau)
    np.testing.assert_allclose(scaled[:2], c * np.array(base[:2]), rtol=1e-9)
    assert scaled[2] == pytest.approx(base[2] / c, rel=1e-9)
    assert np.sign(scaled).tolist() == np.sign(base).tolist()
    r = cert.rescaled(c)
    assert r.rho == pytest.approx(cert.rho, rel=1e-9)
    np.testing.assert_allclose(r.K, cert.K)
    m2 = make_certificate(A0, chain_plant.B, hom.Gd, c * cert.X, c * cert.Y, cert.delta, cert.tau)
    assert m2.rho == pytest.approx(cert.rho, rel=1e-8)


def test_rho_grows_as_delta_shrinks(chain_plant):
    hom = solve_homogenization(chain_plant)
    A0 = hom.closed(chain_plant)
    rhos = [solve_gain_lmi(A0, chain_plant.B, hom.Gd, d, 2.5).rho for d in (0.4, 0.2, 0.1)]
    assert rhos[0] <= rhos[1] <= rhos[2]


@pytest.mark.slow
def test_best_decay_rate_grows_as_delta_shrinks(chain_plant):
    hom = solve_homogenization(chain_plant)
    A0 = hom.closed(chain_plant)
    rhos = [maximize_decay_rate(A0, chain_plant.B, hom.Gd, d, 2.5, fraction=1.0).rho for d in (0.4, 0.2, 0.1)]
    assert rhos[0] <= rhos[1] <= rhos[2]


def test_decay_rate_shift_is_honoured(chain_plant):
    hom = solve_homogenization(chain_plant)
    A0 = hom.closed(chain_plant)
    cert = solve_gain_lmi(A0, chain_plant.B, hom.Gd, 0.4, 2.5, tau_search=False, rate=0.05)
    assert cert.certified and cert.rho > 0.05


def test_matched_gain_scale_meets_condition():
    cert = examples.robust_chain_certificate()
    d = Dilation(cert.Gd, cert.P)
    g = 0.2 * examples.CHAIN_B[:, 0]
    assert np.sqrt(g @ cert.P @ g) <= 0.9 * cert.rho * d.beta * (1 + 1e-9)
    assert cert.certified


def test_matched_gain_scale_trivial_cases(chain_certificate):
    assert matched_gain_scale(chain_certificate, examples.CHAIN_B, 0.0) == 1.0
    with pytest.raises(InvalidInputError):
        matched_gain_scale(chain_certificate, examples.CHAIN_B, 0.1, kappa_ratio=1.5)


# -- baseline ------------------------------------------------------------------


def test_baseline_scalar_closed_form():
    X, Y = solve_baseline_lmi(np.zeros((1, 1)), np.ones((1, 1)), np.eye(1), 1.0)
    assert X[0, 0] == pytest.approx(1.0)
    assert Y[0, 0] == pytest.approx(-1.0)


def test_baseline_double_integrator():
    hom = solve_homogenization(DOUBLE_INTEGRATOR)
    A0, B, Gd = hom.closed(DOUBLE_INTEGRATOR), DOUBLE_INTEGRATOR.B, hom.Gd
    X, Y = solve_baseline_lmi(A0, B, Gd, 1.0)
    E = X @ A0.T + A0 @ X + Y.T @ B.T + B @ Y + (X @ Gd.T + Gd @ X)
    assert np.abs(E).max() <= 1e-8
    assert np.linalg.eigvalsh(X @ Gd.T + Gd @ X)[0] > 0
    assert np.linalg.eigvalsh(X)[0] > 0


def test_baseline_rho_must_be_positive():
    with pytest.raises(InvalidInputError):
        solve_baseline_lmi(np.zeros((1, 1)), np.ones((1, 1)), np.eye(1), 0.0)


# -- serialization ---------------------------------------------------------------


def test_certificate_json_round_trip(chain_plant, chain_certificate):
    hom = solve_homogenization(chain_plant)
    doc = json.loads(json.dumps(certificate_to_dict(chain_plant, hom, chain_certificate)))
    plant2, hom2, cert2 = certificate_from_dict(doc)
    np.testing.assert_array_equal(cert2.X, chain_certificate.X)
    np.testing.assert_array_equal(cert2.K, chain_certificate.K)
    assert cert2.rho == pytest.approx(chain_certificate.rho, rel=1e-12)


def test_certificate_from_weight_and_gain():
    doc = {
        "A": examples.CHAIN_A.tolist(),
        "B": examples.CHAIN_B.tolist(),
        "P": examples.PUBLISHED_P.tolist(),
        "K": examples.PUBLISHED_K.tolist(),
        "delta": 0.4,
        "tau": 2.5,
    }
    _, _, cert = certificate_from_dict(doc)
    assert cert.rho == pytest.approx(examples.published_certificate().rho, rel=1e-12)


def test_certificate_from_dict_rejects_garbage():
    with pytest.raises(InvalidInputError):
        certificate_from_dict({"A": [[0.0]]})
    doc = {"A": [[0.0]], "B": [[1.0]], "Gd": [[2.0]], "X": [[1.0]], "Y": [[-1.0]], "delta": 0.4}
    with pytest.raises(InvalidInputError):
        certificate_from_dict(doc)


def test_rho_matches_pencil_definition(chain_plant, chain_certificate):
    c = chain_certificate
    hom = solve_homogenization(chain_plant)
    W = assemble_W(hom.closed(chain_plant), chain_plant.B, c.P, c.K, c.delta, c.tau)
    M = sla.block_diag(c.Gd.T @ c.P + c.P @ c.Gd, c.P)
    assert np.linalg.eigvalsh(W + c.rho * M)[-1] == pytest.approx(0.0, abs=1e-9 * np.abs(W).max())
