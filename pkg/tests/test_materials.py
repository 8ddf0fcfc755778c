import warnings

import numpy as np
import pytest

from minhelm.materials import (CoercivityWarning, MaterialField, NonDissipativeError,
                               L_eigenvalues_diagonal, check_coercivity, default_samples,
                               dissipation_at, dissipation_tensors, l_block, lambda_spread,
                               rescale, suggest_rescale, z_entries)

PTS = default_samples(5)


def test_identity_case():
    m = MaterialField.constant(1j, -1j, 1.0)
    d = dissipation_at(m, (0.3, 0.4))
    np.testing.assert_allclose(d.R, np.eye(4), atol=1e-15)
    np.testing.assert_allclose(d.Kk, np.eye(2), atol=1e-15)


def test_plane_wave_material_tensors():
    m = MaterialField.constant(-5 + 5j, 4 - 4j, 2.0)
    np.testing.assert_allclose(m.r_at(0.1, 0.1), (0.1 + 0.1j) * np.eye(2), atol=1e-15)
    d = dissipation_at(m, (0.5, 0.5))
    I2 = np.eye(2)
    np.testing.assert_allclose(d.R, np.block([[0.2 * I2, I2], [I2, 10 * I2]]), atol=1e-13)
    np.testing.assert_allclose(d.Kk, [[0.25, 1], [1, 8]], atol=1e-13)


def test_tensors_vectorised_and_symmetric(rng):
    m = MaterialField(lambda x, y: (1 + x) * (-1 + 2j) + 0 * y, lambda x, y: 2 - (1 + y) * 1j, 3.0)
    x, y = rng.random(7), rng.random(7)
    t = dissipation_tensors(m, x, y)
    assert t.R.shape == (7, 4, 4) and t.Kk.shape == (7, 2, 2)
    np.testing.assert_array_equal(t.R, np.swapaxes(t.R, -1, -2))
    assert np.all(np.linalg.eigvalsh(t.R) > 0)
    assert np.all(np.linalg.eigvalsh(t.Kk) > 0)


def test_coercivity_plane_wave():
    rep = check_coercivity(MaterialField.constant(-5 + 5j, 4 - 4j, 2.0), PTS)
    assert rep.alpha == pytest.approx(5.0)
    assert rep.beta == pytest.approx(4.0)
    assert rep.satisfied


def test_coercivity_rho_violation():
    with pytest.warns(CoercivityWarning):
        rep = check_coercivity(MaterialField.constant(1 - 0.1j, -1j, 1.0), PTS)
    assert rep.alpha == pytest.approx(-0.1)
    assert not rep.satisfied


def test_coercivity_kappa_violation():
    with pytest.warns(CoercivityWarning):
        rep = check_coercivity(MaterialField.constant(1 + 0.011j, 1 + 0.011j, 1.0), PTS)
    assert rep.beta == pytest.approx(-0.011)
    assert not rep.satisfied


def test_coercivity_inclusion_takes_worst_point():
    m = MaterialField.inclusion((1j, -1j), (3j, -0.5j), lambda x, y: x < 0.5, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = check_coercivity(m, PTS)
    assert rep.alpha == pytest.approx(1.0)
    assert rep.beta == pytest.approx(0.5)


@pytest.mark.parametrize("c, expected", [
    (1j, (1.0, 1.0)),
    (1 + 1j, ((3 - np.sqrt(5)) / 2, (3 + np.sqrt(5)) / 2)),
    (2j, (0.5, 2.0)),
])
def test_L_eigenvalues(c, expected):
    np.testing.assert_allclose(L_eigenvalues_diagonal(c), expected, rtol=1e-12)


@pytest.mark.parametrize("c", [0.3 + 2j, -1.5 + 0.2j, 4 + 0.01j, -0.1 + 7j])
def test_L_eigenvalues_match_dense(c):
    np.testing.assert_allclose(L_eigenvalues_diagonal(c), np.linalg.eigvalsh(l_block(c)), rtol=1e-9)


@pytest.mark.parametrize("c", [1.0, 1 - 1j, -2 + 0j])
def test_L_eigenvalues_need_dissipation(c):
    with pytest.raises(NonDissipativeError):
        L_eigenvalues_diagonal(c)


def test_rescale_identity_is_noop():
    m = MaterialField.constant(-5 + 5j, 4 - 4j, 2.0)
    assert rescale(m, 1.0, 0.0) == m


def test_rescale_rotates_entry_to_i():
    c = (1 + 1j) / np.sqrt(2)
    m = MaterialField.constant(-1 / c, 1j, 1.0)  # r = -rho^{-1} = c
    with pytest.warns(CoercivityWarning):  # kappa'' turns positive
        out = rescale(m, 1.0, np.pi / 4)
    np.testing.assert_allclose(out.r_at(0.5, 0.5)[0, 0], 1j, atol=1e-15)
    assert out.z_scale == pytest.approx(np.exp(1j * np.pi / 4))


def test_rescale_toward_identity_shrinks_spread():
    m = MaterialField.constant(-5 + 5j, 4 - 4j, 2.0)
    z = np.unique(z_entries(m, PTS))
    spreads = {th: lambda_spread(np.exp(1j * th) * z) for th in np.linspace(0, np.pi / 4, 5)}
    assert spreads[np.pi / 4] < spreads[0.0]


def test_suggest_rescale_already_optimal():
    m = MaterialField.constant(1j, -1j, 1.0)  # r = i, omega^2 k = i
    r, theta = suggest_rescale(m)
    assert r == pytest.approx(1.0)
    assert theta == pytest.approx(0.0)


def test_suggest_rescale_flips_sign():
    m = MaterialField.constant(-1j, 1j, 1.0)  # Z = -iI
    r, theta = suggest_rescale(m)
    assert r == pytest.approx(1.0)
    assert theta == pytest.approx(np.pi)


def test_suggest_rescale_plane_wave_material():
    m = MaterialField.constant(-5 + 5j, 4 - 4j, 2.0)
    z = np.unique(z_entries(m, PTS))
    r, theta = suggest_rescale(m)
    assert lambda_spread(r * np.exp(1j * theta) * z) <= lambda_spread(z)
    # exhaustive check on a finer theta grid: the choice is near-optimal
    fine = min(lambda_spread(rr * np.exp(1j * th) * z)
               for th in np.linspace(0, 2 * np.pi, 721) for rr in np.geomspace(0.01, 100, 81))
    assert lambda_spread(r * np.exp(1j * theta) * z) <= 1.05 * fine


def test_omega_must_be_positive():
    with pytest.raises(ValueError):
        MaterialField.constant(1j, -1j, 0.0)
