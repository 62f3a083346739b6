import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vqt.fock import annihilation, quadratures, trace_distance
from vqt.gates import (ResolutionError, beamsplitter, displacement, displacement_and_derivatives, ecd,
                       homodyne_feedforward_channel, q_translation, qubit_rotation, qubit_rotation_derivatives,
                       rotate, squeeze, sum_gate, sum_then_trace, two_mode_squeeze)
from vqt.validate import random_two_mode_state


def low_projector_error(u, dims, nmax=None):
    """``max |(U^dag U - I) P_low|`` with ``P_low`` on total photon number below ``nmax``."""
    grids = np.meshgrid(*[np.arange(d) for d in dims], indexing="ij")
    total = np.sum(grids, axis=0).ravel()
    low = total < (min(dims) // 2 if nmax is None else nmax)
    err = u.conj().T @ u - np.eye(u.shape[1])
    return float(np.max(np.abs(err[:, low])))


def test_displacement_of_vacuum_is_coherent_state():
    alpha = 0.8 + 0.6j
    v = displacement(alpha, 30)[:, 0]
    n = np.arange(30)
    logfact = np.array([math.lgamma(k + 1) for k in n])
    ref = np.exp(-abs(alpha) ** 2 / 2 - logfact / 2) * alpha**n
    assert np.allclose(v, ref, atol=1e-12)


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_displacement_unitary_on_low_levels(x, y):
    d = displacement(complex(x, y), 40)
    assert low_projector_error(d, (40,), 10) < 1e-7


@given(st.floats(-0.4, 0.4))
def test_squeeze_unitary_on_low_levels(r):
    assert low_projector_error(squeeze(r, 40), (40,), 6) < 1e-5


@given(st.floats(0.0, 1.0))
def test_beamsplitter_unitary_on_low_levels(eta):
    assert low_projector_error(beamsplitter(eta, (8, 8)), (8, 8)) < 1e-7


@pytest.mark.parametrize("full", [False, True])
def test_sum_gate_truncation_error_shrinks(full):
    errs = [low_projector_error(sum_gate((d, d), full_output=full), (d, d), 3) for d in (12, 16, 20)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-4


def test_displacement_derivatives_match_finite_differences():
    alpha, h = 0.4 - 0.7j, 1e-6
    d, dx, dy = displacement_and_derivatives(alpha, 15)
    fx = (displacement(alpha + h, 15) - displacement(alpha - h, 15)) / (2 * h)
    fy = (displacement(alpha + 1j * h, 15) - displacement(alpha - 1j * h, 15)) / (2 * h)
    assert np.allclose(d, displacement(alpha, 15))
    assert np.allclose(dx, fx, atol=1e-7)
    assert np.allclose(dy, fy, atol=1e-7)


def test_rotation_is_diagonal_phase():
    assert np.allclose(rotate(0.3, 4), np.diag(np.exp(-0.3j * np.arange(4))))


@pytest.mark.parametrize("eta", [0.0, 0.3, 0.7, 1.0])
def test_beamsplitter_heisenberg_relation(eta):
    dim = 10
    u = beamsplitter(eta, (dim, dim))
    a = np.kron(annihilation(dim), np.eye(dim))
    b = np.kron(np.eye(dim), annihilation(dim))
    n = np.add.outer(np.arange(dim), np.arange(dim)).ravel()
    low = n < dim // 2
    assert np.allclose((u.conj().T @ a @ u)[:, low], (math.sqrt(eta) * a + math.sqrt(1 - eta) * b)[:, low])
    assert np.allclose((u.conj().T @ b @ u)[:, low], (math.sqrt(eta) * b - math.sqrt(1 - eta) * a)[:, low])


def test_beamsplitter_identity_at_unit_transmissivity():
    assert np.allclose(beamsplitter(1.0, (5, 5)), np.eye(25))


def test_beamsplitter_rejects_bad_eta():
    with pytest.raises(ValueError):
        beamsplitter(1.2, 4)


def test_two_mode_squeezer_makes_tmsv():
    gain = 2.5
    v = two_mode_squeeze(gain, (30, 30))[:, 0].reshape(30, 30)
    nbar = gain - 1
    n = np.arange(30)
    assert np.allclose(np.abs(np.diag(v)), np.sqrt(nbar**n / (nbar + 1) ** (n + 1)), atol=1e-8)
    with pytest.raises(ValueError):
        two_mode_squeeze(0.5, 4)


def test_q_translation_shifts_position():
    dim = 40
    q, _ = quadratures(dim)
    v = q_translation(0.7, dim)[:, 0]
    assert np.real(v.conj() @ q @ v) == pytest.approx(0.7, abs=1e-8)


def test_sum_gate_adds_positions():
    # coherent states with q_A = 0.6, q_B = -0.3 (q = sqrt 2 Re alpha)
    dim = 24
    a = displacement(0.6 / math.sqrt(2), dim)[:, 0]
    b = displacement(-0.3 / math.sqrt(2) + 0.2j, dim)[:, 0]
    out = sum_gate((dim, dim)) @ np.kron(a, b)
    q, p = quadratures(dim)
    qb = np.kron(np.eye(dim), q)
    pa = np.kron(p, np.eye(dim))
    assert np.real(out.conj() @ qb @ out) == pytest.approx(0.3, abs=1e-6)
    # p_A -> p_A - p_B; p_B = sqrt 2 * 0.2
    assert np.real(out.conj() @ pa @ out) == pytest.approx(-0.2 * math.sqrt(2), abs=1e-6)


def test_ecd_at_zero_flips_qubit():
    assert np.allclose(ecd(0.0, 4), np.kron(np.eye(4), np.array([[0, 1], [1, 0]])))


def test_ecd_is_hermitian():
    e = ecd(0.5 + 0.2j, 10)
    assert np.allclose(e, e.conj().T)


def test_ecd_conditional_displacements():
    beta, dim = 0.7, 20
    e = ecd(beta, dim)
    v0 = np.kron(np.eye(dim)[:, 0], [1, 0])
    out = (e @ v0).reshape(dim, 2)
    assert np.allclose(out[:, 1], displacement(beta, dim)[:, 0])
    assert np.allclose(out[:, 0], 0)


@given(st.floats(-7, 7), st.floats(-7, 7))
def test_qubit_rotation_unitary_and_derivatives(theta, phi):
    u = qubit_rotation(theta, phi)
    assert np.allclose(u.conj().T @ u, np.eye(2))
    h = 1e-6
    dt, dp = qubit_rotation_derivatives(theta, phi)
    assert np.allclose(dt, (qubit_rotation(theta + h, phi) - qubit_rotation(theta - h, phi)) / (2 * h), atol=1e-8)
    assert np.allclose(dp, (qubit_rotation(theta, phi + h) - qubit_rotation(theta, phi - h)) / (2 * h), atol=1e-8)


def test_homodyne_rejects_coarse_bins():
    rho = np.zeros((16, 16), complex)
    rho[0, 0] = 1
    with pytest.raises(ResolutionError):
        homodyne_feedforward_channel(rho, (4, 4), bins=16)


def test_homodyne_approaches_sum_gate():
    rng = np.random.default_rng(5)
    dim = 8
    rho = random_two_mode_state(dim, 3.0, rng)
    ref = sum_then_trace(rho, (dim, dim))
    d = [trace_distance(homodyne_feedforward_channel(rho, (dim, dim), bins=b), ref) for b in (64, 128, 257)]
    assert d[2] <= 1e-2
    assert d[0] > d[1] > d[2]


def test_sum_then_trace_is_a_state():
    traces = []
    for d in (6, 10, 14):
        rho = random_two_mode_state(d, 2.0, np.random.default_rng(2))
        out = sum_then_trace(rho, (d, d))
        assert np.linalg.eigvalsh(out).min() > -1e-9
        traces.append(np.trace(out).real)
    # B truncation loses weight that shrinks with the cutoff
    assert traces[0] < traces[1] < traces[2] <= 1 + 1e-12
    assert traces[2] > 0.99
