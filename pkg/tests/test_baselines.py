import math

import numpy as np
import pytest

from vqt.baselines import (BaselineResult, GkpQtParams, aqt_energy, aqt_states, gkp_qt_states,
                           max_thermal, optimize_aqt, optimize_gkp_qt, run_aqt, run_gkp_qt, tms_ea_baseline)
from vqt.capacity import g_func, tms_ea_rate
from vqt.fock import thermal_dm, von_neumann_entropy
from vqt.protocols import Pipeline, ProtocolConfig


def gauss_entropy(v):
    n = v.shape[0] // 2
    om = np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))
    nu = np.sort(np.abs(np.linalg.eigvals(1j * om @ v)))[::2]
    return sum(g_func(max(x - 0.5, 0.0)) for x in nu)


def gaussian_coherent_information(eta, r_s, nbar, r_p, adaptive):
    """Covariance-matrix oracle for squeezed-thermal S (purified by R) and squeezed-vacuum P.

    Quadrature order ``(R, S, P)``; vacuum variance 1/2.
    """
    a, c = nbar + 0.5, math.sqrt(nbar * (nbar + 1))
    z = np.diag([1.0, -1.0])
    v = np.zeros((6, 6))
    v[:2, :2] = v[2:4, 2:4] = a * np.eye(2)
    v[:2, 2:4] = v[2:4, :2] = c * z
    v[4:, 4:] = np.diag([math.exp(-2 * r_p), math.exp(2 * r_p)]) / 2
    s = np.diag([1.0, 1.0, math.exp(-r_s), math.exp(r_s), 1.0, 1.0])
    v = s @ v @ s.T
    t, u = math.sqrt(eta), math.sqrt(1 - eta)
    b = np.zeros((6, 6))  # rows (R, S_out, P_out)
    b[:2, :2] = np.eye(2)
    b[2:4, 2:4], b[2:4, 4:] = -u * np.eye(2), t * np.eye(2)
    b[4:, 2:4], b[4:, 4:] = t * np.eye(2), u * np.eye(2)
    v = b @ v @ b.T
    if adaptive:
        ph = np.diag([1.0, 1.0, -1.0, -1.0, 1.0, 1.0])  # homodyne phase pi on S_out
        sm = np.eye(6)
        sm[4, 2] = 1.0   # q_P += q_S
        sm[3, 5] = -1.0  # p_S -= p_P
        v = sm @ ph @ v @ ph.T @ sm.T
    keep = [0, 1, 4, 5]
    return gauss_entropy(v[4:, 4:]) - gauss_entropy(v[np.ix_(keep, keep)])


@pytest.mark.parametrize("eta,expected_gain", [(0.2, None), (0.3, 3.0), (0.5, 3.0), (0.8, 3.0)])
def test_tms_ea_gain_is_limited_by_probe_energy(eta, expected_gain):
    rate, gain = tms_ea_baseline(eta, 2.0, 2.0)
    assert rate == pytest.approx(max(tms_ea_rate(eta, g, 2.0) for g in (1.0, 1.5, 2.0, 2.5, 3.0)))
    if expected_gain is None:
        assert rate == 0.0
    else:
        assert gain == expected_gain


def test_tms_ea_value():
    # eta=0.5, G=3: eta_EA = 3/4, rate g(1.5) - g(0.5) from thermal spectra
    ref = von_neumann_entropy(thermal_dm(1.5, 150)) - von_neumann_entropy(thermal_dm(0.5, 150))
    assert tms_ea_baseline(0.5)[0] == pytest.approx(ref, abs=1e-8)


def test_gkp_states_meet_energy_caps():
    p = GkpQtParams((0.3, 0.7), s_phi1=0.2, s_r=0.1, p_phi1=0.4, p_r=-0.1, p_phi2=0.3)
    opt, mw, tail = gkp_qt_states(p, 3, 2.0, 2.0)
    c = opt.shape[-1]
    ns = np.arange(c) @ np.sum(np.abs(opt) ** 2, axis=(0, 1))
    npp = np.arange(c) @ np.sum(np.abs(mw) ** 2, axis=1)
    assert ns == pytest.approx(2.0, abs=2e-3)
    assert npp == pytest.approx(2.0, abs=2e-3)
    assert tail < 1e-3


def test_gkp_qt_lossless_carries_a_qubit():
    rec = run_gkp_qt(1.0, 2.0, 2.0, 1, GkpQtParams((0.5, 0.5)))
    assert 0.99 <= rec.I_c <= 1.0 + 1e-9
    assert rec.feasible


def test_gkp_qt_product_input_carries_nothing():
    rec = run_gkp_qt(0.6, 2.0, 2.0, 2, GkpQtParams((1.0,)))
    assert rec.I_c == pytest.approx(0.0, abs=1e-9)


def test_gkp_qt_optimizer_small_grid():
    res = optimize_gkp_qt(0.7, d1_range=(2,), d2_range=(1,), max_iter=15)
    assert res.record is not None and res.record.feasible
    assert res.params["d1"] == 2
    assert res.I_c > 0.0
    back = BaselineResult.from_dict(res.to_dict())
    assert back.record == res.record


@pytest.mark.parametrize("r_s,nbar", [(0.0, 2.0), (0.4, 0.5), (-0.3, 1.0)])
def test_aqt_energy_formula(r_s, nbar):
    opt, _ = aqt_states(2.0, 2.0, r_s, nbar, 0.0, 40)
    c = opt.shape[-1]
    ns = np.arange(c) @ np.sum(np.abs(opt) ** 2, axis=(0, 1))
    assert ns == pytest.approx(aqt_energy(nbar, r_s), abs=1e-4)
    assert aqt_energy(max_thermal(2.0, r_s), r_s) == pytest.approx(2.0)


@pytest.mark.parametrize("eta,r_s,nbar,r_p", [(0.5, 0.3, 0.4, 0.8), (0.3, -0.2, 1.0, -0.5), (0.7, 0.0, 2.0, 0.0)])
def test_aqt_matches_gaussian_oracle(eta, r_s, nbar, r_p):
    rec = run_aqt(eta, 2.0, 2.0, r_s, nbar, r_p)
    assert rec.I_c == pytest.approx(gaussian_coherent_information(eta, r_s, nbar, r_p, True), abs=1e-4)


@pytest.mark.parametrize("eta,r_s,nbar,r_p", [(0.6, 0.2, 1.0, 0.3), (0.8, -0.4, 0.5, 0.6)])
def test_nonadaptive_gaussian_inputs_match_oracle(eta, r_s, nbar, r_p):
    c = 40
    pl = Pipeline(ProtocolConfig(eta=eta, with_ea=False, layers=0, cutoff=c))
    opt, mw = aqt_states(2.0, 2.0, r_s, nbar, r_p, c)
    rec = pl.evaluate((), optical_state=opt, microwave_state=mw, decoder=False)[0]
    assert rec.I_c == pytest.approx(gaussian_coherent_information(eta, r_s, nbar, r_p, False), abs=1e-4)


def test_aqt_optimizer_respects_caps():
    res = optimize_aqt(0.5, max_iter=4, cutoff=30)
    assert res.record.feasible
    assert res.record.n_S <= 2.0 + 1e-2 and res.record.n_P <= 2.0 + 1e-2
    # the first start is the unsqueezed thermal point
    assert res.I_c >= run_aqt(0.5, 2.0, 2.0, 0.0, 2.0, 0.0, 30).I_c - 1e-9
