"""Transduction pipelines and their coherent-information objective.

Register layout, row-major: ``[R, q1, S, P, A, q2]`` (``A`` only with
entanglement assistance).  The reference system is ``{R, q1}``.

The optical input ``|psi>_{R q1 S}`` is written as a matrix ``M`` (rows
``R q1``, columns ``S``).  Everything after state preparation acts on ``S``
and the microwave side only, so the global output is ``Psi = M K`` where row
``s`` of ``K`` is the channel output for ``|s>_S (x) |phi>_{P A q2}``.  This
keeps the optical and microwave/decoder halves separate, both in the forward
pass and in the adjoint gradient.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
import scipy.linalg as sla

from vqt import ansatz
from vqt.ansatz import BlockSpec
from vqt.fock import EIG_FLOOR, LEAKAGE_BUDGET, entropy_from_eigs, von_neumann_entropy
from vqt.gates import beamsplitter, squeeze, sum_gate

FEASIBILITY_TOL = 1e-2


class ConsistencyError(ValueError):
    """A reduced state does not match the state it should be a marginal of."""


@dataclass(frozen=True)
class ProtocolConfig:
    eta: float
    n_s: float = 2.0
    n_p: float = 2.0
    adaptive: bool = False
    with_ea: bool = True
    layers: int = 6
    cutoff: int = 20          # S and P
    cutoff_a: int = 16
    cutoff_r: int | None = None  # defaults to ``cutoff``
    mu: float = 10.0
    restarts: int = 8
    max_iter: int = 400
    grad_step: float = 1e-4
    tol: float = 1e-5
    patience: int = 5
    gradient: str = "adjoint"  # or "central"
    init_scale: float = 0.6
    homodyne_phase: float = math.pi
    leakage_weight: float = 1e6
    penalty_rounds: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta {self.eta} outside [0, 1]")
        if self.n_s <= 0 or self.n_p <= 0:
            raise ValueError("energy caps must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.gradient not in ("adjoint", "central"):
            raise ValueError("gradient must be 'adjoint' or 'central'")
        if self.cutoff < 2 or self.cutoff_a < 2:
            raise ValueError("cutoffs must be >= 2")

    @property
    def c_r(self) -> int:
        return self.cutoff_r or self.cutoff

    def replace(self, **kw) -> "ProtocolConfig":
        d = asdict(self)
        d.update(kw)
        return ProtocolConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ProtocolConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown protocol config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class EvaluationRecord:
    I_c: float
    n_S: float
    n_P: float
    n_A: float
    S_P: float
    S_RP: float
    leakage: float
    violation: float
    valid: bool = True

    @property
    def feasible(self) -> bool:
        return self.valid and self.violation <= FEASIBILITY_TOL

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationRecord":
        return cls(**d)


# ----------------------------------------------------------------------------
# entropy with its derivative

def _entropy_and_generator(rho: np.ndarray):
    """``S(rho / Tr rho)`` in bits and ``L`` with ``dS = Tr[L d rho]``.

    ``L = -(log2 sigma + S) / Tr rho``; eigenvalues are floored inside the log.
    """
    lam, vec = sla.eigh(0.5 * (rho + rho.conj().T), driver="evr", check_finite=False)
    t = float(np.sum(lam))
    if not t > 1e-300:
        # everything leaked out of the cutoff; the leakage penalty takes over
        return 0.0, np.zeros_like(rho)
    p = np.clip(lam / t, 0.0, None)
    s = entropy_from_eigs(p)
    logp = np.log2(np.maximum(p, EIG_FLOOR))
    gen = -(vec * ((logp + s) / t)) @ vec.conj().T
    return s, gen


def coherent_information(rho_p, rho_rp, dims_rp=None, tol: float = 1e-8) -> float:
    """``S(rho_P) - S(rho_RP)`` in bits; ``rho_P`` must be the reduction of ``rho_RP`` over ``R``."""
    rho_p = np.asarray(rho_p, dtype=complex)
    rho_rp = np.asarray(rho_rp, dtype=complex)
    dp = rho_p.shape[0]
    dr = rho_rp.shape[0] // dp if dims_rp is None else dims_rp[0]
    if dr * dp != rho_rp.shape[0]:
        raise ConsistencyError("rho_RP dimension is not a multiple of rho_P's")
    red = np.einsum("ajak->jk", rho_rp.reshape(dr, dp, dr, dp))
    dist = 0.5 * np.sum(np.abs(np.linalg.eigvalsh(red - rho_p)))
    if dist > tol:
        raise ConsistencyError(f"rho_P differs from Tr_R rho_RP by {dist:.3g} in trace distance")
    return von_neumann_entropy(rho_p) - von_neumann_entropy(rho_rp)


# ----------------------------------------------------------------------------
# pipeline

def _number_expectation(vec: np.ndarray, axis: int):
    """``<n>`` on ``axis`` of an unnormalized tensor, and its cotangent ``(N - n) psi / |psi|^2``."""
    c = vec.shape[axis]
    shape = [1] * vec.ndim
    shape[axis] = c
    n = np.arange(c, dtype=float).reshape(shape)
    norm = np.vdot(vec, vec).real
    val = float(np.sum(n * np.abs(vec) ** 2) / norm)
    return val, (n - val) * vec / norm


class Pipeline:
    """Builds and differentiates one protocol configuration.

    Optical tensor axes: ``(R, q1, S)``.  Microwave tensor axes:
    ``(P, A, q2)`` or ``(P, q2)`` without assistance.
    """

    def __init__(self, config: ProtocolConfig):
        self.config = config
        c = config.cutoff
        self.c = c
        self.c_r = config.c_r
        self.c_a = config.cutoff_a if config.with_ea else None
        self.optical_block = BlockSpec(modes=(0, 2), qubit=1, layers=config.layers)
        if config.with_ea:
            self.mw_block = BlockSpec(modes=(0, 1), qubit=2, layers=config.layers)
            self.mw_shape = (c, self.c_a, 2)
        else:
            self.mw_block = BlockSpec(modes=(0,), qubit=1, layers=config.layers)
            self.mw_shape = (c, 2)
        self.optical_shape = (self.c_r, 2, c)
        # K tensors have axes (s, S_out, P_out, *microwave rest); the decoder
        # acts on P_out and A with q2 last
        nrest = len(self.mw_shape) - 1
        dec_modes = (2,) if not config.with_ea else (2, 3)
        self.dec_block = BlockSpec(modes=dec_modes, qubit=2 + nrest, layers=config.layers)
        # beamsplitter as (x_out, y_out, s_in, p_in); then the two output
        # slots are relabelled so that P carries sqrt(eta) S + sqrt(1-eta) P
        self.bs = beamsplitter(config.eta, (c, c)).reshape(c, c, c, c)
        if config.adaptive:
            full = sum_gate((c, c), full_output=True)
            self.n_nodes = full.shape[0] // c
            self.sum_u = full.reshape(self.n_nodes, c, c, c)
            self.phase = np.exp(-1j * config.homodyne_phase * np.arange(c))
        else:
            self.n_nodes = c

    # blocks used for a given evaluation mode
    def blocks(self, optical=True, microwave=True, decoder=True) -> list[BlockSpec]:
        out = []
        if optical:
            out.append(self.optical_block)
        if microwave:
            out.append(self.mw_block)
        if decoder:
            out.append(self.dec_block)
        return out

    def vacuum_optical(self) -> np.ndarray:
        v = np.zeros(self.optical_shape, complex)
        v[0, 0, 0] = 1.0
        return v

    def vacuum_microwave(self) -> np.ndarray:
        v = np.zeros(self.mw_shape, complex)
        v[(0,) * len(self.mw_shape)] = 1.0
        return v

    # ------------------------------------------------------------------
    def channel(self, phi: np.ndarray) -> np.ndarray:
        """``K`` before the decoder: axes ``(s, S_out, P_out, *rest)``."""
        c = self.c
        z = phi.reshape(c, -1)
        # K1[s, x, y, z] = sum_p B[x, y, s, p] phi[p, z]; P_out = x, S_out = y
        k1 = np.einsum("xysp,pz->syxz", self.bs, z, optimize=True)
        if self.config.adaptive:
            k1 = k1 * self.phase[None, :, None, None]
            k1 = np.einsum("kjml,smlz->skjz", self.sum_u, k1, optimize=True)
        return k1.reshape((c, k1.shape[1], c) + self.mw_shape[1:])

    def channel_adjoint(self, cot: np.ndarray) -> np.ndarray:
        c = self.c
        g = cot.reshape(c, cot.shape[1], c, -1)
        if self.config.adaptive:
            g = np.einsum("kjml,skjz->smlz", self.sum_u.conj(), g, optimize=True)
            g = g * self.phase.conj()[None, :, None, None]
        gz = np.einsum("xysp,syxz->pz", self.bs.conj(), g, optimize=True)
        return gz.reshape(self.mw_shape)

    # ------------------------------------------------------------------
    def evaluate(self, params=(), optical_state=None, microwave_state=None, decoder: bool = True,
                 grad: bool = False, mu: float | None = None):
        """Evaluate the protocol; optionally also the gradient of the penalized objective.

        ``optical_state`` (axes ``R, q1, S``) and ``microwave_state`` replace the
        corresponding ansatz blocks, which then take no parameters.  With
        ``decoder=False`` the decoder is the identity.  Returns
        ``(record, objective, gradient)`` where the objective is
        ``I_c - mu * violation**2 - w * max(0, leakage - budget/2)**2``.
        """
        cfg = self.config
        mu = cfg.mu if mu is None else mu
        blocks = self.blocks(optical_state is None, microwave_state is None, decoder)
        chunks = ansatz.split_params(blocks, params)
        it = iter(chunks)
        tapes = {}
        if optical_state is None:
            psi, tapes["opt"] = ansatz.forward(self.vacuum_optical(), self.optical_block, next(it), record=grad)
        else:
            psi = np.asarray(optical_state, complex).reshape(self.optical_shape)
        if microwave_state is None:
            phi, tapes["mw"] = ansatz.forward(self.vacuum_microwave(), self.mw_block, next(it), record=grad)
        else:
            phi = np.asarray(microwave_state, complex).reshape(self.mw_shape)
        n_s, cot_ns = _number_expectation(psi, 2)
        n_p, cot_np = _number_expectation(phi, 0)
        n_a = _number_expectation(phi, 1)[0] if cfg.with_ea else 0.0

        k = self.channel(phi)
        if decoder:
            k, tapes["dec"] = ansatz.forward(k, self.dec_block, next(it), record=grad)

        m = psi.reshape(-1, self.c)
        kf = k.reshape(self.c, -1)
        big = m @ kf
        rq, e, p = m.shape[0], k.shape[1], self.c
        psi4 = big.reshape(rq, e, p, -1)
        total = float(np.vdot(big, big).real)
        leakage = max(0.0, 1.0 - total)

        rho_p = np.einsum("repz,reqz->pq", psi4, psi4.conj(), optimize=True)
        s_p, l_p = _entropy_and_generator(rho_p)
        # Psi = (U S V^dag) K with U an isometry, so rho_RP shares its nonzero
        # spectrum with Y Y^dag, Y = (S V^dag) K, which lives on c_S*c_P rows
        u, sv, vh = np.linalg.svd(m, full_matrices=False)
        y4 = np.tensordot(sv[:, None] * vh, k.reshape(self.c, e, p, -1), axes=1)
        y = y4.transpose(0, 2, 1, 3).reshape(u.shape[1] * p, -1)
        if y.shape[0] <= y.shape[1]:
            s_rp, l_y = _entropy_and_generator(y @ y.conj().T)
            g_y = l_y @ y
        else:
            s_rp, l_c = _entropy_and_generator(y.conj().T @ y)
            g_y = y @ l_c
        g_rp = u @ g_y.reshape(u.shape[1], -1)
        i_c = s_p - s_rp
        viol = max(0.0, n_s - cfg.n_s) + max(0.0, n_p - cfg.n_p)
        valid = leakage <= LEAKAGE_BUDGET
        record = EvaluationRecord(float(i_c), n_s, n_p, float(n_a), float(s_p), float(s_rp),
                                  float(leakage), float(viol), bool(valid))
        leak_excess = max(0.0, leakage - 0.5 * LEAKAGE_BUDGET)
        objective = i_c - mu * viol**2 - cfg.leakage_weight * leak_excess**2
        if not grad:
            return record, float(objective), None

        # cotangent of the objective with respect to conj(Psi)
        g = np.einsum("pq,reqz->repz", l_p, psi4, optimize=True)
        g -= g_rp.reshape(rq, p, e, -1).transpose(0, 2, 1, 3)
        if leak_excess > 0:
            g += 2.0 * cfg.leakage_weight * leak_excess * psi4  # leak = 1 - |Psi|^2
        g = g.reshape(rq, -1)
        g_m = (g @ kf.conj().T).reshape(self.optical_shape)
        g_k = (m.conj().T @ g).reshape(k.shape)
        dpen = -2.0 * mu * viol
        grads = []
        if optical_state is None:
            if n_s > cfg.n_s:
                g_m = g_m + dpen * cot_ns
            go, _ = ansatz.backward(tapes["opt"], g_m)
            grads.append(go)
        if decoder:
            gd, g_k = ansatz.backward(tapes["dec"], g_k)
        g_phi = self.channel_adjoint(g_k)
        if microwave_state is None:
            if n_p > cfg.n_p:
                g_phi = g_phi + dpen * cot_np
            gmw, _ = ansatz.backward(tapes["mw"], g_phi)
            grads.append(gmw)
        if decoder:
            grads.append(gd)
        return record, float(objective), np.concatenate(grads) if grads else np.zeros(0)

    def output_states(self, params=(), optical_state=None, microwave_state=None, decoder=True):
        """``(rho_P, rho_RP)`` for inspection and cross-checks (small cutoffs only)."""
        blocks = self.blocks(optical_state is None, microwave_state is None, decoder)
        it = iter(ansatz.split_params(blocks, params))
        psi = (ansatz.forward(self.vacuum_optical(), self.optical_block, next(it))[0]
               if optical_state is None else np.asarray(optical_state, complex).reshape(self.optical_shape))
        phi = (ansatz.forward(self.vacuum_microwave(), self.mw_block, next(it))[0]
               if microwave_state is None else np.asarray(microwave_state, complex).reshape(self.mw_shape))
        k = self.channel(phi)
        if decoder:
            k = ansatz.forward(k, self.dec_block, next(it))[0]
        big = psi.reshape(-1, self.c) @ k.reshape(self.c, -1)
        psi4 = big.reshape(psi.shape[0] * 2, k.shape[1], self.c, -1)
        t = np.vdot(big, big).real
        rho_p = np.einsum("repz,reqz->pq", psi4, psi4.conj()) / t
        x = psi4.transpose(0, 2, 1, 3).reshape(-1, psi4.shape[1] * psi4.shape[3])
        return rho_p, (x @ x.conj().T) / t

    def input_states(self, params=(), optical_state=None, microwave_state=None):
        """Reduced single-mode inputs ``(rho_S, rho_P)`` before the transducer.

        ``params`` may include the decoder block, which is ignored.
        """
        blocks = self.blocks(optical_state is None, microwave_state is None, False)
        params = np.asarray(params, float)
        if params.size == ansatz.total_param_count(blocks) + self.dec_block.size:
            params = params[:ansatz.total_param_count(blocks)]
        it = iter(ansatz.split_params(blocks, params))
        psi = (ansatz.forward(self.vacuum_optical(), self.optical_block, next(it))[0]
               if optical_state is None else np.asarray(optical_state, complex).reshape(self.optical_shape))
        phi = (ansatz.forward(self.vacuum_microwave(), self.mw_block, next(it))[0]
               if microwave_state is None else np.asarray(microwave_state, complex).reshape(self.mw_shape))
        ms = psi.reshape(-1, self.c)
        rho_s = ms.T @ ms.conj()
        mp = phi.reshape(self.c, -1)
        rho_p = mp @ mp.conj().T
        return rho_s / np.trace(rho_s).real, rho_p / np.trace(rho_p).real


def evaluate_nonadaptive(config: ProtocolConfig, params=(), optical_state=None, microwave_state=None,
                         decoder: bool = True) -> EvaluationRecord:
    if config.adaptive:
        raise ValueError("config is adaptive")
    return Pipeline(config).evaluate(params, optical_state, microwave_state, decoder)[0]


def evaluate_adaptive(config: ProtocolConfig, params=(), optical_state=None, microwave_state=None,
                      decoder: bool = True) -> EvaluationRecord:
    if not config.adaptive:
        raise ValueError("config is not adaptive")
    return Pipeline(config).evaluate(params, optical_state, microwave_state, decoder)[0]


# ----------------------------------------------------------------------------
# Gaussian input states

def tmsv_optical(c_r: int, c_s: int, nbar: float, r_s: float = 0.0) -> np.ndarray:
    """TMSV on ``(R, S)`` with ``nbar`` photons per arm, then ``S(r_s)`` on ``S``; ``q1 = |0>``."""
    # sum_n (-1)^n sqrt(nbar^n / (nbar+1)^(n+1)) |n, n>, the two-mode squeezer's
    # sign convention, cut at the smaller cutoff
    n = np.arange(min(c_r, c_s))
    amp = np.sqrt(1.0 / (nbar + 1.0)) * (-np.sqrt(nbar / (nbar + 1.0))) ** n
    rs = np.zeros((c_r, c_s), complex)
    rs[n, n] = amp
    if r_s:
        rs = rs @ squeeze(r_s, c_s).T
    out = np.zeros((c_r, 2, c_s), complex)
    out[:, 0, :] = rs
    return out


def squeezed_microwave(shape, r_p: float = 0.0) -> np.ndarray:
    """``S(r_p)|0>`` on ``P``, everything else in its ground state."""
    out = np.zeros(shape, complex)
    col = squeeze(r_p, shape[0])[:, 0] if r_p else np.eye(shape[0])[:, 0]
    out[(slice(None),) + (0,) * (len(shape) - 1)] = col
    return out
