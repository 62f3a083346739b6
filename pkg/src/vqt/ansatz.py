"""Layered ECD circuit blocks: parameter handling, forward/inverse application, adjoint gradients.

A block acts on some bosonic modes and one control qubit of a state tensor.
Each layer applies a qubit rotation ``R(theta, phi)`` and then an ECD gate
between the qubit and every target mode in ascending axis order.

Flat parameter order (block-major, then layer-major):
``[Re b_1, Im b_1, ..., Re b_m, Im b_m, theta, phi]`` per layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from vqt import kernels
from vqt.fock import LEAKAGE_BUDGET, StateVector
from vqt.gates import displacement_and_derivatives, qubit_rotation, qubit_rotation_derivatives


class LeakageError(RuntimeError):
    """Cumulative truncation leakage exceeded the budget."""


@dataclass(frozen=True)
class BlockSpec:
    """Target mode axes, control qubit axis and layer count of one circuit block."""

    modes: tuple[int, ...]
    qubit: int
    layers: int

    def __post_init__(self):
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        if self.qubit in self.modes or len(set(self.modes)) != len(self.modes):
            raise ValueError("block axes must be distinct")
        object.__setattr__(self, "modes", tuple(sorted(int(m) for m in self.modes)))

    @property
    def per_layer(self) -> int:
        return 2 * len(self.modes) + 2

    @property
    def size(self) -> int:
        return self.layers * self.per_layer


def param_count(block: BlockSpec) -> int:
    return block.size


def total_param_count(blocks) -> int:
    return sum(b.size for b in blocks)


def split_params(blocks, params) -> list[np.ndarray]:
    """Cut a flat vector into per-block slices (block-major order)."""
    params = np.asarray(params, dtype=float)
    if params.size != total_param_count(blocks):
        raise ValueError(f"expected {total_param_count(blocks)} parameters, got {params.size}")
    out, k = [], 0
    for b in blocks:
        out.append(params[k:k + b.size])
        k += b.size
    return out


def unpack_layers(block: BlockSpec, params):
    """Per-layer ``(betas, theta, phi)`` from a block's flat slice."""
    p = np.asarray(params, dtype=float).reshape(block.layers, block.per_layer)
    nm = len(block.modes)
    betas = p[:, 0:2 * nm:2] + 1j * p[:, 1:2 * nm:2]
    return [(betas[l], p[l, -2], p[l, -1]) for l in range(block.layers)]


def pack_layers(layers) -> np.ndarray:
    out = []
    for betas, theta, phi in layers:
        for b in np.atleast_1d(betas):
            out += [float(np.real(b)), float(np.imag(b))]
        out += [float(theta), float(phi)]
    return np.array(out, dtype=float)


def params_to_json(params) -> list[float]:
    return [float(x) for x in np.asarray(params, dtype=float)]


def params_from_json(values) -> np.ndarray:
    return np.asarray(values, dtype=float)


def random_init(blocks, seed: int, scale: float = 0.3) -> np.ndarray:
    """Complex-Gaussian ``beta`` with ``E|beta|^2 = scale^2`` and uniform angles; deterministic per seed."""
    if isinstance(blocks, BlockSpec):
        blocks = [blocks]
    rng = np.random.default_rng(seed)
    out = []
    for b in blocks:
        nm = len(b.modes)
        for _ in range(b.layers):
            beta = rng.normal(scale=scale / math.sqrt(2.0), size=2 * nm)
            angles = rng.uniform(0.0, 2.0 * math.pi, size=2)
            out.append(np.concatenate([beta, angles]))
    return np.concatenate(out) if out else np.zeros(0)


# ----------------------------------------------------------------------------
# tensor plumbing

def _to_qubit_last(psi: np.ndarray, block: BlockSpec):
    """Move the qubit axis last; return the contiguous tensor and new mode axes."""
    t = np.ascontiguousarray(np.moveaxis(psi, block.qubit, -1), dtype=complex)
    modes = tuple(m - 1 if m > block.qubit else m for m in block.modes)
    return t, modes


def _from_qubit_last(t: np.ndarray, block: BlockSpec) -> np.ndarray:
    return np.moveaxis(t, -1, block.qubit)


def _ecd_view(t: np.ndarray, axis: int):
    shape = t.shape
    lead = int(np.prod(shape[:axis], dtype=int))
    mid = int(np.prod(shape[axis + 1:-1], dtype=int))
    return t.reshape(lead, shape[axis], mid, 2, 1)


def ecd_on(t: np.ndarray, d: np.ndarray, axis: int) -> np.ndarray:
    """ECD with displacement matrix ``d`` on ``axis`` of a qubit-last tensor."""
    out = np.empty_like(t)
    kernels.ecd_apply(_ecd_view(t, axis), np.ascontiguousarray(d), _ecd_view(out, axis))
    return out


def qubit_on(t: np.ndarray, u: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    n = t.size // 2
    kernels.qubit_apply(t.reshape(n, 2, 1), np.ascontiguousarray(u, dtype=complex), out.reshape(n, 2, 1))
    return out


@dataclass
class Tape:
    """Intermediate states and gate data recorded by a forward pass."""

    block: BlockSpec
    mode_axes: tuple[int, ...]
    inputs: list  # state before each gate, qubit-last
    gates: list   # ("rot", theta, phi) or ("ecd", axis, d, dx, dy)
    leakage: list  # per-layer norm loss


def forward(psi: np.ndarray, block: BlockSpec, params, record: bool = False):
    """Apply a block to a state tensor.  Returns ``(psi_out, tape_or_layer_leakage)``."""
    t, axes = _to_qubit_last(psi, block)
    layers = unpack_layers(block, params)
    tape = Tape(block, axes, [], [], [])
    norm = np.vdot(t, t).real
    for betas, theta, phi in layers:
        u = qubit_rotation(theta, phi)
        if record:
            tape.inputs.append(t)
            tape.gates.append(("rot", theta, phi))
        t = qubit_on(t, u)
        for beta, ax in zip(betas, axes):
            d, dx, dy = displacement_and_derivatives(beta, t.shape[ax])
            if record:
                tape.inputs.append(t)
                tape.gates.append(("ecd", ax, d, dx, dy))
            t = ecd_on(t, d, ax)
        new = np.vdot(t, t).real
        tape.leakage.append(max(0.0, norm - new))
        norm = new
    out = _from_qubit_last(t, block)
    return out, tape


def backward(tape: Tape, cot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reverse pass.

    ``cot`` is ``df/d conj(psi_out)`` for a real functional ``f`` (so that
    ``df = 2 Re <cot, d psi>``).  Returns the parameter gradient and the
    cotangent of the block input.
    """
    block = tape.block
    lam = np.ascontiguousarray(np.moveaxis(cot, block.qubit, -1), dtype=complex)
    grads = []
    for t_in, gate in zip(reversed(tape.inputs), reversed(tape.gates)):
        if gate[0] == "ecd":
            _, ax, d, dx, dy = gate
            # <lam| dE |t> = Tr(dD C1) + Tr(dD^dag C0) with C_q the mode-space
            # overlaps between the |q> half of t and the other half of lam
            tv = _ecd_view(t_in, ax)[..., 0]
            lv = _ecd_view(lam, ax)[..., 0].conj()
            c1 = np.einsum("lnx,lmx->nm", tv[:, :, :, 0], lv[:, :, :, 1], optimize=True)
            c0 = np.einsum("lnx,lmx->nm", tv[:, :, :, 1], lv[:, :, :, 0], optimize=True)
            gx = 2.0 * (np.sum(dx * c1.T) + np.sum(dx.conj() * c0)).real
            gy = 2.0 * (np.sum(dy * c1.T) + np.sum(dy.conj() * c0)).real
            grads.append((gy, gx))
            # ECD is Hermitian even after projection, so it is its own adjoint
            lam = ecd_on(lam, d, ax)
        else:
            _, theta, phi = gate
            u = qubit_rotation(theta, phi)
            du_t, du_p = qubit_rotation_derivatives(theta, phi)
            tq = t_in.reshape(-1, 2)
            ov = tq.T @ lam.reshape(-1, 2).conj()  # ov[i, j] = sum t_i conj(lam_j)
            gt = 2.0 * np.sum(du_t * ov.T).real
            gp = 2.0 * np.sum(du_p * ov.T).real
            grads.append((gp, gt))
            lam = qubit_on(lam, u.conj().T)
    flat = np.array([g for pair in reversed(grads) for g in reversed(pair)], dtype=float)
    # tape order per layer is rot, ecd_1..ecd_m; the flat order is betas then angles
    nm = len(block.modes)
    per = flat.reshape(block.layers, 2 + 2 * nm) if block.layers else flat.reshape(0, 2 + 2 * nm)
    reordered = np.concatenate([per[:, 2:], per[:, :2]], axis=1).ravel()
    return reordered, _from_qubit_last(lam, block)


def inverse(psi: np.ndarray, block: BlockSpec, params) -> np.ndarray:
    """Undo :func:`forward`: layers reversed, ECDs in descending order, then ``R(theta, phi)^dag``."""
    t, axes = _to_qubit_last(psi, block)
    for betas, theta, phi in reversed(unpack_layers(block, params)):
        for beta, ax in reversed(list(zip(betas, axes))):
            d, _, _ = displacement_and_derivatives(beta, t.shape[ax])
            t = ecd_on(t, d, ax)
        t = qubit_on(t, qubit_rotation(theta, phi).conj().T)
    return _from_qubit_last(t, block)


def apply_block(state: StateVector, block: BlockSpec, params,
                budget: float = LEAKAGE_BUDGET) -> StateVector:
    """Apply a block to a :class:`StateVector`; leakage accumulates onto the state's record."""
    for ax in block.modes:
        state.layout.check_boson(ax)
    state.layout.check_index(block.qubit)
    if state.layout.subsystems[block.qubit].kind != "qubit":
        raise ValueError(f"axis {block.qubit} is not a qubit")
    out, tape = forward(state.tensor, block, params)
    leak = state.leakage + float(sum(tape.leakage))
    if leak > budget:
        raise LeakageError(f"leakage {leak:.3g} exceeds budget {budget:.1g}")
    return StateVector(state.layout, out.reshape(-1), leakage=leak, leakage_tol=max(budget, state.leakage_tol))


def apply_block_inverse(state: StateVector, block: BlockSpec, params) -> StateVector:
    out = inverse(state.tensor, block, params)
    return StateVector(state.layout, out.reshape(-1), leakage=state.leakage, leakage_tol=state.leakage_tol)


# ----------------------------------------------------------------------------
# single-mode state preparation

def prepare_fock_target(target: np.ndarray, layers: int = 8, cutoff: int = 20, restarts: int = 4,
                        seed: int = 0, max_iter: int = 400):
    """Fit a single-mode block so the mode (qubit traced) overlaps ``target`` maximally.

    Starts from ``|0>_mode |0>_qubit``; maximizes ``<t| rho_mode |t>`` with
    adjoint gradients.  Returns ``(params, fidelity)``.
    """
    block = BlockSpec(modes=(0,), qubit=1, layers=layers)
    psi0 = np.zeros((cutoff, 2), complex)
    psi0[0, 0] = 1.0
    tgt = np.zeros(cutoff, complex)
    tgt[:len(target)] = target
    tgt /= np.linalg.norm(tgt)

    def fg(x):
        out, tape = forward(psi0, block, x, record=True)
        amp = tgt.conj() @ out  # per qubit state
        f = float(np.sum(np.abs(amp) ** 2))
        cot = np.outer(tgt, amp)
        g, _ = backward(tape, cot)
        return -f, -g

    best = (None, -1.0)
    for k in range(restarts):
        x0 = random_init(block, seed=seed * 1000 + k, scale=0.3)
        res = minimize(fg, x0, jac=True, method="BFGS", options={"maxiter": max_iter, "gtol": 1e-8})
        if -res.fun > best[1]:
            best = (res.x, -res.fun)
        if best[1] > 0.999:
            break
    return best
