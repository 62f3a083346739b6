"""Fast self-checks of the numerical core against closed-form results."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vqt.capacity import g_func, pure_loss_capacity_constrained
from vqt.fock import annihilation, thermal_dm, trace_distance, von_neumann_entropy
from vqt.gates import beamsplitter, homodyne_feedforward_channel, sum_then_trace
from vqt.protocols import Pipeline, ProtocolConfig, squeezed_microwave, tmsv_optical


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name}: {self.value:.3g} (tol {self.tolerance:.1g}){' ' + self.detail if self.detail else ''}"


def check_entropy() -> Check:
    s = von_neumann_entropy(thermal_dm(2.0, 60))
    dev = abs(s - g_func(2.0))
    return Check("thermal entropy vs g(2)", dev <= 1e-6, dev, 1e-6)


def check_beamsplitter(eta: float = 0.7, dim: int = 12, bs=beamsplitter) -> Check:
    """``U^dag a U = sqrt(eta) a + sqrt(1-eta) b`` on states with at most ``dim/2 - 1`` photons in total."""
    u = bs(eta, (dim, dim))
    a = np.kron(annihilation(dim), np.eye(dim))
    b = np.kron(np.eye(dim), annihilation(dim))
    lhs = u.conj().T @ a @ u
    rhs = np.sqrt(eta) * a + np.sqrt(1 - eta) * b
    n = np.add.outer(np.arange(dim), np.arange(dim)).ravel()
    low = n < dim // 2
    dev = float(np.max(np.abs((lhs - rhs)[:, low])))
    return Check("beamsplitter Heisenberg relation", dev <= 1e-7, dev, 1e-7)


def random_two_mode_state(dim: int, nmax: float, rng) -> np.ndarray:
    """Random pure two-mode density matrix with mean photon number per mode below ``nmax``."""
    while True:
        k = rng.integers(1, 4)
        amp = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        n = np.add.outer(np.arange(dim), np.arange(dim))
        amp *= np.exp(-n / k)
        psi = amp.ravel() / np.linalg.norm(amp)
        p = np.abs(psi.reshape(dim, dim)) ** 2
        if p.sum(1) @ np.arange(dim) <= nmax and p.sum(0) @ np.arange(dim) <= nmax:
            return np.outer(psi, psi.conj())


def check_homodyne(dim: int = 10, seed: int = 1, bins=(64, 512)) -> Check:
    rng = np.random.default_rng(seed)
    rho = random_two_mode_state(dim, 3.0, rng)
    ref = sum_then_trace(rho, (dim, dim))
    d = [trace_distance(homodyne_feedforward_channel(rho, (dim, dim), bins=b), ref) for b in bins]
    d257 = trace_distance(homodyne_feedforward_channel(rho, (dim, dim), bins=257), ref)
    ok = d257 <= 1e-2 and d[1] < d[0]
    return Check("SUM vs homodyne feed-forward", ok, d257, 1e-2,
                 f"bins {bins[0]}: {d[0]:.3g}, bins {bins[1]}: {d[1]:.3g}")


def check_pure_loss(eta: float = 0.7, cutoff: int = 40) -> Check:
    pl = Pipeline(ProtocolConfig(eta=eta, with_ea=False, layers=0, cutoff=cutoff))
    opt = tmsv_optical(cutoff, cutoff, 2.0)
    mw = squeezed_microwave(pl.mw_shape)
    rec = pl.evaluate((), optical_state=opt, microwave_state=mw, decoder=False)[0]
    dev = abs(rec.I_c - pure_loss_capacity_constrained(eta, 2.0))
    return Check(f"pure-loss coherent information at eta={eta}", dev <= 1e-3, dev, 1e-3)


def run_all(bs=beamsplitter) -> list[Check]:
    return [check_entropy(), check_beamsplitter(bs=bs), check_homodyne(), check_pure_loss()]
