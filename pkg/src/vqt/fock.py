"""Truncated Fock-space linear algebra.

Subsystems are stored in a fixed order and tensor indices are row-major, so a
state over ``[R, q1, S, P, A, q2]`` reshapes to ``(c_R, 2, c_S, c_P, c_A, 2)``.
All entropies are in bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from vqt import kernels

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-8
NEGATIVE_EIG_TOL = 1e-9
EIG_FLOOR = 1e-12
LEAKAGE_BUDGET = 1e-3


class LayoutError(ValueError):
    """Operator or index does not fit the subsystem layout."""


class NumericError(ArithmeticError):
    """Input violates a numerical invariant (hermiticity, positivity)."""


@dataclass(frozen=True)
class Subsystem:
    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in ("boson", "qubit"):
            raise LayoutError(f"unknown subsystem kind {self.kind!r}")
        if self.kind == "qubit" and self.dim != 2:
            raise LayoutError("qubit subsystems have dim 2")
        if self.dim < 1:
            raise LayoutError("subsystem dim must be positive")


@dataclass(frozen=True)
class ModeLayout:
    """Ordered register of bosonic modes and qubits."""

    subsystems: tuple[Subsystem, ...]

    @classmethod
    def of(cls, *spec) -> "ModeLayout":
        """Build from ints (bosonic cutoffs) and the string ``"qubit"``.

        >>> ModeLayout.of(20, "qubit", 20).dims
        (20, 2, 20)
        """
        subs = []
        for item in spec:
            if isinstance(item, Subsystem):
                subs.append(item)
            elif item == "qubit":
                subs.append(Subsystem("qubit", 2))
            else:
                subs.append(Subsystem("boson", int(item)))
        return cls(tuple(subs))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.subsystems)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def __len__(self):
        return len(self.subsystems)

    def check_index(self, i: int) -> None:
        if not 0 <= i < len(self.subsystems):
            raise LayoutError(f"subsystem index {i} out of range for {len(self)} subsystems")

    def check_boson(self, i: int) -> None:
        self.check_index(i)
        if self.subsystems[i].kind != "boson":
            raise ValueError(f"subsystem {i} is a qubit, not a bosonic mode")

    def sub(self, keep: Sequence[int]) -> "ModeLayout":
        return ModeLayout(tuple(self.subsystems[i] for i in keep))


@dataclass(frozen=True)
class StateVector:
    layout: ModeLayout
    amplitudes: np.ndarray
    leakage: float = 0.0
    leakage_tol: float = LEAKAGE_BUDGET

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.layout.total_dim:
            raise LayoutError(f"{amps.size} amplitudes for layout of dim {self.layout.total_dim}")
        object.__setattr__(self, "amplitudes", amps)
        slack = 1.0 - float(np.vdot(amps, amps).real)
        if abs(slack) > self.leakage_tol:
            raise NumericError(f"norm slack {slack:.3g} exceeds tolerance {self.leakage_tol:.3g}")
        object.__setattr__(self, "leakage", max(float(self.leakage), slack))

    @property
    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.layout.dims)

    def dm(self) -> "DensityOperator":
        return DensityOperator(self.layout, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityOperator:
    layout: ModeLayout
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.layout.total_dim
        if m.shape != (n, n):
            raise LayoutError(f"matrix shape {m.shape} does not match layout dim {n}")
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def validate(self, normalized: bool = True) -> None:
        """Raise :class:`NumericError` unless hermitian, PSD and (optionally) unit trace."""
        m = self.matrix
        herm = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
        if herm > HERMITIAN_TOL:
            raise NumericError(f"not hermitian: max|M - M^dag| = {herm:.3g}")
        if normalized and abs(self.trace - 1.0) > TRACE_TOL:
            raise NumericError(f"trace {self.trace:.12f} is not 1")
        lo = np.linalg.eigvalsh(m).min()
        if lo < -NEGATIVE_EIG_TOL:
            raise NumericError(f"negative eigenvalue {lo:.3g}")


def single_mode(dim: int) -> ModeLayout:
    return ModeLayout.of(dim)


def _as_matrix(rho) -> np.ndarray:
    if isinstance(rho, DensityOperator):
        return rho.matrix
    if isinstance(rho, StateVector):
        return rho.dm().matrix
    return np.asarray(rho, dtype=complex)


# ----------------------------------------------------------------------------
# operators

@lru_cache(maxsize=64)
def _annihilation(dim: int) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)
    a.setflags(write=False)
    return a


def annihilation(dim: int) -> np.ndarray:
    """Truncated annihilation operator with ``<n|a|n+1> = sqrt(n+1)``."""
    if dim < 2:
        raise ValueError(f"invalid cutoff {dim}: need dim >= 2")
    return _annihilation(int(dim)).copy()


def creation(dim: int) -> np.ndarray:
    return annihilation(dim).T.copy()


def number_op(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def quadratures(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """``q = (a + a^dag)/sqrt 2`` and ``p = (a - a^dag)/(i sqrt 2)``."""
    a = annihilation(dim)
    ad = a.conj().T
    return (a + ad) / np.sqrt(2), (a - ad) / (1j * np.sqrt(2))


def embed(op: np.ndarray, layout: ModeLayout, at: int) -> np.ndarray:
    """Lift a single-subsystem operator to the full register."""
    layout.check_index(at)
    op = np.asarray(op)
    d = layout.dims[at]
    if op.shape != (d, d):
        raise LayoutError(f"operator of shape {op.shape} does not act on subsystem {at} (dim {d})")
    left = int(np.prod(layout.dims[:at], dtype=np.int64))
    right = int(np.prod(layout.dims[at + 1:], dtype=np.int64))
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


# ----------------------------------------------------------------------------
# states

def fock_ket(n: int, dim: int) -> np.ndarray:
    if not 0 <= n < dim:
        raise ValueError(f"Fock level {n} outside cutoff {dim}")
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return v


def thermal_dm(nbar: float, dim: int) -> np.ndarray:
    """Thermal state with Bose-Einstein populations, not renormalized."""
    n = np.arange(dim)
    if nbar == 0:
        p = (n == 0).astype(float)
    else:
        p = nbar**n / (nbar + 1.0) ** (n + 1)
    return np.diag(p).astype(complex)


def product_ket(*kets: np.ndarray) -> np.ndarray:
    out = np.ones(1, dtype=complex)
    for k in kets:
        out = np.kron(out, k)
    return out


# ----------------------------------------------------------------------------
# reductions and functionals

def reduce_pure(psi: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix of a pure tensor, kept subsystems in layout order."""
    keep = sorted(keep)
    rest = [i for i in range(len(dims)) if i not in keep]
    t = np.asarray(psi).reshape(dims).transpose(keep + rest)
    dk = int(np.prod([dims[i] for i in keep], dtype=np.int64))
    m = t.reshape(dk, -1)
    return m @ m.conj().T


def partial_trace(rho, keep: Sequence[int], layout: ModeLayout | None = None) -> DensityOperator:
    """Trace out every subsystem not in ``keep``; kept order follows the layout."""
    if isinstance(rho, (DensityOperator, StateVector)):
        layout = rho.layout
    if layout is None:
        raise LayoutError("a layout is required for raw matrices")
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep set must be nonempty")
    for k in keep:
        layout.check_index(k)
    if isinstance(rho, StateVector):
        return DensityOperator(layout.sub(keep), reduce_pure(rho.amplitudes, layout.dims, keep))
    m = _as_matrix(rho)
    dims = layout.dims
    n = len(dims)
    t = m.reshape(dims + dims)
    # einsum letters: row axes 0..n-1, column axes n..2n-1 with traced pairs shared
    row = list(range(n))
    col = [i + n if i in keep else i for i in range(n)]
    out = [i for i in keep] + [i + n for i in keep]
    red = np.einsum(t, row + col, out)
    dk = int(np.prod([dims[i] for i in keep], dtype=np.int64))
    return DensityOperator(layout.sub(keep), red.reshape(dk, dk))


def _spectrum(m: np.ndarray) -> np.ndarray:
    herm = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if herm > HERMITIAN_TOL * max(1.0, np.max(np.abs(m))):
        raise NumericError(f"density matrix is not hermitian (deviation {herm:.3g})")
    return np.linalg.eigvalsh(0.5 * (m + m.conj().T))


def entropy_from_eigs(lam: np.ndarray) -> float:
    lam = np.clip(lam, 0.0, None)
    lam = lam[lam > EIG_FLOOR]
    return float(max(0.0, -np.sum(lam * np.log2(lam))))


def von_neumann_entropy(rho) -> float:
    """Entropy in bits; eigenvalues below 1e-12 are dropped, negatives clipped."""
    return entropy_from_eigs(_spectrum(_as_matrix(rho)))


def mean_photon(state, mode: int) -> float:
    """``<a^dag a>`` on a bosonic subsystem of a StateVector or DensityOperator."""
    state.layout.check_boson(mode)
    red = partial_trace(state, [mode]).matrix
    return float(np.real(np.arange(red.shape[0]) @ np.diag(red)))


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    # eigenvalues at roundoff level would contribute sqrt(eps) noise
    w = np.where(w > 10 * w.size * np.finfo(float).eps * max(w[-1], 0.0), w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``.

    Computed as the squared nuclear norm of ``sqrt(rho) sqrt(sigma)``, which stays accurate for
    rank-deficient states.
    """
    _check_same_layout(rho, sigma)
    a, b = _as_matrix(rho), _as_matrix(sigma)
    if a.shape != b.shape:
        raise LayoutError("states act on different spaces")
    sv = np.linalg.svd(_psd_sqrt(a) @ _psd_sqrt(b), compute_uv=False)
    f = float(np.sum(sv) ** 2)
    return min(1.0, max(0.0, f))


def trace_distance(rho, sigma) -> float:
    _check_same_layout(rho, sigma)
    a, b = _as_matrix(rho), _as_matrix(sigma)
    if a.shape != b.shape:
        raise LayoutError("states act on different spaces")
    w = np.linalg.eigvalsh(0.5 * ((a - b) + (a - b).conj().T))
    return min(1.0, 0.5 * float(np.sum(np.abs(w))))


def _check_same_layout(x, y):
    lx = getattr(x, "layout", None)
    ly = getattr(y, "layout", None)
    if lx is not None and ly is not None and lx != ly:
        raise LayoutError("states have different layouts")


def wigner(rho, q_range=(-6.0, 6.0), p_range=(-6.0, 6.0), resolution=101):
    """Wigner function on a (q, p) grid via displaced parity.

    Evaluates ``W(alpha) = (2/pi) Tr[D(alpha)^dag rho D(alpha) Parity]`` with
    ``alpha = (q + i p)/sqrt 2`` using the Laguerre recurrence for the matrix
    elements of the displaced parity operator.

    Returns ``(q, p, W)`` with ``W[j, i]`` at ``(q[i], p[j])``.
    """
    if isinstance(rho, (DensityOperator, StateVector)):
        if len(rho.layout) != 1 or rho.layout.subsystems[0].kind != "boson":
            raise ValueError("wigner needs a single bosonic mode")
    m = _as_matrix(rho)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("wigner needs a square single-mode density matrix")
    if isinstance(resolution, int):
        nq = np_ = resolution
    else:
        nq, np_ = resolution
    q = np.linspace(q_range[0], q_range[1], nq)
    p = np.linspace(p_range[0], p_range[1], np_)
    w = kernels.wigner_grid(np.ascontiguousarray(m, dtype=complex), q, p)
    return q, p, w
