"""Finite-energy GKP codewords on general lattices and a GKP-diagonal fidelity matcher."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np
from scipy.optimize import brentq

from vqt.fock import StateVector, single_mode
from vqt.gates import displacement

TWO_PI = 2.0 * math.pi
S_MAX_CAP = 20
DELTA_MIN = 0.1
DELTA_MAX = 1.0


class CutoffError(ValueError):
    """Fock cutoff too small for the requested codeword."""


class EnvelopeError(ValueError):
    """Envelope too narrow for the comb truncation cap."""


class InfeasibleError(ValueError):
    """Requested energy cannot be reached with an admissible envelope."""


def _rot(theta):
    # Heisenberg action of exp(-i theta n) on (q, p)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def symplectic_matrix(phi1: float, r: float, phi2: float) -> np.ndarray:
    """Phase-space map of ``R(phi2) S(r) R(phi1)``."""
    return _rot(phi2) @ np.diag([math.exp(-r), math.exp(r)]) @ _rot(phi1)


@dataclass(frozen=True)
class GkpLattice:
    """Lattice ``R(phi2) S(r) R(phi1)`` applied to the square lattice of dimension ``d``."""

    d: int
    phi1: float = 0.0
    r: float = 0.0
    phi2: float = 0.0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if int(self.d) < 1:
            raise ValueError("logical dimension must be >= 1")

    @property
    def matrix(self) -> np.ndarray:
        return symplectic_matrix(self.phi1, self.r, self.phi2)

    @property
    def v(self) -> np.ndarray:
        return self.matrix @ np.array([math.sqrt(TWO_PI * self.d), 0.0])

    @property
    def u(self) -> np.ndarray:
        return self.matrix @ np.array([0.0, math.sqrt(TWO_PI * self.d)])

    @property
    def orientation(self) -> np.ndarray:
        """Normalized orientation matrix with rows ``v`` and ``u``."""
        return np.vstack([self.v, self.u]) / math.sqrt(TWO_PI * self.d)

    def symplectic_area(self) -> float:
        v, u = self.v, self.u
        return float(v[0] * u[1] - v[1] * u[0])

    def angle(self) -> float:
        """Angle between ``v`` and ``u`` in degrees."""
        v, u = self.v, self.u
        c = np.dot(v, u) / (np.linalg.norm(v) * np.linalg.norm(u))
        return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))

    @classmethod
    def from_vectors(cls, v, u, d: int, name: str = "") -> "GkpLattice":
        """Decompose generator vectors into ``(phi1, r, phi2)``; needs ``v^T Omega u = 2 pi d``."""
        v = np.asarray(v, float)
        u = np.asarray(u, float)
        area = v[0] * u[1] - v[1] * u[0]
        if abs(area - TWO_PI * d) > 1e-9 * TWO_PI * d:
            raise ValueError(f"symplectic area {area:.6g} != 2 pi d")
        m = np.column_stack([v, u]) / math.sqrt(TWO_PI * d)
        uu, sv, wt = np.linalg.svd(m)
        # want m = R(phi2) diag(e^-r, e^r) R(phi1) with det R = 1
        uu, sv, wt = uu[:, ::-1], sv[::-1], wt[::-1, :]
        if np.linalg.det(uu) < 0:
            uu[:, 0] *= -1
            wt[0, :] *= -1
        phi2 = math.atan2(uu[0, 1], uu[0, 0])
        phi1 = math.atan2(wt[0, 1], wt[0, 0])
        r = math.log(sv[1])
        return cls(int(d), phi1, r, phi2, name=name)

    @classmethod
    def square(cls, d: int) -> "GkpLattice":
        return cls(int(d), name="square")

    @classmethod
    def hexagonal(cls, d: int) -> "GkpLattice":
        lam = math.sqrt(TWO_PI * d) * math.sqrt(2.0 / math.sqrt(3.0))
        return cls.from_vectors(lam * np.array([1.0, 0.0]),
                                lam * np.array([0.5, math.sqrt(3.0) / 2.0]), d, name="hexagonal")


@dataclass(frozen=True)
class GkpSpec:
    lattice: GkpLattice
    index: int
    delta: float

    def __post_init__(self):
        if not 0 <= self.index < self.lattice.d:
            raise ValueError(f"logical index {self.index} outside 0..{self.lattice.d - 1}")
        if not 0.0 < self.delta <= DELTA_MAX:
            raise ValueError(f"envelope {self.delta} outside (0, {DELTA_MAX}]")


@dataclass(frozen=True)
class GkpMixture:
    """Diagonal mixture ``sum_i p_i |i><i|`` of codewords sharing one lattice and envelope."""

    lattice: GkpLattice
    delta: float
    weights: tuple[float, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        if w.size != self.lattice.d:
            raise ValueError("need one weight per logical state")
        if np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must lie on the probability simplex")

    def density_matrix(self, cutoff: int) -> np.ndarray:
        kets, _ = dressed_codewords(self.lattice, self.delta, cutoff)
        w = np.asarray(self.weights, float)
        return (kets.T * w) @ kets.conj()


# ----------------------------------------------------------------------------
# Hermite machinery

def hermite_functions(nmax: int, x) -> np.ndarray:
    """Normalized oscillator eigenfunctions ``psi_n(x)`` for ``n < nmax``; shape ``(nmax, len(x))``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((nmax, x.size))
    out[0] = math.pi ** -0.25 * np.exp(-0.5 * x * x)
    if nmax > 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(2, nmax):
        out[n] = math.sqrt(2.0 / n) * x * out[n - 1] - math.sqrt((n - 1.0) / n) * out[n - 2]
    return out


def comb_size(delta: float, d: int) -> int:
    """Number of comb teeth kept on each side of the origin."""
    s = int(math.ceil(4.0 / (delta * math.sqrt(TWO_PI / d) * d)))
    if s > S_MAX_CAP:
        raise EnvelopeError(f"envelope {delta} needs {s} > {S_MAX_CAP} comb teeth")
    return s


def _working_dim(delta: float) -> int:
    # bucketed so that cached squeeze maps are reused across nearby envelopes
    n = math.ceil(16.0 / delta**2) + 20
    return int(min(3008, 64 * math.ceil(n / 64)))


def square_codewords(d: int, delta: float, nmax: int | None = None) -> np.ndarray:
    """Unnormalized Fock coefficients of ``exp(-delta^2 n)|i>_L`` for all ``i``; shape ``(d, nmax)``."""
    nmax = nmax or _working_dim(delta)
    smax = comb_size(delta, d)
    s = np.arange(-smax, smax + 1)
    step = math.sqrt(TWO_PI / d)
    out = np.empty((d, nmax))
    env = np.exp(-delta**2 * np.arange(nmax))
    for i in range(d):
        peaks = step * (d * s + i)
        out[i] = env * hermite_functions(nmax, peaks).sum(axis=1)
    return out


@lru_cache(maxsize=32)
def _grid(n_in: int, r_abs: float):
    kmax = math.sqrt(2.0 * n_in + 1.0) * math.exp(r_abs) + 4.0
    qmax = (math.sqrt(2.0 * n_in + 1.0) + 8.0) * math.exp(r_abs)
    h = 0.5 * math.pi / kmax
    q = np.arange(-qmax, qmax + h, h)
    return q, h


@lru_cache(maxsize=64)
def _squeeze_map(n_in: int, n_out: int, r: float) -> np.ndarray:
    """Fock-basis matrix of ``S(r)`` from ``n_in`` to ``n_out`` levels by position-space quadrature.

    ``(S psi)(q) = e^{r/2} psi(e^r q)``; overlaps with Hermite functions are
    taken on a uniform grid fine enough for both bases.
    """
    q, h = _grid(max(n_in, n_out), abs(r))
    h_out = hermite_functions(n_out, q)
    h_in = hermite_functions(n_in, math.exp(r) * q)
    m = math.exp(r / 2.0) * h * (h_out @ h_in.T)
    m.setflags(write=False)
    return m


def dressed_codewords(lattice: GkpLattice, delta: float, cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """All ``d`` codewords on ``lattice`` at ``cutoff`` levels.

    Returns ``(kets, tails)`` where ``kets[i]`` is normalized over the cutoff
    and ``tails[i]`` is the population that lay above it.
    """
    d = lattice.d
    n_in = _working_dim(delta)
    base = square_codewords(d, delta, n_in).astype(complex)
    base /= np.linalg.norm(base, axis=1, keepdims=True)
    n_out = cutoff
    if lattice.r != 0.0:
        base = base * np.exp(-1j * lattice.phi1 * np.arange(n_in))
        sq = _squeeze_map(n_in, max(n_out, 1), float(lattice.r))
        kets = base @ sq.T
        phase = lattice.phi2
    else:
        kets = np.zeros((d, n_out), complex)
        m = min(n_in, n_out)
        kets[:, :m] = base[:, :m]
        phase = lattice.phi1 + lattice.phi2
    kets = kets * np.exp(-1j * phase * np.arange(n_out))
    kept = np.sum(np.abs(kets) ** 2, axis=1)
    tails = np.clip(1.0 - kept, 0.0, None)
    kets = kets / np.sqrt(kept)[:, None]
    return kets, tails


def gkp_state(spec: GkpSpec, cutoff: int, tail_tol: float = 1e-6) -> StateVector:
    """Finite-energy codeword ``R(phi2) S(r) R(phi1) exp(-delta^2 n)|i>_L``, normalized over ``cutoff``."""
    kets, tails = dressed_codewords(spec.lattice, spec.delta, cutoff)
    tail = float(tails[spec.index])
    if tail > tail_tol:
        raise CutoffError(f"population {tail:.3g} above cutoff {cutoff} exceeds {tail_tol:.1g}")
    return StateVector(single_mode(cutoff), kets[spec.index], leakage=tail, leakage_tol=max(tail_tol, 1e-12))


@lru_cache(maxsize=4096)
def _square_moments(d: int, delta: float) -> np.ndarray:
    """``E[x x^T]`` for each normalized square codeword; shape ``(d, 2, 2)``."""
    n_in = _working_dim(delta)
    base = square_codewords(d, delta, n_in)
    base /= np.linalg.norm(base, axis=1, keepdims=True)
    root = np.sqrt(np.arange(1, n_in))
    out = np.zeros((d, 2, 2))
    for i, c in enumerate(base):
        ac = np.append(root * c[1:], 0.0)      # a c
        adc = np.insert(root * c[:-1], 0, 0.0)  # a^dag c
        qc = (ac + adc) / math.sqrt(2)
        pc = (ac - adc) / (1j * math.sqrt(2))
        # codewords are real, so the symmetrized qp moment is Re<q c, p c> = 0 up to roundoff
        qp = np.vdot(qc, pc).real
        out[i] = [[qc @ qc, qp], [qp, np.vdot(pc, pc).real]]
    out.setflags(write=False)
    return out


def codeword_energies(lattice: GkpLattice, delta: float) -> np.ndarray:
    """Mean photon number of each untruncated codeword.

    Second moments ``E[x x^T]`` of the square codewords transform as
    ``M E M^T`` under the dressing, so ``<n> = (tr(M E M^T) - 1)/2``.
    """
    mom = _square_moments(lattice.d, float(delta))
    mat = lattice.matrix
    return 0.5 * (np.einsum("ij,kjl,il->k", mat, mom, mat) - 1.0)


def stabilizer_expectation(state, xi) -> complex:
    """``<T(xi)>`` with ``T(xi) = exp(i xi_p q - i xi_q p) = D((xi_q + i xi_p)/sqrt 2)``."""
    psi = state.amplitudes if isinstance(state, StateVector) else np.asarray(state, dtype=complex)
    if psi.ndim == 2:
        rho = psi
        dim = rho.shape[0]
        t = displacement((xi[0] + 1j * xi[1]) / math.sqrt(2), dim)
        return complex(np.trace(rho @ t))
    dim = psi.size
    t = displacement((xi[0] + 1j * xi[1]) / math.sqrt(2), dim)
    return complex(np.vdot(psi, t @ psi))


def displacement_operator_for(xi, dim: int) -> np.ndarray:
    return displacement((xi[0] + 1j * xi[1]) / math.sqrt(2), dim)


def tune_envelope(lattice: GkpLattice, index, target: float, tol: float = 1e-3,
                  weights=None) -> float:
    """Envelope ``delta`` giving mean photon ``target``.

    ``index`` selects one codeword; pass ``index=None`` with ``weights`` to tune
    the energy of the mixture ``sum_i w_i |i><i|`` instead.  Energy decreases
    monotonically in ``delta``, so a bracketing root solve is used.
    """
    if weights is None:
        w = np.zeros(lattice.d)
        w[index] = 1.0
    else:
        w = np.asarray(weights, float)
        w = w / w.sum()

    def energy(delta):
        return float(w @ codeword_energies(lattice, delta))

    hi_e = energy(DELTA_MAX)
    if target < hi_e - tol:
        raise InfeasibleError(f"target {target} below the minimum energy {hi_e:.4g} on this lattice")
    if abs(target - hi_e) <= tol:
        return DELTA_MAX
    lo = DELTA_MIN
    # smallest delta whose comb fits under the cap
    lo = max(lo, 4.0 / (S_MAX_CAP * math.sqrt(TWO_PI / lattice.d) * lattice.d) + 1e-9)
    lo_e = energy(lo)
    if target > lo_e:
        raise InfeasibleError(f"target {target} above the energy {lo_e:.4g} at the narrowest envelope")
    # energy in delta is smooth; brentq to a tolerance well inside tol
    return float(brentq(lambda x: energy(x) - target, lo, DELTA_MAX, xtol=1e-10, rtol=1e-12))


# ----------------------------------------------------------------------------
# fidelity matcher

@dataclass(frozen=True)
class MatchResult:
    d: int
    lattice: GkpLattice
    delta: float
    weights: tuple[float, ...]
    fidelity: float

    def to_record(self) -> dict:
        lat = self.lattice
        return {
            "d": self.d,
            "v": [float(x) for x in lat.v],
            "u": [float(x) for x in lat.u],
            "angle": lat.angle(),
            "fidelity": float(self.fidelity),
            "weights": [float(x) for x in self.weights],
            "phi1": lat.phi1,
            "r": lat.r,
            "phi2": lat.phi2,
            "delta": self.delta,
            "lattice_kind": lat.name or "general",
        }


def gram(rho: np.ndarray, kets: np.ndarray) -> np.ndarray:
    """``A_ij = <k_i| rho |k_j>``; all mixture fidelities follow from this ``d x d`` matrix."""
    return kets.conj() @ rho @ kets.T


def _fid_from_gram(a: np.ndarray, w: np.ndarray) -> float:
    sw = np.sqrt(np.clip(w, 0.0, None))
    m = sw[:, None] * a * sw[None, :]
    lam = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    return float(np.sum(np.sqrt(np.clip(lam, 0.0, None))) ** 2)


def mixture_fidelity(rho: np.ndarray, kets: np.ndarray, weights) -> float:
    """Fidelity between ``rho`` and ``sum_i w_i |k_i><k_i|``.

    With ``V = [sqrt(w_i) |k_i>]`` the nonzero spectrum of ``sqrt(rho) sigma sqrt(rho)``
    equals that of ``V^dag rho V``, so only a ``d x d`` eigenproblem is needed.
    """
    return _fid_from_gram(gram(rho, kets), np.asarray(weights, float))


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, v.size + 1)
    cond = u - (css - 1.0) / k > 0
    rho = k[cond][-1]
    tau = (css[cond][-1] - 1.0) / rho
    return np.clip(v - tau, 0.0, None)


def optimize_weights(rho: np.ndarray, kets: np.ndarray, iterations: int = 200,
                     step: float = 0.5, a: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Projected gradient ascent of the fidelity over the probability simplex, from uniform weights."""
    a = gram(rho, kets) if a is None else a
    d = a.shape[0]
    w = np.full(d, 1.0 / d)
    f = _fid_from_gram(a, w)
    if d == 1:
        return w, f
    for _ in range(iterations):
        sw = np.sqrt(w)
        m = sw[:, None] * a * sw[None, :]
        lam, vec = np.linalg.eigh(0.5 * (m + m.conj().T))
        lam = np.clip(lam, 1e-14, None)
        # d Tr sqrt(M) = Tr[M^{-1/2} dM]/2 and dM/dw_i touches row and column i
        inv_sqrt = (vec / np.sqrt(lam)) @ vec.conj().T
        safe = np.maximum(sw, 1e-12)
        g = np.real(np.einsum("ij,ji->i", inv_sqrt, a * sw[None, :])) / (2.0 * safe)
        g = 2.0 * math.sqrt(f) * g
        w_new = _project_simplex(w + step * g / max(1.0, np.max(np.abs(g))))
        f_new = _fid_from_gram(a, w_new)
        if f_new >= f:
            converged = f_new - f < 1e-12
            w, f = w_new, f_new
            if converged:
                break
        else:
            step *= 0.5
            if step < 1e-6:
                break
    return w, f


@lru_cache(maxsize=16)
def _simplex_points(d: int, k: int) -> np.ndarray:
    pts = [list(c) + [k - sum(c)] for c in product(range(k + 1), repeat=d - 1) if sum(c) <= k]
    return np.array(pts, float) / k


def simplex_grid_weights(rho: np.ndarray, kets: np.ndarray, step: float = 0.05,
                         a: np.ndarray | None = None):
    """Exhaustive search over a simplex grid; cross-check for ``d <= 3``."""
    a = gram(rho, kets) if a is None else a
    pts = _simplex_points(a.shape[0], int(round(1.0 / step)))
    sw = np.sqrt(pts)
    m = sw[:, :, None] * a[None] * sw[:, None, :]
    lam = np.linalg.eigvalsh(0.5 * (m + np.conj(np.swapaxes(m, 1, 2))))
    fids = np.sum(np.sqrt(np.clip(lam, 0.0, None)), axis=1) ** 2
    j = int(np.argmax(fids))
    return pts[j], float(fids[j])


@dataclass(frozen=True)
class ScanConfig:
    dims: tuple[int, ...] = tuple(range(1, 11))
    phis: tuple[float, ...] = tuple(np.arange(7) * math.pi / 12)
    rs: tuple[float, ...] = tuple(np.round(np.arange(9) * 0.1, 10))
    include_special: bool = True
    energy_tol: float = 1e-3
    weight_iterations: int = 200
    grid_check: bool = True
    refine_rounds: int = 2

    def lattices(self, d: int):
        seen = set()
        for r in self.rs:
            phi1s = self.phis if r != 0 else (0.0,)
            for phi1 in phi1s:
                for phi2 in self.phis:
                    key = (round(phi1, 9), round(float(r), 9), round(phi2, 9))
                    if key in seen:
                        continue
                    seen.add(key)
                    yield GkpLattice(d, float(phi1), float(r), float(phi2),
                                     name="square" if r == 0 else "rectangular" if phi1 == 0 else "")
        if self.include_special:
            hexa = GkpLattice.hexagonal(d)
            for phi2 in self.phis:
                yield GkpLattice(d, hexa.phi1, hexa.r, hexa.phi2 + phi2, name="hexagonal")


def _best_over_rotations(m, kets0, lats, scan, phases):
    best = None
    for lat in lats:
        extra = lat.phi2 if lat.r != 0 else lat.phi1 + lat.phi2
        kets = kets0 * np.exp(-1j * extra * phases)
        a = gram(m, kets)
        w, f = optimize_weights(m, kets, iterations=scan.weight_iterations, a=a)
        if scan.grid_check and lat.d <= 3:
            wg, fg = simplex_grid_weights(m, kets, a=a)
            if fg > f:
                w, f = wg, fg
        if best is None or f > best[2] + 1e-12:
            best = (lat, w, f)
    return best


def gkp_fidelity_match(rho, scan: ScanConfig | None = None) -> MatchResult:
    """Best fidelity of ``rho`` with a GKP-diagonal mixture over dimensions, lattices and weights.

    For each ``(d, lattice)`` the envelope is first tuned so the uniform
    codeword mixture carries the mean photon number of ``rho``; it is then
    re-tuned to the best weights found, for ``scan.refine_rounds`` rounds.
    The final rotation only rephases codewords, so it is swept without
    rebuilding them.
    """
    scan = scan or ScanConfig()
    m = rho.matrix if hasattr(rho, "matrix") else np.asarray(rho, dtype=complex)
    dim = m.shape[0]
    nbar = float(np.real(np.trace(m @ np.diag(np.arange(dim)))))
    best: MatchResult | None = None
    phases = np.arange(dim)
    for d in scan.dims:
        groups: dict[tuple, list[GkpLattice]] = {}
        for lat in scan.lattices(d):
            key = (round(lat.phi1, 12), round(lat.r, 12)) if lat.r != 0 else (0.0, 0.0)
            groups.setdefault(key, []).append(lat)
        for lats in groups.values():
            base = GkpLattice(d, lats[0].phi1 if lats[0].r != 0 else 0.0, lats[0].r, 0.0)
            weights = np.ones(d)
            seen = set()
            for _ in range(1 + scan.refine_rounds):
                try:
                    delta = tune_envelope(base, None, nbar, tol=scan.energy_tol, weights=weights)
                except (InfeasibleError, EnvelopeError):
                    break
                if round(delta, 9) in seen:
                    break
                seen.add(round(delta, 9))
                kets0, _ = dressed_codewords(base, delta, dim)
                lat, w, f = _best_over_rotations(m, kets0, lats, scan, phases)
                if best is None or f > best.fidelity + 1e-12:
                    best = MatchResult(d, lat, delta, tuple(float(x) for x in w), f)
                weights = np.asarray(w, float)
    if best is None:
        raise InfeasibleError("no scan point could match the state's energy")
    return best
