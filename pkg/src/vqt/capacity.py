"""Closed-form capacities and achievable rates for the baseline protocols.

Rates are in qubits per channel use (log base 2).
"""

import math

import numpy as np

DEFAULT_GAIN_GRID = tuple(np.arange(1.0, 20.0 + 1e-9, 0.5))


def g_func(x):
    """Entropy of a thermal state with mean photon ``x``: ``(x+1)log2(x+1) - x log2 x``."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError("g(x) needs x >= 0")
    small = arr < 1e-15
    safe = np.where(small, 1.0, arr)
    val = (safe + 1.0) * np.log2(safe + 1.0) - safe * np.log2(safe)
    val = np.where(small, (arr + 1.0) * np.log2(arr + 1.0), val)
    return float(val) if np.ndim(val) == 0 else val


def pure_loss_capacity(eta: float) -> float:
    """Unconstrained pure-loss capacity ``max(0, log2(eta/(1-eta)))``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmissivity {eta} outside [0, 1]")
    if eta == 1.0:
        return math.inf
    if eta <= 0.5:
        return 0.0
    return math.log2(eta / (1.0 - eta))


def pure_loss_capacity_constrained(eta: float, n: float) -> float:
    """Energy-constrained pure-loss capacity ``max(0, g(eta n) - g((1-eta) n))``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmissivity {eta} outside [0, 1]")
    if n < 0:
        raise ValueError("energy constraint must be >= 0")
    return max(0.0, g_func(eta * n) - g_func((1.0 - eta) * n))


def ea_effective_transmissivity(eta: float, gain: float) -> float:
    """``eta_EA = 1 / (1 + (1-eta)/(eta G))`` for two-mode-squeezing assistance."""
    if gain < 1.0:
        raise ValueError("gain must be >= 1")
    if eta == 0.0:
        return 0.0
    return 1.0 / (1.0 + (1.0 - eta) / (eta * gain))


def tms_ea_rate(eta: float, gain: float, n: float) -> float:
    return pure_loss_capacity_constrained(ea_effective_transmissivity(eta, gain), n)


def tms_ea_best(eta: float, n: float, gains=DEFAULT_GAIN_GRID) -> tuple[float, float]:
    """Best TMS-EA rate over a gain grid; returns ``(rate, gain)``."""
    best = max((tms_ea_rate(eta, g, n), g) for g in gains)
    return best


def additive_noise_D(sigma2: float, n: float) -> float:
    return math.sqrt((2 * n + sigma2 + 1) ** 2 - 4 * n * (n + 1))


def additive_noise_lower_bound(sigma2: float, n: float) -> float:
    """Thermal-input coherent information of the additive-noise channel.

    ``g(n + s2) - g((D' + s2 - 1)/2) - g((D' - s2 - 1)/2)`` with
    ``D' = sqrt((2n + s2 + 1)**2 - 4n(n+1))``.  The raw value is returned and
    may be negative.
    """
    if sigma2 < 0 or n < 0:
        raise ValueError("sigma2 and n must be >= 0")
    d = additive_noise_D(sigma2, n)
    # roundoff can push the arguments a hair below zero near sigma2 = 0
    a = max(0.0, (d + sigma2 - 1) / 2)
    b = max(0.0, (d - sigma2 - 1) / 2)
    return g_func(n + sigma2) - g_func(a) - g_func(b)
