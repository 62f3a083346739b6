"""Pure-numpy implementations of the hot kernels.

Same signatures and results as the compiled ``_kernels`` extension; used when
the extension is not built or ``VQT_PURE_PYTHON=1`` is set.
"""

import numpy as np


def wigner_grid(rho, q, p):
    """Wigner function of ``rho`` on the grid ``q x p``; rows index ``p``."""
    rho = np.asarray(rho, dtype=complex)
    dim = rho.shape[0]
    qq, pp = np.meshgrid(q, p)
    alpha = (qq + 1j * pp) / np.sqrt(2.0)
    # wl[n] holds the n-th element of the current row of displaced-parity
    # matrix elements; rows are generated by the Laguerre recurrence
    wl = [np.exp(-2.0 * np.abs(alpha) ** 2) / np.pi]
    w = np.real(rho[0, 0]) * np.real(wl[0])
    for n in range(1, dim):
        wl.append(2.0 * alpha * wl[n - 1] / np.sqrt(n))
        w = w + 2.0 * np.real(rho[0, n] * wl[n])
    for m in range(1, dim):
        temp = wl[m].copy()
        wl[m] = (2.0 * np.conj(alpha) * temp - np.sqrt(m) * wl[m - 1]) / np.sqrt(m)
        w = w + np.real(rho[m, m] * wl[m])
        for n in range(m + 1, dim):
            temp2 = (2.0 * alpha * wl[n - 1] - np.sqrt(m) * temp) / np.sqrt(n)
            temp = wl[n].copy()
            wl[n] = temp2
            w = w + 2.0 * np.real(rho[m, n] * wl[n])
    return w


def ecd_apply(psi, d, out):
    """``out[:, :, :, 1, :] = d @ psi[..0..]`` and ``out[..0..] = d^dag @ psi[..1..]``.

    ``psi`` and ``out`` are 5-d views shaped ``(L, c, X, 2, Y)``.
    """
    dh = d.conj().T
    for src, dst, mat in ((0, 1, d), (1, 0, dh)):
        block = psi[:, :, :, src, :]
        out[:, :, :, dst, :] = np.einsum("mn,lnxy->lmxy", mat, block, optimize=True)
    return out


def qubit_apply(psi, u, out):
    """Apply a 2x2 matrix along axis 1 of a ``(L, 2, Y)`` view."""
    a0 = psi[:, 0, :]
    a1 = psi[:, 1, :]
    out[:, 0, :] = u[0, 0] * a0 + u[0, 1] * a1
    out[:, 1, :] = u[1, 0] * a0 + u[1, 1] * a1
    return out
