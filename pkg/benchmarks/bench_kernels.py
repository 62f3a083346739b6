"""Time the compiled kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py``; needs the extension built.
"""

import timeit

import numpy as np

from vqt import _kernels_py
from vqt.gates import displacement

try:
    from vqt import _kernels
except ImportError:
    raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")


def cases(rng):
    c = 20
    v = rng.normal(size=(c, c)) + 1j * rng.normal(size=(c, c))
    rho = v @ v.conj().T
    rho /= np.trace(rho)
    grid = np.linspace(-5, 5, 101)
    yield "wigner_grid c=20 101x101", lambda k: k.wigner_grid(rho, grid, grid)

    psi = rng.normal(size=(1, c, c, 2, 32)) + 1j * rng.normal(size=(1, c, c, 2, 32))
    d = np.ascontiguousarray(displacement(0.4 + 0.3j, c))
    out = np.empty_like(psi)
    yield "ecd_apply (1,20,20,2,32)", lambda k: k.ecd_apply(psi, d, out)

    q = rng.normal(size=(4000, 2, 64)) + 1j * rng.normal(size=(4000, 2, 64))
    u = np.array([[0.6, 0.8j], [0.8j, 0.6]])
    qout = np.empty_like(q)
    yield "qubit_apply (4000,2,64)", lambda k: k.qubit_apply(q, u, qout)


def main():
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'python ms':>11}{'cython ms':>11}{'speedup':>9}")
    for name, fn in cases(rng):
        t = {}
        for label, mod in (("py", _kernels_py), ("cy", _kernels)):
            n, total = timeit.Timer(lambda: fn(mod)).autorange()
            t[label] = min(timeit.repeat(lambda: fn(mod), number=n, repeat=3)) / n * 1e3
        print(f"{name:<28}{t['py']:11.3f}{t['cy']:11.3f}{t['py'] / t['cy']:9.2f}")


if __name__ == "__main__":
    main()
