"""Random and structured test instances for the simulators."""

from __future__ import annotations

import numpy as np


def _simplex(rng: np.random.Generator, shape, alpha: float) -> np.ndarray:
    return rng.dirichlet(np.full(shape[-1], alpha), size=shape[:-1])


def random_markov_xym(rng: np.random.Generator, nx: int = 3, ny: int = 3, nm: int = 3,
                      alpha: float = 1.0) -> np.ndarray:
    """``p(x) p(y|x) p(m|x)`` with Dirichlet(alpha) factors, shape (nx, ny, nm)."""
    px = rng.dirichlet(np.full(nx, alpha))
    py_x = _simplex(rng, (nx, ny), alpha)
    pm_x = _simplex(rng, (nx, nm), alpha)
    return px[:, None, None] * py_x[:, :, None] * pm_x[:, None, :]


def random_two_sender(rng: np.random.Generator, nx: int = 2, ny: int = 2, nz: int = 1,
                      nm: int = 2, nn: int = 2, alpha: float = 1.0) -> np.ndarray:
    """``p(x, y, z) p(m|x) p(n|y)``, shape (nx, ny, nz, nm, nn).

    Both messages are generated locally, so ``M − X − (Y, Z, N)`` and
    ``N − Y − (X, Z, M)`` hold.
    """
    pxyz = rng.dirichlet(np.full(nx * ny * nz, alpha)).reshape(nx, ny, nz)
    pm_x = _simplex(rng, (nx, nm), alpha)
    pn_y = _simplex(rng, (ny, nn), alpha)
    return (pxyz[:, :, :, None, None] * pm_x[:, None, None, :, None]
            * pn_y[None, :, None, None, :])


def random_one_sender(rng: np.random.Generator, nx: int = 2, ny: int = 1, nz: int = 1,
                      nm: int = 2, nn: int = 2, alpha: float = 1.0) -> np.ndarray:
    """``p(x) p(y, z | x) p(m, n | x)``, shape (nx, ny, nz, nm, nn)."""
    px = rng.dirichlet(np.full(nx, alpha))
    pyz_x = _simplex(rng, (nx, ny * nz), alpha).reshape(nx, ny, nz)
    pmn_x = _simplex(rng, (nx, nm * nn), alpha).reshape(nx, nm, nn)
    return px[:, None, None, None, None] * pyz_x[:, :, :, None, None] * pmn_x[:, None, None, :, :]


def dsbc_table(n: int, crossover: float) -> np.ndarray:
    """Joint table of a doubly symmetric binary source on n-bit blocks.

    ``p(x, y) = 2^-n · p^d (1−p)^(n−d)`` with ``d`` the Hamming distance; the
    table has ``4**n`` cells, so keep ``n`` small.
    """
    size = 1 << n
    v = np.arange(size)
    d = np.array([bin(i).count("1") for i in range(size)])[v[:, None] ^ v[None, :]]
    return (crossover ** d) * ((1 - crossover) ** (n - d)) / size
