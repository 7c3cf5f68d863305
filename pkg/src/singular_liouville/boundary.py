"""Dirichlet harmonic extension on star-shaped domains.

A harmonic function ``u`` with boundary data ``g`` is written as ``Re Phi``
with ``Phi`` holomorphic and represented by a real double-layer density.
The second-kind boundary equation is discretized with the trapezoid rule
(spectrally accurate for smooth periodic data), the density is turned into
boundary values ``Phi_+`` once, and interior values come from the
barycentric Cauchy formula, which stays accurate arbitrarily close to the
boundary.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.linalg as sla

__all__ = ["HarmonicExtension", "harmonic_extension"]

TAYLOR_TERMS = 60


def _fft_derivative_matrix(n: int) -> np.ndarray:
    k = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    eye = np.eye(n)
    return np.real(np.fft.ifft(1j * k[:, None] * np.fft.fft(eye, axis=0), axis=0))


class HarmonicExtension:
    """Boundary map ``g -> Phi_+`` for a curve ``zeta(t) = r(t) e^{it}``.

    Parameters
    ----------
    radius_fn, dradius_fn : callable
        ``r(theta)`` and ``r'(theta)``.
    n : int
        Number of boundary nodes.
    """

    def __init__(self, radius_fn: Callable, dradius_fn: Callable, n: int = 512):
        self.n = n
        t = 2 * np.pi * np.arange(n) / n
        r, dr = radius_fn(t), dradius_fn(t)
        e = np.exp(1j * t)
        self.t = t
        self.zeta = r * e
        self.dzeta = (dr + 1j * r) * e
        self.r_in = float(np.min(np.abs(self.zeta)))

        diff = self.zeta[None, :] - self.zeta[:, None]  # [i, j] = zeta_j - zeta_i
        np.fill_diagonal(diff, 1.0)
        cauchy = self.dzeta[None, :] / diff
        np.fill_diagonal(cauchy, 0.0)
        kern = cauchy.imag / n
        system = np.eye(n) + kern - np.diag(kern.sum(axis=1))
        lu = sla.lu_factor(system)
        d = _fft_derivative_matrix(n)
        # Phi_+ = mu + (1/(i n)) [sum_j (mu_j - mu_i) C_ij + mu'(t_i)]
        to_phi = np.eye(n) + (cauchy - np.diag(cauchy.sum(axis=1)) + d) / (1j * n)
        self._boundary_map = to_phi @ sla.lu_solve(lu, np.eye(n))

    def boundary_values(self, g: np.ndarray) -> np.ndarray:
        """Holomorphic boundary values ``Phi_+`` for real data ``g`` at the nodes.

        ``g`` may have shape ``(n,)`` or ``(n, m)`` for ``m`` data sets.
        """
        return self._boundary_map @ np.asarray(g, dtype=float)

    def data(self, g_fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return self.boundary_values(g_fn(self.zeta))

    def evaluate(self, phi_b: np.ndarray, z: np.ndarray, chunk: int = 4096) -> np.ndarray:
        """Complex ``Phi(z)`` for interior points, from boundary values ``phi_b``.

        Points well inside (``|z|`` below half the inradius) use the Taylor
        series at 0, whose truncation error there is below ``2^-TAYLOR_TERMS``;
        the rest use the barycentric Cauchy formula.
        """
        z = np.asarray(z, dtype=complex)
        shape = z.shape
        zf = z.ravel()
        phi_b = np.asarray(phi_b)
        multi = phi_b.ndim == 2
        out = np.empty((zf.size,) + phi_b.shape[1:], dtype=complex)
        near = np.abs(zf) < 0.5 * self.r_in
        if np.any(near):
            coef = self._taylor_coefficients(phi_b)
            zz = zf[near]
            acc = np.zeros((zz.size,) + phi_b.shape[1:], dtype=complex)
            zcol = zz[:, None] if multi else zz
            for c in coef[::-1]:
                acc = acc * zcol + c
            out[near] = acc
        far_idx = np.flatnonzero(~near)
        for s in range(0, far_idx.size, chunk):
            sel = far_idx[s:s + chunk]
            zz = zf[sel]
            diff = self.zeta[None, :] - zz[:, None]
            hit = diff == 0
            diff[hit] = 1.0
            w = self.dzeta[None, :] / diff
            num = w @ phi_b
            den = w.sum(axis=1)
            val = num / (den[:, None] if multi else den)
            rows, cols = np.nonzero(hit)
            val[rows] = phi_b[cols]
            out[sel] = val
        return out.reshape(shape + phi_b.shape[1:])

    def _taylor_coefficients(self, phi_b: np.ndarray) -> np.ndarray:
        """``c_k = Phi^(k)(0) / k!`` for ``k < TAYLOR_TERMS``."""
        k = np.arange(TAYLOR_TERMS)[:, None]
        kern = self.dzeta[None, :] / self.zeta[None, :] ** (k + 1) / (1j * self.n)
        return kern @ phi_b

    def extend(self, g_fn: Callable[[np.ndarray], np.ndarray], z: np.ndarray) -> np.ndarray:
        """Real harmonic extension of ``g_fn`` evaluated at ``z``."""
        return self.evaluate(self.data(g_fn), z).real

    def taylor(self, phi_b: np.ndarray, k_max: int) -> np.ndarray:
        """``Phi^(k)(0)`` for ``k = 0..k_max`` by the trapezoid Cauchy integral."""
        out = []
        for k in range(k_max + 1):
            s = np.sum(phi_b * self.dzeta / self.zeta ** (k + 1), axis=-1) if phi_b.ndim == 1 else \
                np.sum(phi_b * (self.dzeta / self.zeta ** (k + 1))[:, None], axis=0)
            out.append(math.factorial(k) * s / (1j * self.n))
        return np.array(out)


@lru_cache(maxsize=16)
def harmonic_extension(domain, n: int = 512) -> HarmonicExtension:
    """Cached :class:`HarmonicExtension` for a (hashable) domain model."""
    return HarmonicExtension(domain.radius_fn, domain.dradius_fn, n)
