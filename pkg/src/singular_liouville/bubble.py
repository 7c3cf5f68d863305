"""Bubble profiles, their Dirichlet projections and the ansatz residual.

The bubble with exponent ``alpha``, scale ``delta`` and shift ``b`` is

    W(x) = log( 8 alpha^2 delta^(2 alpha) / (delta^(2 alpha) + |x^alpha - b|^2)^2 ),

with weight ``w = |x|^(2(alpha-1)) e^W`` and kernel functions ``Z^0, Z^1, Z^2``.
Projections onto ``H^1_0`` are computed exactly as ``P f = f - harm(f on the
boundary)``: ``-Laplace Pf = -Laplace f`` holds pointwise, and the harmonic
correction comes from the boundary-integral solver, so no mesh error enters
the projected profiles.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .discretization import Discretization, Field, lp_norm
from .geometry import DomainModel, KernelData, PotentialModel, as_complex, regular_part, roots_of_b

__all__ = [
    "BubbleParams",
    "ResolutionError",
    "AssumptionWarning",
    "bubble_eval",
    "weight_eval",
    "kernel_eval",
    "potential_V",
    "delta_from_lambda",
    "Projection",
    "project_bubble",
    "project_kernel",
    "kernel_gram",
    "pw_expansion",
    "gradient_condition_residual",
    "residual_R",
    "BubbleAnsatz",
]

FOUR_PI = 4 * np.pi


class ResolutionError(RuntimeError):
    """The mesh does not resolve the bubble core."""


class AssumptionWarning(UserWarning):
    """The potential does not satisfy the gradient cancellation at 0."""


@dataclass(frozen=True)
class BubbleParams:
    alpha: int
    delta: float
    b: complex = 0j

    def __post_init__(self):
        if int(self.alpha) != self.alpha or self.alpha < 1:
            raise ValueError("alpha must be a positive integer")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        object.__setattr__(self, "b", complex(self.b))

    @property
    def roots(self) -> np.ndarray:
        return roots_of_b(self.b, self.alpha)

    @property
    def d2a(self) -> float:
        """``delta^(2 alpha)``."""
        return self.delta ** (2 * self.alpha)

    @property
    def scaled_b(self) -> complex:
        """``delta^(-alpha) b``, the shift in blown-up coordinates."""
        return self.b / self.delta**self.alpha


def _q(params: BubbleParams, x) -> np.ndarray:
    """``|x^alpha - b|^2``."""
    xc = as_complex(x)
    return np.abs(xc**params.alpha - params.b) ** 2


def bubble_eval(params: BubbleParams, x) -> np.ndarray:
    a, d2a = params.alpha, params.d2a
    return math.log(8 * a * a * d2a) - 2 * np.log(d2a + _q(params, x))


def weight_eval(params: BubbleParams, x) -> np.ndarray:
    """``|x|^(2(alpha-1)) e^W`` in factored form (no log/exp round trip)."""
    a, d2a = params.alpha, params.d2a
    xc = as_complex(x)
    return 8 * a * a * d2a * np.abs(xc) ** (2 * (a - 1)) / (d2a + _q(params, xc)) ** 2


def kernel_eval(params: BubbleParams, j: int, x) -> np.ndarray:
    """``Z^j`` for ``j`` in ``{0, 1, 2}``."""
    xc = as_complex(x)
    a, d2a = params.alpha, params.d2a
    u = xc**a - params.b
    den = d2a + np.abs(u) ** 2
    if j == 0:
        return (d2a - np.abs(u) ** 2) / den
    if j == 1:
        return params.delta**a * u.real / den
    if j == 2:
        return params.delta**a * u.imag / den
    raise ValueError("j must be 0, 1 or 2")


def _h0(kernels: KernelData, x) -> np.ndarray:
    return regular_part(kernels.domain, as_complex(x), 0j)


def potential_V(pot: PotentialModel, kernels: KernelData, x) -> np.ndarray:
    """``V = a exp(-4 pi (alpha - 1) H(x, 0))``."""
    xc = as_complex(x)
    a = kernels.alpha
    if a == 1:
        return pot.a(xc)
    return pot.a(xc) * np.exp(-FOUR_PI * (a - 1) * _h0(kernels, xc))


def sum_H_at_origin(kernels: KernelData, b: complex) -> float:
    return float(sum(regular_part(kernels.domain, 0j, beta) for beta in roots_of_b(b, kernels.alpha)))


def delta_from_lambda(lam: float, b: complex, pot: PotentialModel, kernels: KernelData,
                      alpha: int | None = None) -> float:
    """Concentration scale tied to ``lambda``: ``8 alpha^2 delta^(2 alpha) = lambda V(0) e^(8 pi sum H(0, beta_i))``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    alpha = alpha or kernels.alpha
    if alpha != kernels.alpha:
        raise ValueError("kernel data was built for a different alpha")
    v0 = float(potential_V(pot, kernels, np.array(0j)))
    s = sum_H_at_origin(kernels, b)
    return float((lam * v0 * math.exp(2 * FOUR_PI * s) / (8 * alpha * alpha)) ** (1.0 / (2 * alpha)))


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

class Projection:
    """Exact Dirichlet projections of several profiles on one domain.

    ``profiles`` are callables of complex points; the projection of each is
    the profile minus the harmonic extension of its boundary trace.
    """

    def __init__(self, domain: DomainModel, profiles: Sequence[Callable[[np.ndarray], np.ndarray]]):
        self.domain = domain
        self.profiles = list(profiles)
        self.ext = domain.solver()
        data = np.stack([np.asarray(f(self.ext.zeta), dtype=float) for f in self.profiles], axis=1)
        self.phi_b = self.ext.boundary_values(data)

    def correction(self, x) -> np.ndarray:
        """Harmonic parts, shape ``x.shape + (n_profiles,)``."""
        return self.ext.evaluate(self.phi_b, as_complex(x)).real

    def __call__(self, x) -> np.ndarray:
        xc = as_complex(x)
        prof = np.stack([np.asarray(f(xc), dtype=float) for f in self.profiles], axis=-1)
        out = prof - self.correction(xc)
        on_bd = np.abs(self.domain.level(xc) - 1) < 1e-13
        out[on_bd] = 0.0
        return out


def _count_core_nodes(params: BubbleParams, disc: Discretization) -> int:
    return int(np.sum(_q(params, disc.nodes) <= params.d2a))


def _require_resolution(params: BubbleParams, disc: Discretization, min_nodes: int):
    n = _count_core_nodes(params, disc)
    if n < min_nodes:
        raise ResolutionError(
            f"only {n} nodes inside |x^alpha - b| <= delta^alpha (need {min_nodes}); refine the mesh")
    if not np.all(disc.domain.contains(params.roots, closed=False)):
        raise ValueError("roots of b must lie inside the domain")


def pw_expansion(params: BubbleParams, kernels: KernelData, x) -> np.ndarray:
    """Closed-form model ``W - log(8 alpha^2 delta^(2 alpha)) + 8 pi sum_i H(x, beta_i)``."""
    xc = as_complex(x)
    sh = sum(regular_part(kernels.domain, xc, beta) for beta in params.roots)
    return -2 * np.log(params.d2a + _q(params, xc)) + 2 * FOUR_PI * sh


def project_bubble(params: BubbleParams, disc: Discretization, kernels: KernelData,
                   lam: float | None = None, min_nodes: int = 16) -> tuple[Field, float]:
    """Projected bubble ``PW`` at the mesh nodes and its sup-gap to the closed-form model."""
    _require_resolution(params, disc, min_nodes)
    proj = Projection(disc.domain, [lambda x: bubble_eval(params, x)])
    pw = proj(disc.nodes)[:, 0]
    pts = np.concatenate([disc.nodes, disc.quad_points.ravel()])
    gap = np.max(np.abs(proj(pts)[:, 0] - pw_expansion(params, kernels, pts)))
    return Field(disc, pw, "PW"), float(gap)


def project_kernel(params: BubbleParams, j: int, disc: Discretization,
                   min_nodes: int = 16) -> tuple[Field, float]:
    """``PZ^j`` at the nodes and its sup-gap to ``Z^0 + 1`` (j = 0) or ``Z^j``."""
    _require_resolution(params, disc, min_nodes)
    proj = Projection(disc.domain, [lambda x: kernel_eval(params, j, x)])
    pz = proj(disc.nodes)[:, 0]
    pts = np.concatenate([disc.nodes, disc.quad_points.ravel()])
    model = kernel_eval(params, j, pts) + (1.0 if j == 0 else 0.0)
    gap = np.max(np.abs(proj(pts)[:, 0] - model))
    return Field(disc, pz, f"PZ{j}"), float(gap)


def kernel_gram(params: BubbleParams, disc: Discretization) -> np.ndarray:
    """``[int grad PZ^i . grad PZ^j]`` for i, j in {1, 2}, via ``-Laplace PZ^j = w Z^j``."""
    q = disc.quad_points
    w = weight_eval(params, q)
    z = [kernel_eval(params, j, q) for j in (1, 2)]
    proj = Projection(disc.domain, [lambda x, j=j: kernel_eval(params, j, x) for j in (1, 2)])
    pz = proj(q)
    g = np.array([[disc.integrate_q(w * z[i] * pz[..., j]) for j in range(2)] for i in range(2)])
    return 0.5 * (g + g.T)


def gradient_condition_residual(pot: PotentialModel, kernels: KernelData) -> float:
    """``|grad a(0) + 4 pi (alpha + 1) a(0) grad_x H(0, 0)|``."""
    a = kernels.alpha
    return float(np.linalg.norm(pot.grad_a0 + FOUR_PI * (a + 1) * pot.a0 * kernels.grad_H0))


# ---------------------------------------------------------------------------
# ansatz bundle
# ---------------------------------------------------------------------------

class BubbleAnsatz:
    """All ansatz quantities for one ``(lambda, b)`` on one mesh.

    Values are tabulated at the quadrature points (``*_q``, shape (m, 7)) and
    at the nodes (``*_n``).  Projections are exact, so quadrature is the only
    approximation in integrals of ansatz quantities.
    """

    def __init__(self, disc: Discretization, kernels: KernelData, pot: PotentialModel, lam: float,
                 b: complex = 0j, delta: float | None = None, min_nodes: int = 16):
        self.disc = disc
        self.kernels = kernels
        self.pot = pot
        self.lam = float(lam)
        alpha = kernels.alpha
        if delta is None:
            delta = delta_from_lambda(lam, b, pot, kernels, alpha)
        self.params = BubbleParams(alpha, delta, b)
        _require_resolution(self.params, disc, min_nodes)
        p = self.params
        profiles = [lambda x: bubble_eval(p, x)] + [lambda x, j=j: kernel_eval(p, j, x) for j in range(3)]
        self.projection = Projection(disc.domain, profiles)
        q = disc.quad_points
        self.w_q = weight_eval(p, q)
        self.Z_q = np.stack([kernel_eval(p, j, q) for j in range(3)])
        proj_q = self.projection(q)
        self.PW_q = proj_q[..., 0]
        self.PZ_q = np.moveaxis(proj_q[..., 1:], -1, 0)
        proj_n = self.projection(disc.nodes)
        self.PW_n = proj_n[:, 0]
        self.PZ_n = proj_n[:, 1:].T
        self.V_q = potential_V(pot, kernels, q)
        # lambda V |x|^(2(alpha-1)) e^{PW}; the alpha-power is combined before exponentiation
        self.source_q = self.lam * self.V_q * np.exp(self.PW_q + 2 * (alpha - 1) * np.log(np.abs(q)))

    @property
    def alpha(self) -> int:
        return self.params.alpha

    @property
    def delta(self) -> float:
        return self.params.delta

    @property
    def residual_q(self) -> np.ndarray:
        """``R = w - lambda V |x|^(2(alpha-1)) e^{PW}`` at quadrature points."""
        return self.w_q - self.source_q

    def residual_nodes(self) -> np.ndarray:
        x = self.disc.nodes
        a = self.alpha
        src = self.lam * potential_V(self.pot, self.kernels, x) * np.abs(x) ** (2 * (a - 1)) * np.exp(self.PW_n)
        return weight_eval(self.params, x) - src

    def field(self, name: str) -> Field:
        if name == "PW":
            return Field(self.disc, self.PW_n, "PW")
        if name in ("PZ0", "PZ1", "PZ2"):
            return Field(self.disc, self.PZ_n[int(name[-1])], name)
        raise KeyError(name)

    @cached_property
    def gram(self) -> np.ndarray:
        """``<PZ^i, PZ^j>_{H^1_0} = int w Z^i PZ^j`` for i, j in {1, 2} (exact weak identity)."""
        g = np.empty((2, 2))
        for i in range(2):
            for j in range(2):
                g[i, j] = self.disc.integrate_q(self.w_q * self.Z_q[i + 1] * self.PZ_q[j + 1])
        return 0.5 * (g + g.T)


def residual_R(params: BubbleParams, lam: float, pot: PotentialModel, kernels: KernelData,
               disc: Discretization, p: float = 2.0, check_assumptions: bool = True) -> tuple[Field, float]:
    """Pointwise residual ``R_lambda`` at the nodes and its ``L^p`` norm.

    ``params.delta`` is used as given; pass the value from
    :func:`delta_from_lambda` to reproduce the ansatz.
    """
    if check_assumptions:
        res = gradient_condition_residual(pot, kernels)
        if res > 1e-8:
            warnings.warn(f"gradient cancellation fails at 0 (residual {res:.2e}); "
                          "the residual may decay more slowly", AssumptionWarning, stacklevel=2)
    ans = BubbleAnsatz(disc, kernels, pot, lam, params.b, delta=params.delta)
    r_field = Field(disc, ans.residual_nodes(), "R")
    return r_field, lp_norm(disc, ans.residual_q, p)
