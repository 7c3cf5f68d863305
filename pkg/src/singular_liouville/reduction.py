"""Finite-dimensional layer: hypotheses, the constant A, the reduced map and moment expansions.

The reduced map is

    F(B) = int_{R^2} |y|^(2 alpha) (y^alpha - B) / (1 + |y^alpha - B|^2)^3 dy,

identified with a 2-vector through real and imaginary parts.  Its Jacobian
is integrated from the analytically differentiated integrand.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import beta as beta_fn

from .bubble import BubbleAnsatz, BubbleParams, Projection, kernel_eval, weight_eval
from .discretization import Discretization
from .geometry import DomainModel, KernelData, PotentialModel, symmetry_check
from .quadrature import DecayProfile, integrate_domain, integrate_plane

__all__ = [
    "AssumptionReport",
    "ReducedMapValue",
    "MultiplierForm",
    "check_assumptions",
    "constant_A",
    "reduced_map_F",
    "jacobian_at_zero",
    "jacobian_beta_oracle",
    "moment_integrals",
    "quadratic_moment_integrals",
    "plane_weighted_kernel_moment",
    "multiplier_leading_form",
    "multiplier_model",
    "MOMENT_COEFFICIENT",
    "quadratic_moment_model",
    "RootNotFoundError",
    "BRoot",
    "solve_for_b",
]

FOUR_PI = 4 * np.pi


def MOMENT_COEFFICIENT(alpha: int) -> float:
    """Leading coefficient ``c`` in ``int w PZ^1 Re(xi x^alpha) = c delta^alpha Re(xi) + ...``.

    Direct integration gives ``2 pi alpha``.
    """
    return 2 * np.pi * alpha


# ---------------------------------------------------------------------------
# hypotheses
# ---------------------------------------------------------------------------

@dataclass
class AssumptionReport:
    theorem_case: str  # "thm1", "thm2" or "none"
    gradient_condition_residual: float
    A_value: float
    symmetry_ok: bool
    alpha: int
    reasons: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"theorem_case": self.theorem_case,
                "gradient_condition_residual": self.gradient_condition_residual,
                "A_value": self.A_value, "symmetry_ok": self.symmetry_ok, "alpha": self.alpha,
                "reasons": list(self.reasons)}


def constant_A(pot: PotentialModel, kernels: KernelData) -> float:
    """``A = 4 pi^2 (alpha+1)^2 |F_0'(0)|^2 - (a11 + a22) / (4 a(0))``."""
    a = kernels.alpha
    h1 = abs(kernels.holo_dx[1])
    return float(4 * np.pi**2 * (a + 1) ** 2 * h1**2 - (pot.a11 + pot.a22) / (4 * pot.a0))


def _domain_symmetric(domain: DomainModel, ell: int) -> bool:
    if domain.is_disk:
        return True
    return symmetry_check(domain, ell)


def check_assumptions(pot: PotentialModel, kernels: KernelData, N: int, tol: float = 1e-8) -> AssumptionReport:
    """Classify the data against the two existence settings and compute ``A``.

    ``thm1``: ``alpha >= 3``, ``grad a(0) + 4 pi (alpha+1) a(0) grad_x H(0,0) = 0`` and ``A != 0``.
    ``thm2``: ``alpha = 2``, the domain is invariant under rotation by ``2 pi / l``
    for some declared ``l >= 3``, ``grad a(0) = 0``, ``a11 = a22`` and ``Delta a(0) != 0``.
    """
    if N < 1 or int(N) != N:
        raise ValueError("N must be a positive integer")
    alpha = int(N) + 1
    if kernels.alpha != alpha:
        raise ValueError(f"kernel data built for alpha={kernels.alpha}, expected {alpha}")
    if kernels.holo_dx is None or len(kernels.holo_dx) < 3:
        raise ValueError("missing derivative data")
    grad_res = float(np.linalg.norm(pot.grad_a0 + FOUR_PI * (alpha + 1) * pot.a0 * kernels.grad_H0))
    A = constant_A(pot, kernels)
    reasons = []
    domain = kernels.domain
    ell = domain.symmetry_order
    sym_ok = domain.is_disk or (ell is not None and ell >= 3 and symmetry_check(domain, ell))
    case = "none"
    if alpha >= 3:
        if grad_res > tol:
            reasons.append("gradient condition fails")
        if abs(A) <= tol:
            reasons.append("A vanishes")
        if not reasons:
            case = "thm1"
    else:
        if alpha != 2:
            reasons.append("alpha must be >= 2")
        if not sym_ok:
            reasons.append("domain lacks a declared rotation symmetry of order >= 3")
        if np.linalg.norm(pot.grad_a0) > tol:
            reasons.append("grad a(0) != 0")
        if abs(pot.a11 - pot.a22) > tol or abs(pot.a12) > tol:
            reasons.append("a11 != a22")
        if abs(pot.laplacian0) <= tol:
            reasons.append("Laplacian of a vanishes at 0")
        if not reasons:
            case = "thm2"
    if case == "none":
        warnings.warn("no existence setting applies: " + "; ".join(reasons), stacklevel=2)
    return AssumptionReport(case, grad_res, A, bool(sym_ok), alpha, reasons)


# ---------------------------------------------------------------------------
# reduced map
# ---------------------------------------------------------------------------

@dataclass
class ReducedMapValue:
    F: np.ndarray
    J: np.ndarray | None = None
    error_estimate: float = 0.0


def reduced_map_F(B, alpha: int, tol: float = 1e-11, jacobian: bool = True) -> ReducedMapValue:
    """``F(B)`` and (optionally) its Jacobian ``[[dF1/dB1, dF1/dB2], [dF2/dB1, dF2/dB2]]``."""
    if alpha < 2:
        raise ValueError("alpha must be >= 2")
    Bc = complex(B[0], B[1]) if np.ndim(B) else complex(B)
    sc = max(1.0, abs(Bc) ** (1.0 / alpha))
    wexp = 2 * alpha

    def f(y):
        u = y**alpha - Bc
        return np.abs(y) ** wexp * u / (1 + np.abs(u) ** 2) ** 3

    r = integrate_plane(f, DecayProfile(3 * alpha, True), tol, scale=sc)
    Fv = np.array([r.value.real, r.value.imag]) if isinstance(r.value, complex) else np.array([r.value, 0.0])
    err = r.error_estimate
    J = None
    if jacobian:
        def d1(y):
            u = y**alpha - Bc
            q = 1 + np.abs(u) ** 2
            return np.abs(y) ** wexp * (-q + 6 * u.real * u) / q**4

        def d2(y):
            u = y**alpha - Bc
            q = 1 + np.abs(u) ** 2
            return np.abs(y) ** wexp * (-1j * q + 6 * u.imag * u) / q**4

        c1 = complex(integrate_plane(d1, DecayProfile(4 * alpha, True), tol, scale=sc).value)
        c2 = complex(integrate_plane(d2, DecayProfile(4 * alpha, True), tol, scale=sc).value)
        J = np.array([[c1.real, c2.real], [c1.imag, c2.imag]])
    return ReducedMapValue(Fv, J, err)


def jacobian_at_zero(alpha: int, tol: float = 1e-12) -> float:
    """Common diagonal entry ``(1/alpha) int |y|^(2/alpha) (2|y|^2 - 1) / (1 + |y|^2)^4 dy``."""
    if alpha < 2:
        raise ValueError("alpha must be >= 2")

    def f(y):
        r2 = np.abs(y) ** 2
        return r2 ** (1.0 / alpha) * (2 * r2 - 1) / (1 + r2) ** 4

    return float(integrate_plane(f, DecayProfile(6 - 2.0 / alpha, True), tol).value) / alpha


def jacobian_beta_oracle(alpha: int) -> float:
    """Closed form ``(pi/alpha) [2 B(2 + 1/alpha, 2 - 1/alpha) - B(1 + 1/alpha, 3 - 1/alpha)]``."""
    s = 1.0 / alpha
    return float(np.pi / alpha * (2 * beta_fn(2 + s, 2 - s) - beta_fn(1 + s, 3 - s)))


# ---------------------------------------------------------------------------
# moment integrals over the domain
# ---------------------------------------------------------------------------

def _integrate_over_domain(f: Callable, domain: DomainModel, disc: Discretization | None,
                           scale: float, tol: float) -> float:
    if disc is not None:
        return disc.integrate_q(f(disc.quad_points))
    return float(np.real(integrate_domain(f, domain.radius_fn, tol, scale=scale).value))


def _projected_kernel(params: BubbleParams, domain: DomainModel, j: int) -> Callable:
    proj = Projection(domain, [lambda x: kernel_eval(params, j, x)])
    return lambda x: proj(x)[..., 0]


def moment_integrals(params: BubbleParams, disc: Discretization | None, j: int, gamma: int,
                     xi: complex = 1.0, part: str = "re", domain: DomainModel | None = None,
                     tol: float = 1e-13) -> float:
    """``int_Omega w PZ^j Re(xi x^gamma) dx`` (or ``Im`` with ``part="im"``).

    With ``disc`` the mesh quadrature is used; with ``disc=None`` the
    integral is computed adaptively over ``domain``.
    """
    if j not in (1, 2):
        raise ValueError("j must be 1 or 2")
    if not 0 <= gamma <= params.alpha:
        raise ValueError("gamma must lie in 0..alpha")
    domain = disc.domain if disc is not None else domain
    pz = _projected_kernel(params, domain, j)
    take = np.real if part == "re" else np.imag

    def f(x):
        return weight_eval(params, x) * pz(x) * take(xi * x**gamma)

    return _integrate_over_domain(f, domain, disc, params.delta, tol)


def quadratic_moment_integrals(params: BubbleParams, disc: Discretization | None, j: int,
                               xi1: complex, xi2: complex, part: str = "re",
                               domain: DomainModel | None = None, tol: float = 1e-13) -> float:
    """``int_Omega w PZ^j Re(xi1 x) Re(xi2 x) dx`` (``part="im"``: the Im * Im variant)."""
    if params.alpha < 2:
        raise ValueError("alpha must be >= 2")
    domain = disc.domain if disc is not None else domain
    pz = _projected_kernel(params, domain, j)
    take = np.real if part == "re" else np.imag

    def f(x):
        return weight_eval(params, x) * pz(x) * take(xi1 * x) * take(xi2 * x)

    return _integrate_over_domain(f, domain, disc, params.delta, tol)


def plane_weighted_kernel_moment(params: BubbleParams, j: int, tol: float = 1e-12) -> float:
    """``int_{R^2} |x|^(2 alpha) e^W Z^j dx = 8 alpha^2 delta^2 F_j(delta^-alpha b)``."""
    F = reduced_map_F(params.scaled_b, params.alpha, tol, jacobian=False).F
    return 8 * params.alpha**2 * params.delta**2 * F[j - 1]


def quadratic_moment_model(params: BubbleParams, j: int, xi1: complex, xi2: complex,
                           part: str = "re", extra_coefficient: float | None = None) -> float:
    """Leading terms of :func:`quadratic_moment_integrals`.

    ``(1/2) <xi1, xi2> int_{R^2} |x|^(2 alpha) e^W Z^j`` plus, for ``alpha = 2``,
    the quadratic-mode contribution ``(c/2) delta^2 (+/-) Re or Im(xi1 xi2)``
    with ``c`` the leading moment coefficient (default :func:`MOMENT_COEFFICIENT`).
    """
    a = params.alpha
    inner = (xi1 * np.conj(xi2)).real
    base = 0.5 * inner * plane_weighted_kernel_moment(params, j)
    if a != 2:
        return base
    c = MOMENT_COEFFICIENT(a) if extra_coefficient is None else extra_coefficient
    p = xi1 * xi2
    sign = 1.0 if part == "re" else -1.0
    extra = 0.5 * c * params.delta**2 * (p.real if j == 1 else -p.imag)
    return base + sign * extra


# ---------------------------------------------------------------------------
# multiplier expansion
# ---------------------------------------------------------------------------

@dataclass
class MultiplierForm:
    """Projected residual integrals against ``PZ^1, PZ^2`` and their models."""

    computed: np.ndarray
    model: np.ndarray
    model_unscaled: np.ndarray
    A: float
    delta: float

    @property
    def remainder(self) -> np.ndarray:
        return self.computed - self.model


def multiplier_model(A: float, params: BubbleParams, F: np.ndarray | None = None) -> np.ndarray:
    """``8 alpha^2 A delta^2 F(delta^-alpha b)``: leading part of the projected residual."""
    if F is None:
        F = reduced_map_F(params.scaled_b, params.alpha, jacobian=False).F
    return 8 * params.alpha**2 * A * params.delta**2 * np.asarray(F)


def multiplier_leading_form(params_or_ansatz, lam: float | None = None, pot: PotentialModel | None = None,
                            kernels: KernelData | None = None, disc: Discretization | None = None,
                            j: int | None = None) -> MultiplierForm:
    """``int grad PW . grad PZ^j - lambda int V |x|^(2(alpha-1)) e^{PW} PZ^j`` and its model.

    The first integral equals ``int w PZ^j`` exactly, so the computed value
    is ``int R_lambda PZ^j`` by mesh quadrature with exact projections.
    ``model`` includes the factor ``8 alpha^2`` obtained by rescaling;
    ``model_unscaled`` is ``A delta^2 F_j`` without it.
    """
    if isinstance(params_or_ansatz, BubbleAnsatz):
        ans = params_or_ansatz
    else:
        params = params_or_ansatz
        ans = BubbleAnsatz(disc, kernels, pot, lam, params.b, delta=params.delta)
    A = constant_A(ans.pot, ans.kernels)
    d = ans.disc
    comp = np.array([d.integrate_q(ans.residual_q * ans.PZ_q[k]) for k in (1, 2)])
    F = reduced_map_F(ans.params.scaled_b, ans.alpha, jacobian=False).F
    model = multiplier_model(A, ans.params, F)
    unscaled = A * ans.delta**2 * F
    if j is not None:
        sl = slice(j - 1, j)
        comp, model, unscaled = comp[sl], model[sl], unscaled[sl]
    return MultiplierForm(comp, model, unscaled, A, ans.delta)


# ---------------------------------------------------------------------------
# root of the multiplier map in b
# ---------------------------------------------------------------------------

class RootNotFoundError(RuntimeError):
    """No certified zero of the multiplier map; ``scan`` holds the circle samples."""

    def __init__(self, message: str, scan: list, max_multiplier: float = float("nan")):
        super().__init__(message)
        self.scan = scan
        self.max_multiplier = max_multiplier


@dataclass
class BRoot:
    b: complex
    state: object
    ansatz: BubbleAnsatz
    certified: bool
    winding: int
    newton_iterations: int
    scan: list


def _winding(values: np.ndarray) -> int | None:
    """Discrete winding number about 0; ``None`` if a step is too coarse to be reliable."""
    ang = np.angle(np.append(values, values[:1]))
    steps = np.angle(np.exp(1j * np.diff(ang)))
    if np.any(np.abs(steps) > 0.9 * np.pi):
        return None
    return int(round(steps.sum() / (2 * np.pi)))


def solve_for_b(lam: float, pot: PotentialModel, kernels: KernelData, disc: Discretization,
                alpha: int | None = None, r: float = 2.0, cfg=None, b_start: complex = 0j,
                require_certificate: bool = True) -> BRoot:
    """Find ``b`` with vanishing multipliers ``c_1 = c_2 = 0``.

    The search set is ``|b| <= r delta^alpha``.  Samples on its boundary are
    compared with the model ``Gram^-1 8 alpha^2 A delta^2 F(delta^-alpha b)``;
    when the discrepancy stays below the model everywhere (and the model
    winds once), a zero exists inside and is located by Newton iteration
    with finite-difference Jacobians.
    """
    from .solver import BorderedOperator, SolverConfig, contraction_solve, worker_count

    cfg = cfg or SolverConfig()
    alpha = alpha or kernels.alpha
    if alpha != kernels.alpha:
        raise ValueError("kernel data was built for a different alpha")
    A = constant_A(pot, kernels)
    from .bubble import delta_from_lambda
    d0 = delta_from_lambda(lam, 0j, pot, kernels, alpha)
    scale = d0**alpha
    tol_c = cfg.b_tol_factor * (2.0 / 3.0) * np.pi * alpha

    def solve_at(b):
        ans = BubbleAnsatz(disc, kernels, pot, lam, b, min_nodes=cfg.min_nodes)
        st = contraction_solve(ans, cfg, BorderedOperator(ans))
        return ans, st

    scan = []
    cvals, mvals = [], []
    circle = [r * scale * np.exp(2j * np.pi * k / cfg.n_circle) for k in range(cfg.n_circle)]
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        solved = list(pool.map(solve_at, circle))
    for b, (ans, st) in zip(circle, solved):
        model = np.linalg.solve(ans.gram, multiplier_model(A, ans.params))
        cvals.append(complex(st.c1, st.c2))
        mvals.append(complex(model[0], model[1]))
        scan.append({"b_re": b.real, "b_im": b.imag, "c1": st.c1, "c2": st.c2,
                     "model1": float(model[0]), "model2": float(model[1]), "phi_norm": st.phi_norm})
    cvals, mvals = np.array(cvals), np.array(mvals)
    gap = float(np.max(np.abs(cvals - mvals)))
    floor = float(np.min(np.abs(mvals)))
    wind = _winding(cvals)
    certified = gap < floor and wind is not None and wind != 0
    if require_certificate and not certified:
        raise RootNotFoundError(
            f"degree certificate fails on |b| = {r} delta^alpha: max |c - model| = {gap:.3e}, "
            f"min |model| = {floor:.3e}, winding = {wind}", scan, float(np.max(np.abs(cvals))))

    def vec(st):
        return np.array([st.c1, st.c2])

    b = complex(b_start) if abs(b_start) < r * scale else 0j
    ans, st = solve_at(b)
    its = 0
    while np.linalg.norm(vec(st)) > tol_c:
        if its >= cfg.newton_max_iter:
            raise RootNotFoundError(f"Newton did not converge (|c| = {np.linalg.norm(vec(st)):.3e})",
                                    scan, float(np.max(np.abs(cvals))))
        step = 1e-3 * scale
        J = np.empty((2, 2))
        for i, e in enumerate((1.0, 1j)):
            _, sp_ = solve_at(b + step * e)
            _, sm_ = solve_at(b - step * e)
            J[:, i] = (vec(sp_) - vec(sm_)) / (2 * step)
        db = np.linalg.solve(J, -vec(st))
        b = b + complex(db[0], db[1])
        if abs(b) > r * scale:
            raise RootNotFoundError(f"Newton left the search disk (|b| = {abs(b):.3e})", scan,
                                    float(np.max(np.abs(cvals))))
        ans, st = solve_at(b)
        its += 1
    return BRoot(b, st, ans, bool(certified), wind if wind is not None else 0, its, scan)
