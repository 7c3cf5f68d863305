"""Domains, Green's functions and Taylor data of the regular part.

Conventions
-----------
Points are complex numbers ``x = x1 + i x2``.  For a source ``p`` the regular
part ``H(., p)`` is the harmonic function with boundary values
``(1/2 pi) log|zeta - p|`` and ``G = H + (1/2 pi) log(1/|x - p|)``.
``F_p`` denotes the holomorphic function with ``Re F_p = H(., p)``; its
derivatives at 0 are what the reduction needs.  For ``p = 0`` we store
``holo_dx[k] = F_0^(k)(0)``, so that ``holo_dx[1] = dH/dx1 - i dH/dx2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .boundary import HarmonicExtension, harmonic_extension

__all__ = [
    "DomainModel",
    "DomainError",
    "PoleError",
    "ConditioningError",
    "KernelData",
    "PotentialModel",
    "green",
    "regular_part",
    "holomorphic_derivatives",
    "roots_of_b",
    "sum_over_roots",
    "sum_over_roots_expansion_check",
    "symmetry_check",
]

TWO_PI = 2 * np.pi


class DomainError(ValueError):
    """A point lies outside the closed domain."""


class PoleError(ValueError):
    """Green's function evaluated at its pole."""


class ConditioningError(RuntimeError):
    """Derivative extraction disagrees between two extraction radii."""


@dataclass(frozen=True)
class DomainModel:
    """Star-shaped planar domain ``{s r(theta) e^{i theta} : 0 <= s < 1}``.

    ``fourier_cos[k]`` and ``fourier_sin[k]`` multiply ``cos k theta`` and
    ``sin k theta``; ``fourier_sin[0]`` is ignored.  Disks are kept as their
    own kinds so that closed-form kernels can be used.
    """

    kind: str = "unit_disk"
    radius: float = 1.0
    fourier_cos: tuple = (1.0,)
    fourier_sin: tuple = ()
    symmetry_order: int | None = None
    n_boundary: int = 512

    def __post_init__(self):
        if self.kind not in ("unit_disk", "scaled_disk", "curve"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "unit_disk" and self.radius != 1.0:
            raise ValueError("unit_disk has radius 1")
        if self.kind != "curve":
            object.__setattr__(self, "fourier_cos", (float(self.radius),))
            object.__setattr__(self, "fourier_sin", ())
        else:
            object.__setattr__(self, "fourier_cos", tuple(float(c) for c in self.fourier_cos))
            object.__setattr__(self, "fourier_sin", tuple(float(c) for c in self.fourier_sin))
        theta = np.linspace(0, TWO_PI, 2048, endpoint=False)
        if np.min(self.radius_fn(theta)) <= 0:
            raise ValueError("boundary radius must stay positive (0 must be interior)")
        if self.symmetry_order is not None and self.symmetry_order < 1:
            raise ValueError("symmetry_order must be >= 1")

    # -- constructors -------------------------------------------------
    @classmethod
    def unit_disk(cls) -> "DomainModel":
        return cls("unit_disk")

    @classmethod
    def scaled_disk(cls, radius: float) -> "DomainModel":
        return cls("scaled_disk", radius=float(radius))

    @classmethod
    def curve(cls, fourier_cos: Sequence[float], fourier_sin: Sequence[float] = (),
              symmetry_order: int | None = None, n_boundary: int = 512) -> "DomainModel":
        return cls("curve", fourier_cos=tuple(fourier_cos), fourier_sin=tuple(fourier_sin),
                   symmetry_order=symmetry_order, n_boundary=n_boundary)

    @classmethod
    def from_config(cls, cfg: dict | str) -> "DomainModel":
        """Build from ``{"kind": "unit_disk"}``, ``{"kind": "scaled_disk", "radius": R}``
        or ``{"kind": "curve", "fourier_cos": [...], "fourier_sin": [...]}``."""
        if isinstance(cfg, str):
            cfg = json.loads(cfg)
        kind = cfg.get("kind")
        sym = cfg.get("symmetry_order")
        if kind == "unit_disk":
            return cls("unit_disk", symmetry_order=sym)
        if kind == "scaled_disk":
            return cls("scaled_disk", radius=float(cfg["radius"]), symmetry_order=sym)
        if kind == "curve":
            return cls("curve", fourier_cos=tuple(cfg["fourier_cos"]),
                       fourier_sin=tuple(cfg.get("fourier_sin", ())), symmetry_order=sym,
                       n_boundary=int(cfg.get("n_boundary", 512)))
        raise ValueError(f"unknown domain kind {kind!r}")

    def to_spec(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == "scaled_disk":
            out["radius"] = self.radius
        if self.kind == "curve":
            out["fourier_cos"] = list(self.fourier_cos)
            out["fourier_sin"] = list(self.fourier_sin)
        if self.symmetry_order is not None:
            out["symmetry_order"] = self.symmetry_order
        return out

    # -- geometry -----------------------------------------------------
    @property
    def is_disk(self) -> bool:
        return self.kind in ("unit_disk", "scaled_disk")

    def radius_fn(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = np.full_like(theta, self.fourier_cos[0])
        for k, c in enumerate(self.fourier_cos[1:], start=1):
            r = r + c * np.cos(k * theta)
        for k, s in enumerate(self.fourier_sin):
            if k:
                r = r + s * np.sin(k * theta)
        return r

    def dradius_fn(self, theta):
        theta = np.asarray(theta, dtype=float)
        d = np.zeros_like(theta)
        for k, c in enumerate(self.fourier_cos[1:], start=1):
            d = d - k * c * np.sin(k * theta)
        for k, s in enumerate(self.fourier_sin):
            if k:
                d = d + k * s * np.cos(k * theta)
        return d

    def boundary_points(self, n: int) -> np.ndarray:
        t = TWO_PI * np.arange(n) / n
        return self.radius_fn(t) * np.exp(1j * t)

    def level(self, x) -> np.ndarray:
        """``|x| / r(arg x)``: < 1 inside, = 1 on the boundary."""
        x = np.asarray(x, dtype=complex)
        return np.abs(x) / self.radius_fn(np.angle(x))

    def contains(self, x, closed: bool = True, tol: float = 1e-12) -> np.ndarray:
        lv = self.level(x)
        return lv <= 1 + tol if closed else lv < 1 - tol

    def inradius(self) -> float:
        theta = np.linspace(0, TWO_PI, 4096, endpoint=False)
        pts = self.radius_fn(theta) * np.exp(1j * theta)
        return float(np.min(np.abs(pts)))

    def solver(self) -> HarmonicExtension:
        return harmonic_extension(self, self.n_boundary)


def as_complex(x) -> np.ndarray:
    """Accept complex arrays, ``(..., 2)`` real arrays or 2-tuples."""
    a = np.asarray(x)
    if np.iscomplexobj(a):
        return a.astype(complex)
    if a.ndim >= 1 and a.shape[-1] == 2:
        return a[..., 0] + 1j * a[..., 1]
    return a.astype(complex)


def _check_inside(domain: DomainModel, x: np.ndarray):
    if not np.all(domain.contains(x, closed=True, tol=1e-9)):
        raise DomainError("point outside the domain")


@lru_cache(maxsize=256)
def _source_boundary_values(domain: DomainModel, p: complex) -> np.ndarray:
    ext = domain.solver()
    return ext.boundary_values(np.log(np.abs(ext.zeta - p)) / TWO_PI)


def regular_part(domain: DomainModel, x, p) -> np.ndarray | float:
    """Regular part ``H(x, p)``; vectorized in ``x`` for a single source ``p``."""
    xc = as_complex(x)
    pc = complex(as_complex(p))
    _check_inside(domain, xc)
    _check_inside(domain, np.array(pc))
    if domain.is_disk:
        R = domain.radius
        val = (np.log(R) + np.log(np.abs(1 - np.conj(pc) * xc / R**2))) / TWO_PI
    else:
        phi_b = _source_boundary_values(domain, pc)
        val = domain.solver().evaluate(phi_b, xc).real
    return float(val) if np.ndim(val) == 0 else val


def green(domain: DomainModel, x, p) -> np.ndarray | float:
    """Dirichlet Green's function ``G(x, p)`` of ``-Laplace`` on ``domain``."""
    xc = as_complex(x)
    pc = complex(as_complex(p))
    if np.any(xc == pc):
        raise PoleError("green evaluated at its pole x = p")
    _check_inside(domain, xc)
    h = regular_part(domain, xc, pc)
    val = h - np.log(np.abs(xc - pc)) / TWO_PI
    on_bd = np.abs(domain.level(xc) - 1) < 1e-13
    val = np.where(on_bd, 0.0, val)
    return float(val) if np.ndim(val) == 0 else val


def _holo_taylor_at_source(domain: DomainModel, p: complex, k_max: int) -> np.ndarray:
    """``F_p^(k)(0)``, k = 0..k_max (k = 0 entry is ``H(0,p)`` plus an imaginary constant)."""
    if domain.is_disk:
        R = domain.radius
        pb = np.conj(p) / R**2
        out = np.zeros(k_max + 1, dtype=complex)
        out[0] = (np.log(R) + np.log(abs(1 - 0))) / TWO_PI
        for k in range(1, k_max + 1):
            # log(1 - pb x) = -sum pb^k x^k / k
            out[k] = -math.factorial(k - 1) * pb**k / TWO_PI
        return out
    return domain.solver().taylor(_source_boundary_values(domain, complex(p)), k_max)


@dataclass
class KernelData:
    """Green's function handles plus Taylor data of the regular part at 0.

    Attributes
    ----------
    holo_dx : ndarray
        ``holo_dx[k] = F_0^(k)(0)`` for ``k = 1..k_max`` (index 0 holds ``H(0,0)``).
    mixed, mixed_conj : ndarray
        ``alpha!`` times the coefficient of ``p^alpha`` (resp. ``conj(p)^alpha``) in
        ``F_p^(k)(0)``, for ``k = 1..k_max``.  ``mixed`` is the holomorphic
        mixed derivative ``d^{k+alpha} / dp^alpha dx^k``; ``mixed_conj`` is the
        antiholomorphic companion, which is the only nonzero one on disks.
    """

    domain: DomainModel
    alpha: int
    k_max: int
    holo_dx: np.ndarray
    mixed: np.ndarray
    mixed_conj: np.ndarray
    extraction_gap: float = 0.0

    def G(self, x, p):
        return green(self.domain, x, p)

    def H(self, x, p):
        return regular_part(self.domain, x, p)

    @property
    def robin0(self) -> float:
        return float(self.holo_dx[0].real)

    @property
    def grad_H0(self) -> np.ndarray:
        """``grad_x H(0, 0)`` as a real 2-vector."""
        return np.array([self.holo_dx[1].real, -self.holo_dx[1].imag])

    def taylor_H0(self, x, order: int | None = None) -> np.ndarray:
        """``H(x,0) - H(0,0)`` from the stored Taylor coefficients."""
        xc = as_complex(x)
        order = self.k_max if order is None else order
        return sum((self.holo_dx[k] * xc**k).real / math.factorial(k) for k in range(1, order + 1))

    def sum_over_roots_model(self, b: complex, x) -> np.ndarray:
        """First-order model of ``sum_i (H(x, beta_i) - H(0, beta_i))`` in ``b``."""
        a = self.alpha
        xc = as_complex(x)
        out = a * self.taylor_H0(xc)
        for k in range(1, self.k_max + 1):
            coef = self.mixed[k] * b + self.mixed_conj[k] * np.conj(b)
            out = out + (coef * xc**k).real / math.factorial(k) / math.factorial(a - 1)
        return out


def holomorphic_derivatives(domain: DomainModel, k_max: int, alpha: int,
                            radii: tuple[float, float] | None = None,
                            rel_tol: float = 1e-6) -> KernelData:
    """Taylor data of ``H`` at the origin.

    ``holo_dx`` comes from the Cauchy integral over the boundary and is
    cross-checked against Fourier coefficients of ``H(., 0)`` on a small
    circle.  The mixed entries use Fourier analysis of ``p -> F_p^(k)(0)`` on
    small ``p``-circles at two radii; if the two disagree by more than
    ``rel_tol`` (relative to the largest entry) a :class:`ConditioningError`
    is raised.
    """
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    k_top = max(k_max, alpha)
    holo = _holo_taylor_at_source(domain, 0j, k_top)
    holo[0] = regular_part(domain, 0j, 0j)
    rin = domain.inradius()
    radii = radii or (0.1 * rin, 0.2 * rin)

    gap = 0.0
    if not domain.is_disk:
        # Circle-coefficient cross-check of holo_dx.
        m = 64
        th = TWO_PI * np.arange(m) / m
        est = []
        for rho in radii:
            vals = regular_part(domain, rho * np.exp(1j * th), 0j)
            c = np.fft.fft(vals) / m
            est.append(np.array([2 * c[k] * math.factorial(k) / rho**k for k in range(1, 4)]))
        scale = max(1.0, np.max(np.abs(holo[1:4])))
        gap = float(np.max(np.abs(est[0] - holo[1:4])) / scale)
        # low-order coefficients are insensitive to truncation; a large gap means
        # the boundary resolution cannot represent H(., 0)
        if gap > 1e-3:
            raise ConditioningError(f"holomorphic derivative extraction gap {gap:.2e}")

    mixed = np.zeros(k_top + 1, dtype=complex)
    mixed_conj = np.zeros(k_top + 1, dtype=complex)
    if domain.is_disk:
        R = domain.radius
        mixed_conj[alpha] = -math.factorial(alpha) * math.factorial(alpha - 1) / (TWO_PI * R ** (2 * alpha))
    else:
        m = max(4 * alpha + 8, 32)
        th = TWO_PI * np.arange(m) / m
        ests = []
        for rho in radii:
            ps = rho * np.exp(1j * th)
            g = np.array([_holo_taylor_at_source(domain, complex(p), k_top) for p in ps])  # (m, k+1)
            c = np.fft.fft(g, axis=0) / m
            a_coef = c[alpha] / rho**alpha
            b_coef = c[-alpha] / rho**alpha
            ests.append((a_coef, b_coef))
        (a1, b1), (a2, b2) = ests
        big = max(np.max(np.abs(a2)), np.max(np.abs(b2)), 1e-300)
        mgap = max(np.max(np.abs(a1 - a2)), np.max(np.abs(b1 - b2))) / big
        if mgap > rel_tol * 1e3:
            raise ConditioningError(f"mixed-derivative extraction gap {mgap:.2e}")
        gap = max(gap, float(mgap))
        mixed[:] = math.factorial(alpha) * a2
        mixed_conj[:] = math.factorial(alpha) * b2
        mixed[0] = mixed_conj[0] = 0.0
    return KernelData(domain, alpha, k_top, holo, mixed, mixed_conj, gap)


def roots_of_b(b: complex, alpha: int) -> np.ndarray:
    """The ``alpha`` roots of ``beta^alpha = b``: principal root first, then by increasing argument."""
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    b = complex(b)
    if b == 0:
        return np.zeros(alpha, dtype=complex)
    mod = abs(b) ** (1.0 / alpha)
    arg = np.angle(b)
    return mod * np.exp(1j * (arg + TWO_PI * np.arange(alpha)) / alpha)


def sum_over_roots(domain: DomainModel, alpha: int, b: complex, x) -> np.ndarray:
    """``sum_i H(x, beta_i)``."""
    xc = as_complex(x)
    return sum(regular_part(domain, xc, beta) for beta in roots_of_b(b, alpha))


def sum_over_roots_expansion_check(domain: DomainModel, alpha: int, b: complex, x,
                                   kernels: KernelData | None = None) -> float:
    """Gap between ``sum_i (H(x,beta_i) - H(0,beta_i))`` and its first-order model."""
    kernels = kernels or holomorphic_derivatives(domain, max(alpha + 1, 4), alpha)
    xc = as_complex(x)
    direct = sum_over_roots(domain, alpha, b, xc) - sum_over_roots(domain, alpha, b, 0j)
    return float(np.max(np.abs(direct - kernels.sum_over_roots_model(b, xc))))


def symmetry_check(domain: DomainModel, ell: int, tol: float = 1e-10, n: int = 720) -> bool:
    """True if the boundary is invariant under rotation by ``2 pi / ell`` (sampled)."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    theta = TWO_PI * np.arange(n) / n
    return bool(np.max(np.abs(domain.radius_fn(theta) - domain.radius_fn(theta + TWO_PI / ell))) <= tol)


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------

@dataclass
class PotentialModel:
    """Positive weight ``a`` with its value, gradient and Hessian diagonal at 0.

    ``a`` acts on complex points.  Use :meth:`quadratic` or :meth:`from_config`.
    """

    a: Callable[[np.ndarray], np.ndarray]
    a0: float
    grad_a0: np.ndarray
    a11: float
    a22: float
    a12: float = 0.0
    description: dict = field(default_factory=dict)

    @classmethod
    def quadratic(cls, a0: float = 1.0, grad=(0.0, 0.0), a11: float = 0.0, a22: float = 0.0,
                  a12: float = 0.0) -> "PotentialModel":
        g1, g2 = map(float, grad)

        def a(x):
            x = as_complex(x)
            x1, x2 = x.real, x.imag
            return a0 + g1 * x1 + g2 * x2 + 0.5 * (a11 * x1**2 + a22 * x2**2) + a12 * x1 * x2

        desc = {"profile": "quadratic", "a0": a0, "grad": [g1, g2], "a11": a11, "a22": a22}
        if a12:
            desc["a12"] = a12
        return cls(a, float(a0), np.array([g1, g2]), float(a11), float(a22), float(a12), desc)

    @classmethod
    def from_expr(cls, expr: str) -> "PotentialModel":
        """Potential from a sympy expression in ``x1, x2``; derivatives are symbolic."""
        import sympy as sp

        x1, x2 = sp.symbols("x1 x2", real=True)
        e = sp.sympify(expr, locals={"x1": x1, "x2": x2})
        f = sp.lambdify((x1, x2), e, "numpy")
        at0 = {x1: 0, x2: 0}

        def num(d):
            return float(sp.N(d.subs(at0)))

        def a(x):
            x = as_complex(x)
            return np.broadcast_to(f(x.real, x.imag), x.shape).astype(float)

        return cls(a, num(e), np.array([num(sp.diff(e, x1)), num(sp.diff(e, x2))]),
                   num(sp.diff(e, x1, 2)), num(sp.diff(e, x2, 2)), num(sp.diff(e, x1, x2)),
                   {"profile": "expr", "expr": expr})

    @classmethod
    def from_config(cls, cfg: dict) -> "PotentialModel":
        profile = cfg.get("profile", "quadratic")
        if profile == "quadratic":
            return cls.quadratic(float(cfg.get("a0", 1.0)), tuple(cfg.get("grad", (0.0, 0.0))),
                                 float(cfg.get("a11", 0.0)), float(cfg.get("a22", 0.0)),
                                 float(cfg.get("a12", 0.0)))
        if profile == "expr":
            pot = cls.from_expr(cfg["expr"])
            supplied = {k: cfg[k] for k in ("a0", "grad", "a11", "a22") if k in cfg}
            if supplied:
                pot.check_supplied(supplied)
            return pot
        raise ValueError(f"unknown potential profile {profile!r}")

    def to_spec(self) -> dict:
        return dict(self.description)

    @property
    def laplacian0(self) -> float:
        return self.a11 + self.a22

    def check_supplied(self, supplied: dict, tol: float = 1e-6):
        mine = {"a0": self.a0, "grad": list(self.grad_a0), "a11": self.a11, "a22": self.a22}
        for k, v in supplied.items():
            if np.max(np.abs(np.asarray(v, float) - np.asarray(mine[k]))) > tol:
                raise ValueError(f"supplied {k}={v} disagrees with the expression ({mine[k]})")

    def finite_difference_gap(self, h: float = 1e-3) -> float:
        """Max gap between stored derivative data and central differences at 0."""
        a = self.a
        e1, e2 = h, 1j * h
        z = np.array(0j)
        f0 = float(a(z))
        fd = {
            "a0": f0,
            "g1": float(a(z + e1) - a(z - e1)) / (2 * h),
            "g2": float(a(z + e2) - a(z - e2)) / (2 * h),
            "a11": float(a(z + e1) - 2 * f0 + a(z - e1)) / h**2,
            "a22": float(a(z + e2) - 2 * f0 + a(z - e2)) / h**2,
        }
        stored = {"a0": self.a0, "g1": self.grad_a0[0], "g2": self.grad_a0[1],
                  "a11": self.a11, "a22": self.a22}
        return max(abs(fd[k] - stored[k]) for k in fd)

    def validate(self, domain: DomainModel, n: int = 64, fd_tol: float = 1e-6) -> None:
        """Check positivity on a sample grid and the stored derivative data."""
        s = np.linspace(0, 1, n)[:, None]
        th = np.linspace(0, TWO_PI, 2 * n, endpoint=False)[None, :]
        pts = s * domain.radius_fn(th) * np.exp(1j * th)
        if np.min(self.a(pts)) <= 0:
            raise ValueError("potential a must be positive on the closed domain")
        gap = self.finite_difference_gap()
        if gap > fd_tol:
            raise ValueError(f"derivative data disagrees with finite differences (gap {gap:.2e})")
