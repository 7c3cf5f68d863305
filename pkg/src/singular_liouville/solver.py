"""Constrained linearized solves, the contraction for the correction, and lambda ladders.

For fixed ``(lambda, b)`` the unknowns are a correction ``phi`` in ``H^1_0``
and two multipliers.  In weak form, with ``s = lambda V |x|^(2(alpha-1)) e^{PW}``
and ``w`` the bubble weight,

    a(phi, v) - (s phi, v) - sum_j c_j (Z^j w, v) = -(R, v) + (s (e^phi - 1 - phi), v),
    (Z^j w, phi) = 0,  j = 1, 2,

where the constraint is ``int grad phi . grad PZ^j = 0`` rewritten through
``-Laplace PZ^j = Z^j w``.  The left side is one sparse bordered matrix that
is factorized once per ``(lambda, b)``; the contraction only changes the
right-hand side.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bubble import BubbleAnsatz, delta_from_lambda
from .discretization import Discretization, Field, LinearSolveReport, Resolution, build, solve_load
from .geometry import DomainModel, KernelData, PotentialModel, green, holomorphic_derivatives

__all__ = [
    "SolverConfig",
    "ContractionError",
    "NearResonanceError",
    "BorderedOperator",
    "LinearizedSolution",
    "ReducedState",
    "ConvergenceReport",
    "solve_linearized",
    "nonlinear_remainder",
    "contraction_solve",
    "assemble_solution",
    "continuation",
    "mesh_for",
    "worker_count",
]


@dataclass(frozen=True)
class SolverConfig:
    """Numerical controls for a single solve and for ladders."""

    tol: float = 1e-11
    max_iter: int = 50
    phi_cap: float = 20.0
    eps: float = 0.05
    h: float = 0.05
    grade_ratio: float = 0.05
    min_nodes: int = 16
    b_tol_factor: float = 1e-9
    search_radius_factor: float = 2.0
    n_circle: int = 8
    newton_max_iter: int = 12
    farfield_radius: float = 0.5
    local_radius: float = 0.25
    k_max: int = 4

    def scaled(self, factor: float) -> "SolverConfig":
        """Uniformly scale the iteration tolerances (``--tol-scale``)."""
        d = asdict(self)
        d["tol"] = self.tol * factor
        d["b_tol_factor"] = self.b_tol_factor * factor
        return SolverConfig(**d)


class ContractionError(RuntimeError):
    """Fixed-point iteration failed; ``history`` holds successive H^1 distances."""

    def __init__(self, message: str, history: Sequence[float]):
        super().__init__(message)
        self.history = list(history)


class NearResonanceError(RuntimeError):
    pass


def worker_count() -> int:
    """Worker cap from ``LIOUVILLE_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("LIOUVILLE_THREADS", "1")))
    except ValueError:
        return 1


def mesh_for(domain: DomainModel, delta: float, cfg: SolverConfig) -> Discretization:
    """Mesh graded at the bubble scale ``delta``."""
    return build(domain, Resolution(h=cfg.h, grade_radius=delta, grade_ratio=cfg.grade_ratio,
                                    angular_multiple=12))


class BorderedOperator:
    """Factorized saddle matrix ``[[K - M_s, -B], [B^T, 0]]`` on interior nodes."""

    def __init__(self, ans: BubbleAnsatz):
        self.ans = ans
        disc = ans.disc
        I = disc.interior
        self.K_II = disc.stiffness[I][:, I]
        self.A = (disc.stiffness - disc.mass_matrix(ans.source_q))[I][:, I].tocsc()
        cols = np.stack([ans.w_q * ans.Z_q[1], ans.w_q * ans.Z_q[2]], axis=-1)
        self.B_full = disc.load_vector(cols)
        self.B = self.B_full[I]
        S = sp.bmat([[self.A, sp.csc_matrix(-self.B)], [sp.csc_matrix(self.B.T), None]]).tocsc()
        self.S = S
        try:
            self.lu = spla.splu(S, permc_spec="COLAMD")
        except RuntimeError as exc:  # exactly singular pivot
            raise NearResonanceError(f"bordered system is singular: {exc}") from exc
        diag_u = np.abs(self.lu.U.diagonal())
        self.pivot_ratio = float(diag_u.min() / diag_u.max())
        if self.pivot_ratio < 1e-14:
            raise NearResonanceError(f"bordered system nearly singular (pivot ratio {self.pivot_ratio:.1e})")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def solve(self, rhs_I: np.ndarray, rhs_c: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, float]:
        rhs = np.concatenate([rhs_I, np.zeros(2) if rhs_c is None else rhs_c])
        sol = self.lu.solve(rhs)
        res = float(np.linalg.norm(self.S @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300))
        return sol[:self.n], sol[self.n:], res

    def full(self, phi_I: np.ndarray) -> np.ndarray:
        out = np.zeros(self.ans.disc.n_nodes)
        out[self.ans.disc.interior] = phi_I
        return out


@dataclass
class LinearizedSolution:
    phi: Field
    c1: float
    c2: float
    report: LinearSolveReport
    constraint_residual: float

    @property
    def c(self) -> np.ndarray:
        return np.array([self.c1, self.c2])


def solve_linearized(ans: BubbleAnsatz, h: Field | np.ndarray, op: BorderedOperator | None = None) -> LinearizedSolution:
    """Solve ``-Laplace phi - s phi = Laplace h + sum_j c_j Z^j w`` with ``phi`` orthogonal to ``PZ^1, PZ^2``."""
    op = op or BorderedOperator(ans)
    hv = h.values if isinstance(h, Field) else np.asarray(h, float)
    rhs = -(ans.disc.stiffness @ hv)[ans.disc.interior]
    phi_I, c, res = op.solve(rhs)
    phi = Field(ans.disc, op.full(phi_I), "phi")
    cons = float(np.max(np.abs(op.B.T @ phi_I))) if phi_I.size else 0.0
    report = LinearSolveReport("splu-bordered", op.n + 2, res, op.lu.L.nnz + op.lu.U.nnz)
    return LinearizedSolution(phi, float(c[0]), float(c[1]), report, cons)


@dataclass
class NonlinearRemainder:
    field: Field
    norm: float


def _nonlinear_density(ans: BubbleAnsatz, phi_q: np.ndarray, cap: float) -> np.ndarray:
    if np.max(np.abs(phi_q)) > cap:
        raise OverflowError(f"|phi| exceeds the cap {cap}")
    return ans.source_q * (np.expm1(phi_q) - phi_q)


def nonlinear_remainder(ans: BubbleAnsatz, phi: Field, cap: float = 20.0) -> NonlinearRemainder:
    """``Pi_perp i*(s (e^phi - 1 - phi))`` and its H^1_0 norm.

    The projection subtracts the H^1_0-orthogonal components along ``PZ^1, PZ^2``;
    its norm is computed with exact inner products, the nodal field uses the
    interpolated ``PZ^j``.
    """
    disc = ans.disc
    load = disc.load_vector(_nonlinear_density(ans, phi.at_quad(), cap))
    u, _ = solve_load(disc, load)
    uq = u.at_quad()
    proj = np.array([disc.integrate_q(ans.w_q * ans.Z_q[j] * uq) for j in (1, 2)])
    coef = np.linalg.solve(ans.gram, proj)
    n2 = u.values @ (disc.stiffness @ u.values) - coef @ ans.gram @ coef
    vals = u.values - coef[0] * ans.PZ_n[1] - coef[1] * ans.PZ_n[2]
    vals[disc.boundary] = 0.0
    return NonlinearRemainder(Field(disc, vals, "N"), math.sqrt(max(n2, 0.0)))


@dataclass
class ReducedState:
    lam: float
    b: complex
    phi: Field
    c1: float
    c2: float
    iterations: int
    phi_norm: float
    history: list
    converged: bool
    in_ball: bool
    delta: float

    @property
    def c(self) -> np.ndarray:
        return np.array([self.c1, self.c2])


def contraction_solve(ans: BubbleAnsatz, cfg: SolverConfig = SolverConfig(),
                      op: BorderedOperator | None = None, phi0: np.ndarray | None = None) -> ReducedState:
    """Fixed point of ``phi -> L^{-1}(R~ - N(phi))`` with the multipliers of the intermediate problem."""
    disc = ans.disc
    op = op or BorderedOperator(ans)
    K = disc.stiffness
    r_load = disc.load_vector(ans.residual_q)[disc.interior]
    phi = np.zeros(disc.n_nodes) if phi0 is None else np.array(phi0, float)
    history = []
    c = np.zeros(2)
    converged = False
    for it in range(1, cfg.max_iter + 1):
        try:
            n_load = disc.load_vector(_nonlinear_density(ans, disc.to_quad(phi), cfg.phi_cap))[disc.interior]
        except OverflowError as exc:
            raise ContractionError(f"outside perturbative regime: {exc}", history) from exc
        phi_I, c, _ = op.solve(-r_load + n_load)
        new = op.full(phi_I)
        d = new - phi
        dist = math.sqrt(max(d @ (K @ d), 0.0))
        history.append(dist)
        phi = new
        if not np.isfinite(dist):
            raise ContractionError("outside perturbative regime: iterate is not finite", history)
        if dist <= cfg.tol:
            converged = True
            break
        if it >= 4 and history[-1] > history[-2] > history[-3]:
            raise ContractionError("outside perturbative regime: iterates diverge", history)
    if not converged:
        raise ContractionError(f"no convergence in {cfg.max_iter} iterations", history)
    norm = math.sqrt(max(phi @ (K @ phi), 0.0))
    bound = ans.lam ** (1.0 / ans.alpha - cfg.eps)
    return ReducedState(ans.lam, ans.params.b, Field(disc, phi, "phi"), float(c[0]), float(c[1]),
                        len(history), norm, history, converged, norm <= bound, ans.delta)


@dataclass
class Solution:
    v: Field
    diagnostics: dict


def assemble_solution(state: ReducedState, ans: BubbleAnsatz, cfg: SolverConfig = SolverConfig()) -> Solution:
    """``v = PW + phi`` and the physical diagnostics of ``u = v - 4 pi (alpha - 1) G(., 0)``."""
    disc = ans.disc
    alpha = ans.alpha
    phi_q = state.phi.at_quad()
    dens = ans.source_q * np.exp(phi_q)
    mass = disc.integrate_q(dens)
    local = disc.integrate_q(np.where(np.abs(disc.quad_points) < cfg.local_radius, dens, 0.0))
    theta = 2 * np.pi * np.arange(256) / 256
    circ = cfg.farfield_radius * np.exp(1j * theta)
    v_circ = ans.projection(circ)[:, 0] + state.phi(circ)
    g_circ = green(disc.domain, circ, 0j)
    farfield = float(np.max(np.abs(v_circ - 8 * np.pi * alpha * g_circ)))
    phi_n = state.phi.values
    grad2 = disc.integrate_q(ans.w_q * ans.PW_q) + 2 * disc.integrate_q(ans.w_q * phi_q) \
        + phi_n @ (disc.stiffness @ phi_n)
    energy = 0.5 * grad2 - mass
    v = Field(disc, ans.PW_n + phi_n, "v")
    diag = {
        "lambda": state.lam, "delta": state.delta, "b_star": [state.b.real, state.b.imag],
        "b_abs": abs(state.b), "phi_norm": state.phi_norm, "mass": mass,
        "mass_target": 8 * np.pi * alpha, "mass_gap": abs(mass - 8 * np.pi * alpha),
        "local_mass": local, "farfield_error": farfield, "energy": energy,
        "c1": state.c1, "c2": state.c2, "iterations": state.iterations, "in_ball": state.in_ball,
        "n_nodes": disc.n_nodes,
    }
    return Solution(v, diag)


# ---------------------------------------------------------------------------
# lambda ladders
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    rows: list
    fits: dict = field(default_factory=dict)
    assumption: dict = field(default_factory=dict)

    def column(self, key: str) -> np.ndarray:
        return np.array([r.get(key, np.nan) for r in self.rows if r.get("status") == "ok"], dtype=float)

    def as_dict(self) -> dict:
        return {"rows": self.rows, "fits": self.fits, "assumption": self.assumption}


def _slope(x: np.ndarray, y: np.ndarray) -> float:
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def _ladder_row(domain, pot, kernels, lam, cfg, b_start):
    from .reduction import RootNotFoundError, solve_for_b

    alpha = kernels.alpha
    delta0 = delta_from_lambda(lam, 0j, pot, kernels, alpha)
    disc = mesh_for(domain, delta0, cfg)
    try:
        root = solve_for_b(lam, pot, kernels, disc, alpha, cfg.search_radius_factor, cfg, b_start=b_start)
    except RootNotFoundError as exc:
        return {"lambda": lam, "delta": delta0, "status": "no_root", "message": str(exc),
                "max_multiplier": exc.max_multiplier}, None, None
    except ContractionError as exc:
        return {"lambda": lam, "delta": delta0, "status": "contraction_failed", "message": str(exc)}, None, None
    sol = assemble_solution(root.state, root.ansatz, cfg)
    row = dict(sol.diagnostics)
    row.update({"status": "ok", "certified": root.certified, "winding": root.winding,
                "newton_iterations": root.newton_iterations, "multiplier_norm": float(np.linalg.norm(root.state.c))})
    return row, root, sol


def continuation(domain: DomainModel, pot: PotentialModel, N: int, lambda_ladder: Sequence[float],
                 config: SolverConfig = SolverConfig(), force: bool = False,
                 keep_solutions: bool = False) -> ConvergenceReport:
    """Run the reduction on a decreasing ``lambda`` ladder.

    For each ``lambda`` the mesh is graded at ``delta(lambda)``, the
    multiplier map is rooted in ``b`` (warm-started from the previous root),
    and the assembled solution is measured.  Failures are recorded per row
    and the ladder continues with a cold start.  ``force`` skips the
    hypothesis gate; the degree certificate is always required.
    """
    from .reduction import check_assumptions

    lams = [float(l) for l in lambda_ladder]
    if not lams:
        raise ValueError("empty lambda ladder")
    if any(l <= 0 for l in lams) or any(a <= b for a, b in zip(lams, lams[1:])):
        raise ValueError("lambda values must be positive and strictly decreasing")
    alpha = int(N) + 1
    kernels = holomorphic_derivatives(domain, max(config.k_max, alpha + 1), alpha)
    assumption = check_assumptions(pot, kernels, N)
    if assumption.theorem_case == "none" and not force:
        raise ValueError("no existence setting applies to these data: " + "; ".join(assumption.reasons))
    rows, sols = [], []
    b_start = 0j
    for lam in lams:
        row, root, sol = _ladder_row(domain, pot, kernels, lam, config, b_start)
        rows.append(row)
        sols.append(sol)
        b_start = root.b if root is not None else 0j
    report = ConvergenceReport(rows, assumption=assumption.as_dict())
    ok = [r for r in rows if r["status"] == "ok"]
    if len(ok) >= 2:
        lam_ok = np.array([r["lambda"] for r in ok])
        d_ok = np.array([r["delta"] for r in ok])
        report.fits = {
            "phi_norm_vs_lambda": _slope(lam_ok, np.array([r["phi_norm"] for r in ok])),
            "b_abs_vs_delta": _slope(d_ok, np.array([r["b_abs"] for r in ok])),
            "mass_gap_vs_delta": _slope(d_ok, np.array([r["mass_gap"] for r in ok])),
            "farfield_vs_lambda": _slope(lam_ok, np.array([r["farfield_error"] for r in ok])),
        }
    if keep_solutions:
        report.solutions = sols  # type: ignore[attr-defined]
    return report
