import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from singular_liouville.bubble import BubbleAnsatz, BubbleParams, delta_from_lambda
from singular_liouville.discretization import Resolution, build
from singular_liouville.geometry import PotentialModel, holomorphic_derivatives
from singular_liouville.reduction import (
    MOMENT_COEFFICIENT,
    RootNotFoundError,
    check_assumptions,
    constant_A,
    jacobian_at_zero,
    jacobian_beta_oracle,
    moment_integrals,
    multiplier_leading_form,
    plane_weighted_kernel_moment,
    quadratic_moment_integrals,
    quadratic_moment_model,
    reduced_map_F,
    solve_for_b,
)
from singular_liouville.solver import SolverConfig, mesh_for


def test_setting_one_on_disk(kernels_disk3, pot_radial):
    rep = check_assumptions(pot_radial, kernels_disk3, 2)
    assert rep.theorem_case == "thm1"
    assert rep.A_value == pytest.approx(-0.5)


def test_setting_two_on_symmetric_curve(trefoil, pot_radial):
    k = holomorphic_derivatives(trefoil, 4, 2)
    rep = check_assumptions(pot_radial, k, 1)
    assert rep.theorem_case == "thm2" and rep.symmetry_ok
    # with the symmetry the constant reduces to -Laplace a(0) / (4 a(0))
    assert constant_A(pot_radial, k) == pytest.approx(-pot_radial.laplacian0 / (4 * pot_radial.a0), abs=1e-12)


def test_constant_potential_matches_no_setting(kernels_disk3, kernels_disk2):
    flat = PotentialModel.quadratic(1.0)
    with pytest.warns(UserWarning):
        assert check_assumptions(flat, kernels_disk3, 2).theorem_case == "none"
    with pytest.warns(UserWarning):
        assert check_assumptions(flat, kernels_disk2, 1).theorem_case == "none"


def test_tilted_potential_fails_gradient_condition(kernels_disk3):
    tilted = PotentialModel.quadratic(1.0, (0.2, 0.0), 1.0, 1.0)
    with pytest.warns(UserWarning):
        rep = check_assumptions(tilted, kernels_disk3, 2)
    assert rep.theorem_case == "none"
    assert rep.gradient_condition_residual == pytest.approx(0.2)


def test_argument_errors(kernels_disk3, pot_radial):
    with pytest.raises(ValueError):
        check_assumptions(pot_radial, kernels_disk3, 0)
    with pytest.raises(ValueError):
        check_assumptions(pot_radial, kernels_disk3, 1)
    with pytest.raises(ValueError):
        reduced_map_F(0.0, 1)


@pytest.mark.parametrize("alpha", [2, 3, 5, 8])
def test_reduced_map_at_zero(alpha):
    v = reduced_map_F(0.0, alpha)
    assert np.max(np.abs(v.F)) < 1e-10
    assert v.J[0, 1] == pytest.approx(0, abs=1e-10) and v.J[1, 0] == pytest.approx(0, abs=1e-10)
    assert v.J[0, 0] == pytest.approx(v.J[1, 1], rel=1e-10)
    assert v.J[0, 0] == pytest.approx(jacobian_beta_oracle(alpha), abs=1e-8)
    assert jacobian_at_zero(alpha) > 0


def test_jacobian_at_two_is_pi_squared_over_32():
    assert jacobian_beta_oracle(2) == pytest.approx(np.pi**2 / 32, rel=1e-14)
    assert jacobian_at_zero(2) == pytest.approx(np.pi**2 / 32, abs=1e-10)


@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(0, 2 * np.pi))
def test_reduced_map_rotation_equivariance(b1, b2, theta):
    B = complex(b1, b2)
    rot = np.exp(1j * theta)
    f0 = reduced_map_F(B, 3, tol=1e-10, jacobian=False).F
    f1 = reduced_map_F(rot * B, 3, tol=1e-10, jacobian=False).F
    assert complex(*f1) == pytest.approx(rot * complex(*f0), abs=1e-9)


def test_jacobian_matches_finite_differences():
    B, h = np.array([0.4, -0.3]), 1e-5
    v = reduced_map_F(B, 2)
    fd = np.column_stack([(reduced_map_F(B + h * e, 2, jacobian=False).F
                           - reduced_map_F(B - h * e, 2, jacobian=False).F) / (2 * h) for e in np.eye(2)])
    assert np.max(np.abs(fd - v.J)) < 1e-7


def test_leading_moment_and_sign_table(disk):
    # int w PZ^j Re/Im(xi x^alpha) ~ c delta^alpha * (sign pattern), c = 2 pi alpha
    alpha, delta = 3, 0.08
    p = BubbleParams(alpha, delta, 0j)
    c = MOMENT_COEFFICIENT(alpha) * delta**alpha
    got = [moment_integrals(p, None, j, alpha, xi, part, domain=disk, tol=1e-12) / c
           for j in (1, 2) for part in ("re", "im") for xi in (1.0, 1j)]
    assert got == pytest.approx([1, 0, 0, 1, 0, -1, 1, 0], abs=2e-3)


def test_low_moments_vanish_on_disk(disk):
    p = BubbleParams(3, 0.1, 0j)
    for gamma in (0, 1, 2):
        assert abs(moment_integrals(p, None, 1, gamma, 1.0, domain=disk, tol=1e-12)) < 1e-10


def test_quadratic_moment_model_alpha_three(disk):
    p = BubbleParams(3, 0.1, 0.4 * 0.1**3)
    for j in (1, 2):
        val = quadratic_moment_integrals(p, None, j, 1.0, 1.0, domain=disk, tol=1e-13)
        model = quadratic_moment_model(p, j, 1.0, 1.0)
        assert val == pytest.approx(model, rel=0.05)
    assert plane_weighted_kernel_moment(p, 1) != 0


def test_multiplier_form_tracks_model(disk, kernels_disk3, pot_radial):
    lam = 1e-4
    d = delta_from_lambda(lam, 0j, pot_radial, kernels_disk3)
    disc = build(disk, Resolution(0.05, d))
    ans = BubbleAnsatz(disc, kernels_disk3, pot_radial, lam, 0.5 * d**3)
    form = multiplier_leading_form(ans)
    assert form.computed == pytest.approx(form.model, rel=0.05)
    assert form.model == pytest.approx(8 * 9 * form.model_unscaled)


def test_symmetric_data_root_is_zero(disk, kernels_disk3, pot_radial):
    cfg = SolverConfig()
    lam = 1e-3
    disc = mesh_for(disk, delta_from_lambda(lam, 0j, pot_radial, kernels_disk3), cfg)
    root = solve_for_b(lam, pot_radial, kernels_disk3, disc, cfg=cfg)
    assert root.certified and root.winding == 1
    assert abs(root.b) == 0.0
    assert np.linalg.norm(root.state.c) <= cfg.b_tol_factor * 2 * np.pi


def test_flat_potential_has_no_certified_root(disk, kernels_disk3):
    flat = PotentialModel.quadratic(1.0)
    cfg = SolverConfig()
    disc = mesh_for(disk, delta_from_lambda(1e-2, 0j, flat, kernels_disk3), cfg)
    with pytest.raises(RootNotFoundError) as exc:
        solve_for_b(1e-2, flat, kernels_disk3, disc, cfg=cfg)
    assert len(exc.value.scan) == cfg.n_circle


def test_asymmetric_potential_shifts_root(disk):
    # a cubic term breaks the symmetry, so the root moves off 0 but stays in the search disk
    pot = PotentialModel.from_expr("1 + (x1**2 + x2**2)/2 + 0.3*x1**3")
    k = holomorphic_derivatives(disk, 4, 3)
    cfg = SolverConfig()
    lam = 1e-3
    d = delta_from_lambda(lam, 0j, pot, k)
    root = solve_for_b(lam, pot, k, mesh_for(disk, d, cfg), cfg=cfg)
    assert 0 < abs(root.b) <= 2 * d**3
    assert np.linalg.norm(root.state.c) <= cfg.b_tol_factor * 2 * np.pi
