import numpy as np
import pytest
from hypothesis import given, strategies as st

from singular_liouville.bubble import (
    BubbleAnsatz,
    BubbleParams,
    Projection,
    ResolutionError,
    bubble_eval,
    delta_from_lambda,
    kernel_eval,
    kernel_gram,
    project_bubble,
    project_kernel,
    weight_eval,
)
from singular_liouville.discretization import Resolution, build, poisson_solve
from singular_liouville.geometry import holomorphic_derivatives
from singular_liouville.quadrature import DecayProfile, integrate_plane


@given(st.integers(1, 4), st.floats(0.05, 1.0), st.complex_numbers(max_magnitude=0.5))
def test_bubble_solves_limiting_equation(alpha, delta, bs):
    # -Laplace W = |x|^(2(alpha-1)) e^W checked by a five-point stencil
    p = BubbleParams(alpha, delta, bs * delta**alpha)
    x = delta * (0.7 + 0.4j)
    h = 1e-3 * delta
    lap = (bubble_eval(p, x + h) + bubble_eval(p, x - h) + bubble_eval(p, x + 1j * h)
           + bubble_eval(p, x - 1j * h) - 4 * bubble_eval(p, x)) / h**2
    rhs = np.abs(x) ** (2 * (alpha - 1)) * np.exp(bubble_eval(p, x))
    assert -lap == pytest.approx(rhs, rel=1e-4)
    assert weight_eval(p, x) == pytest.approx(rhs, rel=1e-12)


@pytest.mark.parametrize("alpha", [1, 2, 3])
def test_weight_quantization(alpha):
    p = BubbleParams(alpha, 0.3, 0.02 + 0.01j)
    r = integrate_plane(lambda x: weight_eval(p, x), DecayProfile(2 * alpha + 2, True), 1e-11, scale=0.3)
    assert r.value == pytest.approx(8 * np.pi * alpha, rel=1e-10)


def test_weight_has_no_cancellation_near_origin():
    p = BubbleParams(3, 1e-3, 0j)
    x = np.array([1e-12 + 0j])
    assert weight_eval(p, x)[0] > 0


def test_kernels_are_derivatives_of_the_family():
    alpha, delta, b = 2, 0.4, 0.03 + 0.02j
    x = 0.3 + 0.2j
    eps = 1e-6
    base = BubbleParams(alpha, delta, b)
    # Z^1 = (1/4) dW/d(Re b) * delta^alpha
    d1 = (bubble_eval(BubbleParams(alpha, delta, b + eps), x) - bubble_eval(BubbleParams(alpha, delta, b - eps), x)) / (2 * eps)
    assert kernel_eval(base, 1, x) == pytest.approx(d1 * delta**alpha / 4, rel=1e-6)
    d2 = (bubble_eval(BubbleParams(alpha, delta, b + 1j * eps), x)
          - bubble_eval(BubbleParams(alpha, delta, b - 1j * eps), x)) / (2 * eps)
    assert kernel_eval(base, 2, x) == pytest.approx(d2 * delta**alpha / 4, rel=1e-6)


def test_projection_has_zero_trace_and_same_laplacian(disk):
    p = BubbleParams(2, 0.2, 0j)
    proj = Projection(disk, [lambda x: bubble_eval(p, x)])
    th = np.linspace(0, 2 * np.pi, 50)
    assert np.max(np.abs(proj(np.exp(1j * th)))) < 1e-12
    # P W - W is harmonic: five-point Laplacian vanishes
    x, h = 0.3 + 0.1j, 1e-3
    c = lambda z: proj.correction(np.array([z]))[0, 0]
    lap = (c(x + h) + c(x - h) + c(x + 1j * h) + c(x - 1j * h) - 4 * c(x)) / h**2
    assert abs(lap) < 1e-5


def test_projected_bubble_against_fem(disk):
    # closed-form projection vs a Galerkin solve with the bubble weight as load
    p = BubbleParams(1, 0.3, 0j)
    disc = build(disk, Resolution(0.025, 0.3))
    pw, _ = project_bubble(p, disc, holomorphic_derivatives(disk, 4, 1))
    fem, _ = poisson_solve(disc, lambda x: weight_eval(p, x))
    assert np.max(np.abs(fem.values - pw.values)) < 5e-3


def test_projection_expansion_rates(disk, kernels_disk2):
    gaps = []
    for d in (0.2, 0.1):
        p = BubbleParams(2, d, 0j)
        disc = build(disk, Resolution(0.1, d))
        gaps.append([project_bubble(p, disc, kernels_disk2)[1]] + [project_kernel(p, j, disc)[1] for j in (0, 1)])
    slopes = np.log2(np.array(gaps[0]) / np.array(gaps[1]))
    assert slopes == pytest.approx([4, 4, 2], abs=0.2)


def test_kernel_gram_limit(disk):
    p = BubbleParams(3, 0.1, 0j)
    g = kernel_gram(p, build(disk, Resolution(0.1, 0.1)))
    assert np.diag(g) == pytest.approx([2 * np.pi, 2 * np.pi], rel=1e-3)
    assert abs(g[0, 1]) < 1e-12


def test_delta_from_lambda_formula(disk, kernels_disk3, pot_radial):
    lam = 1e-3
    d = delta_from_lambda(lam, 0j, pot_radial, kernels_disk3)
    assert 8 * 9 * d**6 == pytest.approx(lam, rel=1e-12)
    with pytest.raises(ValueError):
        delta_from_lambda(-1.0, 0j, pot_radial, kernels_disk3)


def test_unresolved_core_is_rejected(disk, kernels_disk3, pot_radial):
    coarse = build(disk, 0.2)
    with pytest.raises(ResolutionError):
        BubbleAnsatz(coarse, kernels_disk3, pot_radial, 1e-6)
