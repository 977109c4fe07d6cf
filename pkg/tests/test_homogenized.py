import numpy as np
import pytest
from numpy.polynomial import Polynomial

from platehomog import homogenized as hz
from platehomog.cells import HomogenizedTensors
from platehomog.errors import InvalidArgumentError, UnsupportedDataError
from platehomog.problem import Field2D, PlateProblemSpec, ZERO2D, constant2d, poly2d

DIFF = HomogenizedTensors("diffusion", A_star=1.6)
ELAST = HomogenizedTensors("elasticity", K11=8 / 3, K12=0.0, K22=2 / 9)


def test_diffusion_nodal_exactness():
    for tensors, L, f in ((HomogenizedTensors("diffusion", A_star=1.0), 1.0, 1.0),
                          (DIFF, 2.0, 3.0)):
        s = PlateProblemSpec(L, 0.5, "diffusion", f=(constant2d(f),))
        u = hz.solve_homogenized(s, tensors, n=16)
        x = u.field.mesh.nodes
        np.testing.assert_allclose(u(x), x * (L - x) * f / (2 * tensors.A_star), atol=1e-9)


def test_clamped_beam_midpoint():
    s = PlateProblemSpec(1.0, 0.5, "bending", f=(ZERO2D, constant2d(1.0)))
    fe = hz.solve_homogenized(s, ELAST, n=8)
    cf = hz.closed_form_polynomial(s, ELAST)
    assert fe(0.5) == pytest.approx(9 / 768, abs=1e-10)
    assert cf(0.5) == pytest.approx(9 / 768, abs=1e-12)


def test_membrane_traction_load():
    c = 0.3
    s = PlateProblemSpec(1.0, 0.5, "membrane", h_plus=(Polynomial([c]), 0.0),
                         h_minus=(Polynomial([c]), 0.0))
    x = np.linspace(0, 1, 9)
    oracle = x * (1 - x) * 2 * c / (2 * ELAST.K11)
    np.testing.assert_allclose(hz.closed_form_polynomial(s, ELAST)(x), oracle, atol=1e-10)
    np.testing.assert_allclose(hz.solve_homogenized(s, ELAST, n=8)(x), oracle, atol=1e-10)


def test_closed_form_coefficients():
    L = 2.0
    s = PlateProblemSpec(L, 0.5, "diffusion", f=(constant2d(1.0),))
    p = hz.closed_form_polynomial(s, DIFF).poly
    np.testing.assert_allclose(p.coef, [0.0, L / (2 * 1.6), -1 / (2 * 1.6)], atol=1e-14)


def test_bending_quartic():
    L, q = 1.5, 2.0
    s = PlateProblemSpec(L, 0.5, "bending", f=(ZERO2D, constant2d(q)))
    x = np.linspace(0, L, 13)
    oracle = x**2 * (L - x) ** 2 * q / (24 * ELAST.K22)
    np.testing.assert_allclose(hz.closed_form_polynomial(s, ELAST)(x), oracle, atol=1e-12)


def test_zero_data():
    for mode, t in (("diffusion", DIFF), ("membrane", ELAST), ("bending", ELAST)):
        u = hz.closed_form_polynomial(PlateProblemSpec(1.0, 0.5, mode), t)
        assert not np.any(u.poly.coef)


def test_fe_matches_closed_form_with_lift_and_moments():
    s = PlateProblemSpec(1.0, 0.25, "bending", f=(poly2d([[0.0, 1.0], [0.0, 2.0]]),
                                                  poly2d([[1.0], [1.0]])),
                         gd=Polynomial([0, 0, 0, 0, 0.5]),
                         h_plus=(Polynomial([0.0, 1.0]), 0.2),
                         h_minus=(Polynomial([0.0, -1.0]), 0.2))
    fe = hz.solve_homogenized(s, ELAST, n=32)
    cf = hz.closed_form_polynomial(s, ELAST)
    x = np.linspace(0, 1, 33)
    np.testing.assert_allclose(fe(x), cf(x), atol=1e-10)
    np.testing.assert_allclose(fe.derivative(x, 1), cf.derivative(x, 1), atol=1e-9)

    d = PlateProblemSpec(1.0, 0.25, "diffusion", f=(constant2d(1.0),), g=[0.0, 0.0, 1.0])
    np.testing.assert_allclose(hz.solve_homogenized(d, DIFF, n=16)(np.linspace(0, 1, 17)),
                               hz.closed_form_polynomial(d, DIFF)(np.linspace(0, 1, 17)),
                               atol=1e-10)


def test_closed_form_rejects_callable_data():
    s = PlateProblemSpec(1.0, 0.5, "diffusion",
                         f=(Field2D(fn=lambda x1, x2: np.sin(x1) + 0 * x2),))
    with pytest.raises(UnsupportedDataError):
        hz.closed_form_polynomial(s, DIFF)
    # the FE path handles it
    assert hz.solve_homogenized(s, DIFF, n=8)(0.5) > 0


def test_derivative_orders():
    s = PlateProblemSpec(1.0, 0.5, "diffusion", f=(constant2d(1.0),))
    u = hz.solve_homogenized(s, DIFF, n=8)
    assert u.derivative(0.0, 1) == pytest.approx((0.125 * 0.875 / 3.2) / 0.125)
    with pytest.raises(UnsupportedDataError):
        u.derivative(0.5, 2)


def test_nonpositive_stiffness():
    with pytest.raises(InvalidArgumentError):
        hz.closed_form_polynomial(PlateProblemSpec(1.0, 0.5, "diffusion"),
                                  HomogenizedTensors("diffusion", A_star=0.0))
