import numpy as np
import pytest
import scipy.sparse as sp
import sympy

from platehomog import fem
from platehomog.coefficients import preset
from platehomog.errors import (CoefficientValidityError, CompatibilityError,
                               InvalidArgumentError, OutOfDomainError, SolverFailureError)
from platehomog.mesh import build_interval_mesh, build_rect_mesh, periodic_map

IDENTITY = lambda x, y: np.broadcast_to(np.eye(2), np.shape(x) + (2, 2))  # noqa: E731


def iso(lam=1.0, mu=1.0):
    C = np.array([[lam + 2 * mu, lam, 0], [lam, lam + 2 * mu, 0], [0, 0, mu]])
    return lambda x, y: np.broadcast_to(C, np.shape(x) + (3, 3))


def test_q1_laplacian_element():
    m = build_rect_mesh((0, 1), (0, 1), 1, 1)
    K = fem.assemble_scalar(m, IDENTITY).toarray()
    loc = m.cells[0]  # counter-clockwise element order
    K = K[np.ix_(loc, loc)]
    ref = np.array([[4, -1, -2, -1], [-1, 4, -1, -2], [-2, -1, 4, -1], [-1, -2, -1, 4]]) / 6
    np.testing.assert_allclose(K, ref, atol=1e-15)
    np.testing.assert_allclose(K.sum(axis=1), 0, atol=1e-15)


def test_scalar_kernel_constants(rng):
    m = build_rect_mesh((0, 2), (-0.5, 0.5), 7, 5)
    coeff = preset("stratified_aniso")
    K = fem.assemble_scalar(m, coeff, fem.ScaledGradientSpec(4.0))
    assert np.abs(K @ np.ones(m.n_nodes)).max() < 1e-12
    assert abs(K - K.T).max() < 1e-14


def test_periodic_sine_energy():
    m = build_rect_mesh((0, 1), (-0.5, 0.5), 64, 64)
    pm = periodic_map(m)
    K = fem.assemble_scalar(m, IDENTITY, periodic=pm)
    v = pm.reduce(np.sin(2 * np.pi * m.nodes[:, 0]))
    assert v @ K @ v == pytest.approx(2 * np.pi**2, rel=1e-2)


def test_elasticity_translations_and_rotation():
    m = build_rect_mesh((0, 1), (-0.5, 0.5), 5, 4)
    K = fem.assemble_elasticity(m, iso())
    for k in range(2):
        t = np.zeros(2 * m.n_nodes)
        t[k::2] = 1.0
        assert np.abs(K @ t).max() < 1e-12
    rot = np.column_stack([-m.nodes[:, 1], m.nodes[:, 0]]).ravel()
    assert abs(rot @ K @ rot) < 1e-12


def test_elasticity_uniform_strain_energy():
    m = build_rect_mesh((0, 1), (-0.5, 0.5), 3, 3)
    K = fem.assemble_elasticity(m, iso())
    u = np.column_stack([m.nodes[:, 0], 0 * m.nodes[:, 0]]).ravel()
    assert u @ K @ u == pytest.approx(3.0 * m.area, abs=1e-12)


def test_scaled_strain_of_transverse_field():
    # u = (0, x2): e^eps(u) = (0, 1/eps^2, 0)
    m = build_rect_mesh((0, 1), (-0.5, 0.5), 2, 2)
    fld = fem.interpolate(m, lambda x, y: np.column_stack([0 * x, y]), 2)
    _, grad = fem.field_at_quadrature(fld)
    e = fem.strain_from_gradient(grad, 4.0)
    np.testing.assert_allclose(e[..., 1], 16.0)
    np.testing.assert_allclose(e[..., [0, 2]], 0.0, atol=1e-14)


def test_scale_spec_validation():
    with pytest.raises(InvalidArgumentError):
        fem.ScaledGradientSpec(0.5)
    with pytest.raises(InvalidArgumentError):
        fem.ScaledGradientSpec(2.0, "plasticity")


def test_indefinite_coefficient_rejected():
    m = build_rect_mesh((0, 1), (0, 1), 2, 2)
    bad = lambda x, y: np.broadcast_to(np.diag([1.0, -1.0]), np.shape(x) + (2, 2))  # noqa: E731
    with pytest.raises(CoefficientValidityError):
        fem.assemble_scalar(m, bad)


def test_beam_element_against_symbolic_integration():
    x, h = sympy.symbols("x h", positive=True)
    s = x / h
    basis = [1 - 3 * s**2 + 2 * s**3, h * (s - 2 * s**2 + s**3), 3 * s**2 - 2 * s**3,
             h * (-s**2 + s**3)]
    d2 = [sympy.diff(b, x, 2) for b in basis]
    oracle = sympy.Matrix(4, 4, lambda i, j: sympy.integrate(d2[i] * d2[j], (x, 0, h)))
    for hv in (1.0, 0.3):
        ref = np.array(oracle.subs(h, hv).evalf(), dtype=float)
        np.testing.assert_allclose(fem.beam_element_matrix(hv), ref, rtol=1e-13, atol=1e-12)
    ref1 = np.array([[12, 6, -12, 6], [6, 4, -6, 2], [-12, -6, 12, -6], [6, 2, -6, 4]], float)
    np.testing.assert_allclose(fem.beam_element_matrix(1.0), ref1, atol=1e-12)


def test_beam_affine_kernel():
    mesh = build_interval_mesh(1.0, 5)
    M = fem.assemble_beam(mesh, 2.0)
    a, b = 0.7, -1.3
    v = np.column_stack([a + b * mesh.nodes, np.full(6, b)]).ravel()
    assert np.abs(M @ v).max() < 1e-12
    with pytest.raises(InvalidArgumentError):
        fem.assemble_beam(mesh, 0.0)


def test_beam_nested_cubic_solutions():
    def clamped(n):
        mesh = build_interval_mesh(1.0, n)
        M = fem.assemble_beam(mesh, 1.0)
        fixed = np.array([0, 1, 2 * n, 2 * n + 1])
        vals = np.array([0.0, 0.0, 0.3, -0.8])
        u = fem.solve_dirichlet(M, np.zeros(2 * (n + 1)), fixed, vals)
        return fem.FemField(mesh, 1, u, "HermiteCubic")

    one, two = clamped(1), clamped(2)
    w1, d1, _ = fem.eval_field(one, 0.5)
    assert w1 == pytest.approx(two.values[2], abs=1e-10)
    assert d1 == pytest.approx(two.values[3], abs=1e-10)


def test_p1_matrix():
    M = fem.assemble_p1(build_interval_mesh(1.0, 2), 3.0).toarray()
    np.testing.assert_allclose(M, 6 * np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]]))


def test_zero_loads_give_zero_vector():
    m = build_rect_mesh((0, 1), (-0.5, 0.5), 3, 2)
    assert not np.any(fem.volume_load(m, np.zeros((m.n_cells, 4)), 1))
    assert not np.any(fem.edge_load(m, "top", lambda x: 0 * x))


def test_cell_rhs_vanishes_for_identity():
    m = build_rect_mesh((0, 1), (-0.5, 0.5), 8, 8)
    pm = periodic_map(m)
    flux = np.zeros((m.n_cells, 4, 2))
    flux[..., 0] = -1.0
    b = fem.flux_load(m, flux, periodic=pm)
    assert np.abs(b).max() < 1e-12


def test_unit_load_single_cell():
    m = build_rect_mesh((0, 1), (-0.5, 0.5), 1, 1)
    b = fem.volume_load(m, np.ones((1, 4)))
    np.testing.assert_allclose(b, 0.25)


def test_edge_load_total():
    m = build_rect_mesh((0, 2), (-0.5, 0.5), 4, 2)
    b = fem.edge_load(m, "bottom", lambda x: np.column_stack([x.ravel(), 0 * x.ravel()]), 2)
    assert b[0::2].sum() == pytest.approx(2.0)
    assert not np.any(b[1::2])
    with pytest.raises(InvalidArgumentError):
        fem.edge_load(m, "left", lambda x: x)


def test_solve_spd_identity():
    b = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(fem.solve_spd(sp.identity(3, format="csr"), b), b)


def test_solve_spd_singular_with_nullspace():
    M = sp.csr_matrix([[1.0, -1.0], [-1.0, 1.0]])
    x = fem.solve_spd(M, np.array([1.0, -1.0]), nullspace=np.array([1.0, 1.0]) / np.sqrt(2))
    np.testing.assert_allclose(x, [0.5, -0.5], atol=1e-12)


def test_solve_spd_incompatible_rhs():
    M = sp.csr_matrix([[1.0, -1.0], [-1.0, 1.0]])
    with pytest.raises(CompatibilityError):
        fem.solve_spd(M, np.array([1.0, 0.0]), nullspace=np.array([1.0, 1.0]))


def test_solver_failure_reports_residual():
    n = 200
    M = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")
    with pytest.raises(SolverFailureError) as err:
        fem.solve_spd(M, np.ones(n), maxiter=3)
    assert err.value.iterations == 3 and err.value.residual > 1e-3


@pytest.mark.parametrize("prec", ["jacobi", "amg"])
def test_residual_postcondition(prec):
    m = build_rect_mesh((0, 1), (-0.5, 0.5), 16, 16)
    K = fem.assemble_scalar(m, preset("stratified_aniso"))
    free = np.setdiff1d(np.arange(m.n_nodes), fem.lateral_dofs(m, 1))
    A = K[free][:, free].tocsr()
    b = np.random.default_rng(0).standard_normal(len(free))
    x, info = fem.pcg(A, b, preconditioner=prec)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-9
    assert info.residual <= 1e-9


def test_unknown_preconditioner():
    with pytest.raises(InvalidArgumentError):
        fem.pcg(sp.identity(2, format="csr"), np.ones(2), preconditioner="ilu")


def test_eval_nodal_and_bilinear():
    m = build_rect_mesh((0, 2), (-0.5, 0.5), 4, 3)
    fld = fem.interpolate(m, lambda x, y: x * y)
    v, g = fem.eval_field(fld, m.nodes[:, 0], m.nodes[:, 1])
    np.testing.assert_allclose(v[:, 0], fld.values, atol=1e-15)
    c = m.cell_origins() + 0.5 * np.array([m.hx, m.hy])
    v, g = fem.eval_field(fld, c[:, 0], c[:, 1])
    np.testing.assert_allclose(v[:, 0], c[:, 0] * c[:, 1], atol=1e-14)
    np.testing.assert_allclose(g[:, 0, 0], c[:, 1], atol=1e-14)
    np.testing.assert_allclose(g[:, 0, 1], c[:, 0], atol=1e-14)


def test_eval_periodic_wrap_and_domain():
    m = build_rect_mesh((0, 1), (-0.5, 0.5), 8, 4)
    fld = fem.interpolate(m, lambda x, y: np.sin(2 * np.pi * x) + y)
    a = fem.eval_field(fld, 1.25, 0.1, periodic=True)
    b = fem.eval_field(fld, 0.25, 0.1, periodic=True)
    np.testing.assert_allclose(a[0], b[0])
    np.testing.assert_allclose(a[1], b[1])
    with pytest.raises(OutOfDomainError):
        fem.eval_field(fld, 1.25, 0.1)
    with pytest.raises(OutOfDomainError):
        fem.eval_field(fld, 0.5, 0.7, periodic=True)


def test_hermite_evaluation_reproduces_cubic():
    mesh = build_interval_mesh(1.0, 3)
    p = np.polynomial.Polynomial([0.1, -0.4, 0.9, 1.7])
    u = np.column_stack([p(mesh.nodes), p.deriv()(mesh.nodes)]).ravel()
    fld = fem.FemField(mesh, 1, u, "HermiteCubic")
    x = np.linspace(0, 1, 17)
    w, dw, d2w = fem.eval_field(fld, x)
    np.testing.assert_allclose(w, p(x), atol=1e-14)
    np.testing.assert_allclose(dw, p.deriv()(x), atol=1e-13)
    np.testing.assert_allclose(d2w, p.deriv(2)(x), atol=1e-12)


def test_amg_setup_is_deterministic_and_preserves_rng():
    m = build_rect_mesh((0, 1), (-0.5, 0.5), 16, 8)
    K = fem.assemble_elasticity(m, iso())
    free = np.setdiff1d(np.arange(2 * m.n_nodes), fem.lateral_dofs(m, 2))
    A = K[free][:, free].tocsr()
    b = np.ones(len(free))
    np.random.seed(7)
    before = np.random.get_state()[1].copy()
    x1, _ = fem.pcg(A, b, preconditioner="amg")
    np.testing.assert_array_equal(np.random.get_state()[1], before)
    x2, _ = fem.pcg(A, b, preconditioner="amg")
    np.testing.assert_array_equal(x1, x2)
