"""One-dimensional homogenized problems on (0, L).

Diffusion and membrane:  -K u'' = q  with u(0) = u(L) = 0 (P1 elements).
Bending:  K22 U'''' = q  with U, U' clamped at both ends (Hermite cubics).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from . import fem
from .cells import HomogenizedTensors
from .errors import InvalidArgumentError, UnsupportedDataError
from .mesh import build_interval_mesh, gauss_1d
from .problem import Field2D, PlateProblemSpec

_RULE = gauss_1d(6)


@dataclass
class HomogenizedSolution:
    mode: str
    L: float
    poly: Polynomial | None = None
    field: fem.FemField | None = None

    def derivative(self, x, order: int = 0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.poly is not None:
            return self.poly.deriv(order)(x) if order else self.poly(x)
        if order > 2 or (self.field.family == "P1" and order > 1):
            raise UnsupportedDataError(f"FE solution has no derivative of order {order}")
        if self.field.family == "P1":
            mesh = self.field.mesh
            e = np.clip(np.floor(x / mesh.h).astype(int), 0, mesh.n - 1)
            u0, u1 = self.field.values[e], self.field.values[e + 1]
            s = x / mesh.h - e
            return (1 - s) * u0 + s * u1 if order == 0 else (u1 - u0) / mesh.h
        return fem.eval_field(self.field, x)[order]

    def __call__(self, x):
        return self.derivative(x, 0)


def stiffness(spec: PlateProblemSpec, tensors: HomogenizedTensors) -> float:
    return {"diffusion": tensors.A_star, "membrane": tensors.K11,
            "bending": tensors.K22}[spec.mode]


def _val(fn, x):
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(np.asarray(fn(x), dtype=float), x.shape)


def _deriv_poly(p, m):
    if not isinstance(p, Polynomial):
        raise UnsupportedDataError("lift must be a polynomial")
    return p.deriv(m)


def _mean(f: Field2D, x, moment=False):
    return f.mean_values(x, (lambda t: t) if moment else None)


def solve_homogenized(spec: PlateProblemSpec, tensors: HomogenizedTensors,
                      n: int = 256) -> HomogenizedSolution:
    """FE solve with all load terms, reduced by x2-quadrature."""
    K = stiffness(spec, tensors)
    mesh = build_interval_mesh(spec.L, n)
    h = mesh.h
    xq = (np.arange(n)[:, None] + 0.5 * (_RULE.points[None, :] + 1.0)) * h  # (n, nq)
    wq = 0.5 * h * _RULE.weights
    if spec.mode in ("diffusion", "membrane"):
        q = _mean(spec.f[0], xq) + _val(spec.h_plus[0], xq) + _val(spec.h_minus[0], xq)
        lift = spec.g if spec.mode == "diffusion" else spec.g1
        gp = _val(_deriv_poly(lift, 1), xq)
        s = (xq - np.arange(n)[:, None] * h) / h
        N = np.stack([1 - s, s], axis=-1)
        dN = np.array([-1.0, 1.0]) / h
        Fe = np.einsum("q,eq,eqa->ea", wq, q, N) - K * np.einsum("q,eq,a->ea", wq, gp, dN)
        b = np.zeros(n + 1)
        np.add.at(b, np.column_stack([np.arange(n), np.arange(n) + 1]), Fe)
        M = fem.assemble_p1(mesh, K)
        u = fem.solve_dirichlet(M, b, np.array([0, n]))
        return HomogenizedSolution(spec.mode, spec.L, field=fem.FemField(mesh, 1, u, "P1"))
    # bending
    q0 = _mean(spec.f[1], xq) + _val(spec.h_plus[1], xq) + _val(spec.h_minus[1], xq)
    q1 = (_mean(spec.f[0], xq, moment=True)
          + 0.5 * (_val(spec.h_plus[0], xq) - _val(spec.h_minus[0], xq)))
    gdd = _val(_deriv_poly(spec.gd, 2), xq)
    t = xq - np.arange(n)[:, None] * h
    H, dH, d2H, _ = fem.hermite_basis(t, h)
    Fe = (np.einsum("q,eq,eqa->ea", wq, q0, H) - np.einsum("q,eq,eqa->ea", wq, q1, dH)
          - K * np.einsum("q,eq,eqa->ea", wq, gdd, d2H))
    b = np.zeros(2 * (n + 1))
    np.add.at(b, fem.beam_dofs(mesh), Fe)
    M = fem.assemble_beam(mesh, K)
    u = fem.solve_dirichlet(M, b, np.array([0, 1, 2 * n, 2 * n + 1]))
    return HomogenizedSolution("bending", spec.L,
                               field=fem.FemField(mesh, 1, u, "HermiteCubic"))


def _poly_load(fn, what):
    if not isinstance(fn, Polynomial):
        raise UnsupportedDataError(f"closed form needs a polynomial {what}")
    return fn


def _antiderivative(p: Polynomial, m: int) -> Polynomial:
    return p.integ(m, lbnd=0.0)


def closed_form_polynomial(spec: PlateProblemSpec, tensors: HomogenizedTensors
                           ) -> HomogenizedSolution:
    """Exact polynomial solution for polynomial loads and constant tensors."""
    K = stiffness(spec, tensors)
    if not K > 0:
        raise InvalidArgumentError(f"homogenized stiffness must be positive, got {K}")
    L = spec.L
    for f in spec.f:
        if not f.is_polynomial:
            raise UnsupportedDataError("closed form needs polynomial volume loads")
    hp = [_poly_load(h, "traction") for h in spec.h_plus]
    hm = [_poly_load(h, "traction") for h in spec.h_minus]
    if spec.mode in ("diffusion", "membrane"):
        g = _poly_load(spec.g if spec.mode == "diffusion" else spec.g1, "lift")
        q = spec.f[0].mean() + hp[0] + hm[0] + K * g.deriv(2)
        # u = -(1/K) int int q + c0 + c1 x with u(0) = u(L) = 0
        part = -_antiderivative(q, 2) / K
        c1 = -part(L) / L
        u = part + Polynomial([0.0, c1])
        return HomogenizedSolution(spec.mode, L, poly=u.trim())
    gd = _poly_load(spec.gd, "lift")
    q = (spec.f[1].mean() + hp[1] + hm[1] + spec.f[0].moment().deriv()
         + 0.5 * (hp[0] - hm[0]).deriv() - K * gd.deriv(4))
    part = _antiderivative(q, 4) / K
    # add c2 x^2 + c3 x^3 so that U(L) = U'(L) = 0 (U(0) = U'(0) = 0 already)
    A = np.array([[L**2, L**3], [2 * L, 3 * L**2]])
    rhs = -np.array([part(L), part.deriv()(L)])
    c2, c3 = np.linalg.solve(A, rhs)
    u = part + Polynomial([0.0, 0.0, c2, c3])
    return HomogenizedSolution("bending", L, poly=u.trim())
