"""Q1 / Hermite finite-element assembly, preconditioned CG and field evaluation.

Vector fields use interleaved dofs ``2 * node + component``.  Elasticity strain
vectors follow the Voigt layout ``(e11, e22, 2 e12)`` of :mod:`coefficients`.
Scaled operators act per quadrature point: with scale factor ``s`` the scalar
gradient is ``(d1 u, s d2 u)`` and the strain is ``(e11, s^2 e22, 2 s e12)``.
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import (CoefficientValidityError, CompatibilityError, InvalidArgumentError,
                     OutOfDomainError, SolverFailureError)
from .mesh import LINE_2, LINE_3, QUAD_2x2, IntervalMesh, PeriodicDofMap, Quadrature, RectMesh

log = logging.getLogger(__name__)

CG_TOL = 1e-10
CG_MAXITER = 50_000
_AMG_LOCK = threading.Lock()


@dataclass(frozen=True)
class ScaledGradientSpec:
    inv_eps: float = 1.0
    mode: str = "scalar"

    def __post_init__(self):
        if self.inv_eps < 1.0:
            raise InvalidArgumentError(f"scale factor must be >= 1, got {self.inv_eps}")
        if self.mode not in ("scalar", "elasticity"):
            raise InvalidArgumentError(f"unknown mode {self.mode!r}")


UNSCALED_SCALAR = ScaledGradientSpec(1.0, "scalar")
UNSCALED_ELASTIC = ScaledGradientSpec(1.0, "elasticity")


@dataclass
class FemField:
    mesh: RectMesh | IntervalMesh
    components: int
    values: np.ndarray
    family: str = "Q1"

    def component(self, k: int) -> np.ndarray:
        return self.values.reshape(-1, self.components)[:, k]


# --- Q1 reference element -----------------------------------------------------

def q1_shape(s, t):
    """Bilinear shape functions on [0, 1]^2 in counterclockwise node order."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    N = np.stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t], axis=-1)
    dNs = np.stack([-(1 - t), 1 - t, t, -t], axis=-1)
    dNt = np.stack([-(1 - s), -s, s, 1 - s], axis=-1)
    return N, dNs, dNt


def _ref_points(quad: Quadrature):
    return 0.5 * (quad.points[:, 0] + 1.0), 0.5 * (quad.points[:, 1] + 1.0)


def scalar_operator(mesh: RectMesh, scale: ScaledGradientSpec, quad=QUAD_2x2) -> np.ndarray:
    """Scaled gradient matrices at the reference quadrature points, (nq, 2, 4)."""
    s, t = _ref_points(quad)
    _, dNs, dNt = q1_shape(s, t)
    G = np.empty((len(s), 2, 4))
    G[:, 0, :] = dNs / mesh.hx
    G[:, 1, :] = scale.inv_eps * dNt / mesh.hy
    return G


def strain_operator(mesh: RectMesh, scale: ScaledGradientSpec, quad=QUAD_2x2) -> np.ndarray:
    """Scaled Voigt strain matrices at the reference quadrature points, (nq, 3, 8)."""
    s, t = _ref_points(quad)
    _, dNs, dNt = q1_shape(s, t)
    dx = dNs / mesh.hx
    dy = dNt / mesh.hy
    k = scale.inv_eps
    B = np.zeros((len(s), 3, 8))
    B[:, 0, 0::2] = dx
    B[:, 1, 1::2] = k * k * dy
    B[:, 2, 0::2] = k * dy
    B[:, 2, 1::2] = k * dx
    return B


def cell_dofs(mesh: RectMesh, components: int, periodic: PeriodicDofMap | None = None):
    nodes = mesh.cells if periodic is None else periodic.full_to_reduced[mesh.cells]
    if components == 1:
        return nodes
    return (components * nodes[:, :, None] + np.arange(components)).reshape(len(nodes), -1)


def n_dofs(mesh: RectMesh, components: int, periodic: PeriodicDofMap | None = None) -> int:
    nn = mesh.n_nodes if periodic is None else periodic.n_reduced
    return components * nn


def coefficient_at_quadrature(mesh: RectMesh, coeff, quad=QUAD_2x2) -> np.ndarray:
    """Evaluate ``coeff(x, y)`` (or pass through an array) at the mesh quadrature points."""
    if isinstance(coeff, np.ndarray):
        return coeff
    X = mesh.quadrature_points(quad)
    return np.asarray(coeff(X[..., 0], X[..., 1]), dtype=float)


def _check_spd(C: np.ndarray) -> None:
    ev = np.linalg.eigvalsh(C.reshape(-1, C.shape[-1], C.shape[-1]))
    if ev.min() <= 0:
        raise CoefficientValidityError(
            f"coefficient sample with non-positive eigenvalue {ev.min():.3e}")


def _assemble(Ke: np.ndarray, dofs: np.ndarray, n: int) -> sp.csr_matrix:
    m = dofs.shape[1]
    rows = np.repeat(dofs, m, axis=1).ravel()
    cols = np.tile(dofs, (1, m)).ravel()
    M = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M.sum_duplicates()
    M.sort_indices()
    return M


def assemble_scalar(mesh: RectMesh, coeff, scale: ScaledGradientSpec = UNSCALED_SCALAR,
                    periodic: PeriodicDofMap | None = None, quad=QUAD_2x2) -> sp.csr_matrix:
    """Stiffness matrix of  int A grad_s u . grad_s v  (coeff callable on physical x, y)."""
    C = coefficient_at_quadrature(mesh, coeff, quad)
    _check_spd(C)
    G = scalar_operator(mesh, scale, quad)
    w = mesh.quadrature_weights(quad)
    Ke = np.einsum("q,qia,cqij,qjb->cab", w, G, C, G, optimize=True)
    return _assemble(Ke, cell_dofs(mesh, 1, periodic), n_dofs(mesh, 1, periodic))


def assemble_elasticity(mesh: RectMesh, coeff, scale: ScaledGradientSpec = UNSCALED_ELASTIC,
                        periodic: PeriodicDofMap | None = None, quad=QUAD_2x2) -> sp.csr_matrix:
    """Stiffness matrix of  int A e_s(u) : e_s(v)  with Voigt coefficient values."""
    C = coefficient_at_quadrature(mesh, coeff, quad)
    _check_spd(C)
    B = strain_operator(mesh, scale, quad)
    w = mesh.quadrature_weights(quad)
    Ke = np.einsum("q,qia,cqij,qjb->cab", w, B, C, B, optimize=True)
    return _assemble(Ke, cell_dofs(mesh, 2, periodic), n_dofs(mesh, 2, periodic))


def hermite_basis(t, h):
    """Hermite cubic basis on [0, h] for dofs (w0, w0', w1, w1') with derivatives."""
    t = np.asarray(t, dtype=float)
    s = t / h
    H = np.stack([1 - 3 * s**2 + 2 * s**3, h * (s - 2 * s**2 + s**3),
                  3 * s**2 - 2 * s**3, h * (-s**2 + s**3)], axis=-1)
    dH = np.stack([(-6 * s + 6 * s**2) / h, 1 - 4 * s + 3 * s**2,
                   (6 * s - 6 * s**2) / h, -2 * s + 3 * s**2], axis=-1)
    d2H = np.stack([(-6 + 12 * s) / h**2, (-4 + 6 * s) / h,
                    (6 - 12 * s) / h**2, (-2 + 6 * s) / h], axis=-1)
    d3H = np.stack([np.full_like(s, 12 / h**3), np.full_like(s, 6 / h**2),
                    np.full_like(s, -12 / h**3), np.full_like(s, 6 / h**2)], axis=-1)
    return H, dH, d2H, d3H


def beam_element_matrix(h: float, K: float = 1.0, quad=LINE_3) -> np.ndarray:
    t = 0.5 * h * (quad.points + 1.0)
    _, _, d2H, _ = hermite_basis(t, h)
    return K * 0.5 * h * np.einsum("q,qa,qb->ab", quad.weights, d2H, d2H)


def beam_dofs(mesh: IntervalMesh) -> np.ndarray:
    e = np.arange(mesh.n)
    return np.column_stack([2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3])


def assemble_beam(mesh: IntervalMesh, K: float) -> sp.csr_matrix:
    """Hermite cubic matrix of  int K u'' v''; dofs (w_i, w_i') interleaved."""
    if not K > 0:
        raise InvalidArgumentError(f"bending stiffness must be positive, got {K}")
    Ke = np.broadcast_to(beam_element_matrix(mesh.h, K), (mesh.n, 4, 4))
    return _assemble(np.ascontiguousarray(Ke), beam_dofs(mesh), 2 * (mesh.n + 1))


def assemble_p1(mesh: IntervalMesh, K: float) -> sp.csr_matrix:
    """P1 matrix of  int K u' v'  on an interval mesh."""
    if not K > 0:
        raise InvalidArgumentError(f"coefficient must be positive, got {K}")
    Ke = K / mesh.h * np.array([[1.0, -1.0], [-1.0, 1.0]])
    e = np.arange(mesh.n)
    dofs = np.column_stack([e, e + 1])
    return _assemble(np.ascontiguousarray(np.broadcast_to(Ke, (mesh.n, 2, 2))), dofs, mesh.n + 1)


# --- load vectors ---------------------------------------------------------------

def volume_load(mesh: RectMesh, values: np.ndarray, components: int = 1,
                periodic: PeriodicDofMap | None = None, quad=QUAD_2x2) -> np.ndarray:
    """int f . v for f given at quadrature points, shape (nc, nq) or (nc, nq, comp)."""
    s, t = _ref_points(quad)
    N, _, _ = q1_shape(s, t)
    w = mesh.quadrature_weights(quad)
    vals = np.asarray(values, dtype=float).reshape(mesh.n_cells, len(w), components)
    Fe = np.einsum("q,qa,cqk->cak", w, N, vals).reshape(mesh.n_cells, -1)
    b = np.zeros(n_dofs(mesh, components, periodic))
    np.add.at(b, cell_dofs(mesh, components, periodic), Fe)
    return b


def flux_load(mesh: RectMesh, flux: np.ndarray, scale: ScaledGradientSpec = UNSCALED_SCALAR,
              periodic: PeriodicDofMap | None = None, quad=QUAD_2x2) -> np.ndarray:
    """int F . grad_s v for a vector field F given at quadrature points (nc, nq, 2)."""
    G = scalar_operator(mesh, scale, quad)
    w = mesh.quadrature_weights(quad)
    Fe = np.einsum("q,qia,cqi->ca", w, G, flux)
    b = np.zeros(n_dofs(mesh, 1, periodic))
    np.add.at(b, cell_dofs(mesh, 1, periodic), Fe)
    return b


def stress_load(mesh: RectMesh, stress: np.ndarray, scale: ScaledGradientSpec = UNSCALED_ELASTIC,
                periodic: PeriodicDofMap | None = None, quad=QUAD_2x2) -> np.ndarray:
    """int sigma : e_s(v) for Voigt stresses (s11, s22, s12) at quadrature points."""
    B = strain_operator(mesh, scale, quad)
    w = mesh.quadrature_weights(quad)
    Fe = np.einsum("q,qia,cqi->ca", w, B, stress)
    b = np.zeros(n_dofs(mesh, 2, periodic))
    np.add.at(b, cell_dofs(mesh, 2, periodic), Fe)
    return b


def edge_load(mesh: RectMesh, side: str, fn: Callable, components: int = 1,
              quad=LINE_2) -> np.ndarray:
    """int_side h . v  for h(x) (top/bottom edges), h returning (n,) or (n, comp)."""
    if side not in ("top", "bottom"):
        raise InvalidArgumentError("edge loads are supported on top/bottom only")
    nodes = mesh.boundary_nodes(side)
    x0 = mesh.x_coords[:-1]
    t = 0.5 * (quad.points + 1.0)
    xq = x0[:, None] + mesh.hx * t[None, :]
    vals = np.asarray(fn(xq), dtype=float).reshape(mesh.nx, len(t), components)
    N = np.column_stack([1 - t, t])
    Fe = 0.5 * mesh.hx * np.einsum("q,qa,eqk->eak", quad.weights, N, vals)
    edge_nodes = np.column_stack([nodes[:-1], nodes[1:]])
    dofs = (components * edge_nodes[:, :, None] + np.arange(components)).reshape(mesh.nx, -1)
    b = np.zeros(components * mesh.n_nodes)
    np.add.at(b, dofs, Fe.reshape(mesh.nx, -1))
    return b


# --- constraints ------------------------------------------------------------

def lateral_dofs(mesh: RectMesh, components: int) -> np.ndarray:
    nodes = np.concatenate([mesh.boundary_nodes("left"), mesh.boundary_nodes("right")])
    return (components * nodes[:, None] + np.arange(components)).ravel()


def solve_dirichlet(M: sp.csr_matrix, rhs: np.ndarray, fixed: np.ndarray, fixed_values=None,
                    **solver_kwargs) -> np.ndarray:
    """Symmetric elimination of prescribed dofs with right-hand-side lift."""
    n = M.shape[0]
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    x = np.zeros(n)
    if fixed_values is not None:
        x[fixed] = fixed_values
    free = np.flatnonzero(mask)
    b = rhs[free] - (M[free][:, fixed] @ x[fixed] if fixed_values is not None else 0.0)
    x[free] = solve_spd(M[free][:, free].tocsr(), b, **solver_kwargs)
    return x


# --- solver -----------------------------------------------------------------

def _orthonormal(nullspace, n):
    if nullspace is None:
        return None
    N = np.asarray(nullspace, dtype=float).reshape(-1, n).T
    Q, _ = np.linalg.qr(N)
    return Q


def _preconditioner(M, kind, near_nullspace=None):
    if callable(kind):
        return kind
    if kind == "jacobi":
        d = M.diagonal()
        if np.any(d <= 0):
            raise SolverFailureError("non-positive diagonal entry; matrix is not SPD")
        inv = 1.0 / d
        return lambda r: inv * r
    if kind == "amg":
        import pyamg

        B = None if near_nullspace is None else np.asarray(near_nullspace, dtype=float).T
        # pyamg seeds its spectral-radius estimates from the global RNG; pin it so
        # repeated solves are bit-identical, and leave the caller's state untouched
        with _AMG_LOCK:
            state = np.random.get_state()
            np.random.seed(0)
            try:
                ml = pyamg.smoothed_aggregation_solver(M, B=B, symmetry="symmetric")
            finally:
                np.random.set_state(state)
        P = ml.aspreconditioner(cycle="V")
        return lambda r: P @ r
    raise InvalidArgumentError(f"unknown preconditioner {kind!r}")


@dataclass
class SolveInfo:
    iterations: int
    residual: float
    restarts: int
    floor: float = 0.0


def rounding_floor(M, x, b) -> float:
    """Relative residual attainable in double precision: u |M| |x| / |b|."""
    bn = np.linalg.norm(b)
    if bn == 0.0:
        return 0.0
    return float(np.finfo(float).eps * np.linalg.norm(abs(M) @ np.abs(x)) / bn)


def pcg(M, rhs, nullspace=None, tol=CG_TOL, maxiter=CG_MAXITER, preconditioner="jacobi",
        near_nullspace=None, x0=None):
    """Preconditioned CG with iterates and residuals projected off ``nullspace``.

    Returns ``(x, SolveInfo)``; ``x`` is orthogonal to the nullspace basis.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = len(rhs)
    Q = _orthonormal(nullspace, n)

    def project(v):
        return v if Q is None else v - Q @ (Q.T @ v)

    bnorm = np.linalg.norm(rhs)
    if Q is not None:
        incompat = np.linalg.norm(Q.T @ rhs)
        if incompat > 1e-10 * max(bnorm, 1e-300):
            raise CompatibilityError(
                f"right-hand side has nullspace component {incompat:.3e} (|b| = {bnorm:.3e})")
        rhs = project(rhs)
        bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros(n), SolveInfo(0, 0.0, 0)
    prec = _preconditioner(M, preconditioner, near_nullspace)

    x = np.zeros(n) if x0 is None else project(np.array(x0, dtype=float))
    total = 0
    restarts = 0
    while True:
        r = project(rhs - M @ x)
        z = project(prec(r))
        p = z.copy()
        rz = r @ z
        rnorm = np.linalg.norm(r)
        while rnorm > tol * bnorm and total < maxiter:
            Mp = M @ p
            alpha = rz / (p @ Mp)
            x += alpha * p
            r -= alpha * Mp
            r = project(r)
            z = project(prec(r))
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
            rnorm = np.linalg.norm(r)
            total += 1
        true_res = np.linalg.norm(project(rhs - M @ x)) / bnorm
        # thin-plate systems can have a rounding floor above tol; accept at that floor
        floor = 16 * rounding_floor(M, x, rhs)
        accept = max(10 * tol, floor)
        if true_res <= accept or total >= maxiter or restarts >= 5:
            break
        restarts += 1
    x = project(x)
    info = SolveInfo(total, true_res, restarts, floor)
    if true_res > accept:
        raise SolverFailureError(
            f"CG did not converge: relative residual {true_res:.3e} after {total} iterations",
            residual=true_res, iterations=total)
    log.debug("pcg: n=%d it=%d res=%.2e", n, total, true_res)
    return x, info


def solve_spd(M, rhs, nullspace=None, **kwargs) -> np.ndarray:
    x, _ = pcg(M, rhs, nullspace=nullspace, **kwargs)
    return x


# --- field evaluation ---------------------------------------------------------

def eval_field(field: FemField, x, y=None, periodic: bool = False):
    """Value and gradient of a field at points.

    Q1 fields: ``(values, gradients)`` with shapes ``(..., comp)`` and
    ``(..., comp, 2)``.  Hermite fields (``y`` unused): ``(w, w', w'')``.
    """
    if field.family == "HermiteCubic":
        return _eval_hermite(field, x)
    mesh = field.mesh
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if periodic:
        width = mesh.x_range[1] - mesh.x_range[0]
        x = mesh.x_range[0] + np.mod(x - mesh.x_range[0], width)
    tol = 1e-12 * max(1.0, abs(mesh.x_range[1]), abs(mesh.y_range[1]))
    if (np.any(x < mesh.x_range[0] - tol) or np.any(x > mesh.x_range[1] + tol)
            or np.any(y < mesh.y_range[0] - tol) or np.any(y > mesh.y_range[1] + tol)):
        raise OutOfDomainError("evaluation point outside the mesh")
    ci, cj, s, t = mesh.locate(x, y)
    nodes = mesh.cells[cj * mesh.nx + ci]
    N, dNs, dNt = q1_shape(s, t)
    vals = field.values.reshape(-1, field.components)[nodes]
    v = np.einsum("...a,...ak->...k", N, vals)
    gx = np.einsum("...a,...ak->...k", dNs, vals) / mesh.hx
    gy = np.einsum("...a,...ak->...k", dNt, vals) / mesh.hy
    return v, np.stack([gx, gy], axis=-1)


def _eval_hermite(field: FemField, x):
    mesh = field.mesh
    x = np.asarray(x, dtype=float)
    tol = 1e-12 * max(1.0, mesh.length)
    if np.any(x < -tol) or np.any(x > mesh.length + tol):
        raise OutOfDomainError("evaluation point outside the interval")
    e = np.clip(np.floor(x / mesh.h).astype(int), 0, mesh.n - 1)
    H, dH, d2H, _ = hermite_basis(x - e * mesh.h, mesh.h)
    dofs = field.values[beam_dofs(mesh)[e]]
    return ((H * dofs).sum(-1), (dH * dofs).sum(-1), (d2H * dofs).sum(-1))


def field_at_quadrature(field: FemField, quad=QUAD_2x2):
    """Values (nc, nq, comp) and unscaled gradients (nc, nq, comp, 2) at the field's own mesh."""
    mesh = field.mesh
    s, t = _ref_points(quad)
    N, dNs, dNt = q1_shape(s, t)
    vals = field.values.reshape(-1, field.components)[mesh.cells]
    v = np.einsum("qa,cak->cqk", N, vals)
    gx = np.einsum("qa,cak->cqk", dNs, vals) / mesh.hx
    gy = np.einsum("qa,cak->cqk", dNt, vals) / mesh.hy
    return v, np.stack([gx, gy], axis=-1)


def strain_from_gradient(grad: np.ndarray, inv_eps: float = 1.0) -> np.ndarray:
    """Scaled Voigt strain (e11, s^2 e22, 2 s e12) from displacement gradients (..., 2, 2)."""
    k = inv_eps
    return np.stack([grad[..., 0, 0], k * k * grad[..., 1, 1],
                     k * (grad[..., 0, 1] + grad[..., 1, 0])], axis=-1)


def interpolate(mesh: RectMesh, fn, components: int = 1) -> FemField:
    """Nodal interpolant of fn(x, y) -> (n,) or (n, comp)."""
    vals = np.asarray(fn(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=float)
    return FemField(mesh, components, vals.reshape(-1).copy())
