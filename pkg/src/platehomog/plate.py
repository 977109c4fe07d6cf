"""Oscillatory plate solves on the rescaled domain, norms and scaled stresses."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .coefficients import ElasticityCoefficient, ScalarCoefficient
from .errors import InvalidArgumentError
from .mesh import QUAD_2x2, RectMesh, build_rect_mesh
from .problem import PlateProblemSpec


@dataclass
class PlateSolution:
    u: fem.FemField
    spec: PlateProblemSpec
    coeff: object
    solve_time: float = 0.0
    iterations: int = 0
    residual: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def mesh(self) -> RectMesh:
        return self.u.mesh

    def coefficient_values(self) -> np.ndarray:
        if "C" not in self._cache:
            eps = self.spec.eps
            self._cache["C"] = fem.coefficient_at_quadrature(
                self.mesh, lambda x, y: self.coeff(x / eps, y))
        return self._cache["C"]

    def scaled_gradient(self) -> np.ndarray:
        """grad^eps u (scalar) or Voigt e^eps(u) at quadrature points."""
        if "grad" not in self._cache:
            _, grad = fem.field_at_quadrature(self.u)
            s = 1.0 / self.spec.eps
            if self.spec.is_elastic:
                self._cache["grad"] = fem.strain_from_gradient(grad, s)
            else:
                g = grad[..., 0, :].copy()
                g[..., 1] *= s
                self._cache["grad"] = g
        return self._cache["grad"]

    def stress(self) -> np.ndarray:
        """sigma = A^eps e^eps(u + g) in Voigt form (s11, s22, s12), or the diffusion flux."""
        if "sigma" not in self._cache:
            X = self.mesh.quadrature_points()
            e = self.scaled_gradient().copy()
            e[..., 0] += self.spec.lift_gradient(X[..., 0], X[..., 1])
            self._cache["sigma"] = np.einsum("cqij,cqj->cqi", self.coefficient_values(), e)
        return self._cache["sigma"]


def plate_mesh(spec: PlateProblemSpec, physical: bool = False) -> RectMesh:
    h = spec.eps if physical else 1.0
    return build_rect_mesh((0.0, spec.L), (-0.5 * h, 0.5 * h), spec.nx, spec.n2)


def _check_coeff(spec, coeff):
    want = ElasticityCoefficient if spec.is_elastic else ScalarCoefficient
    if not isinstance(coeff, want):
        raise InvalidArgumentError(f"{spec.mode} problem needs a {want.__name__}")


def _near_nullspace(mesh: RectMesh) -> np.ndarray:
    # translations and the infinitesimal rotation (-x2, x1), which e^eps also annihilates
    X = mesh.nodes
    B = np.zeros((3, 2 * mesh.n_nodes))
    B[0, 0::2] = 1.0
    B[1, 1::2] = 1.0
    B[2, 0::2] = -X[:, 1]
    B[2, 1::2] = X[:, 0]
    return B


def assemble_rhs(mesh: RectMesh, spec: PlateProblemSpec, C: np.ndarray,
                 scale: fem.ScaledGradientSpec, physical: bool = False) -> np.ndarray:
    """Volume load, top/bottom tractions and the lift term  -int A grad g . grad v.

    ``physical`` selects the thin-domain form of the diffusion problem:
    load f(x1, x2/eps) and tractions eps h.
    """
    X = mesh.quadrature_points()
    x1, x2 = X[..., 0], X[..., 1]
    if physical:
        x2 = x2 / spec.eps
    nc = spec.components
    fvals = np.stack([spec.f[k](x1, x2) for k in range(nc)], axis=-1)
    b = fem.volume_load(mesh, fvals, nc)
    hscale = spec.eps if physical else 1.0
    for side, h in (("top", spec.h_plus), ("bottom", spec.h_minus)):
        b += fem.edge_load(mesh, side, lambda x: hscale * np.stack(
            [np.broadcast_to(np.asarray(h[k](x), dtype=float), x.shape) for k in range(nc)],
            axis=-1), nc)
    lift = spec.lift_gradient(x1, x2)
    if np.any(lift):
        if spec.is_elastic:
            b += fem.stress_load(mesh, -lift[..., None] * C[..., :, 0], scale)
        else:
            b += fem.flux_load(mesh, -lift[..., None] * C[..., :, 0], scale)
    return b


def solve_oscillatory(spec: PlateProblemSpec, coeff, preconditioner: str | None = None,
                      **solver) -> PlateSolution:
    """FE solution of the rescaled problem with clamped lateral edges.

    Elasticity defaults to AMG-preconditioned CG: Jacobi stalls on thin bending
    solves at small eps.
    """
    _check_coeff(spec, coeff)
    mesh = plate_mesh(spec)
    eps = spec.eps
    nc = spec.components
    C = fem.coefficient_at_quadrature(mesh, lambda x, y: coeff(x / eps, y))
    scale = fem.ScaledGradientSpec(1.0 / eps, "elasticity" if spec.is_elastic else "scalar")
    t0 = time.perf_counter()
    if spec.is_elastic:
        M = fem.assemble_elasticity(mesh, C, scale)
    else:
        M = fem.assemble_scalar(mesh, C, scale)
    b = assemble_rhs(mesh, spec, C, scale)
    if preconditioner is None:
        preconditioner = "amg" if spec.is_elastic else "jacobi"
    fixed = fem.lateral_dofs(mesh, nc)
    mask = np.ones(len(b), dtype=bool)
    mask[fixed] = False
    kwargs = dict(solver)
    if preconditioner == "amg" and spec.is_elastic:
        kwargs["near_nullspace"] = _near_nullspace(mesh)[:, mask]
    u = np.zeros(len(b))
    info = fem.SolveInfo(0, 0.0, 0)
    if np.any(b):
        A = M[mask][:, mask].tocsr()
        u[mask], info = fem.pcg(A, b[mask], preconditioner=preconditioner, **kwargs)
    elapsed = time.perf_counter() - t0
    sol = PlateSolution(fem.FemField(mesh, nc, u), spec, coeff, elapsed, info.iterations,
                        info.residual)
    sol._cache["C"] = C
    sol._cache["M"] = M
    sol._cache["b"] = b
    return sol


def solve_physical_diffusion(spec: PlateProblemSpec, coeff, **solver) -> fem.FemField:
    """Diffusion on the thin domain (0, L) x (-eps/2, eps/2) with unscaled gradient."""
    if spec.mode != "diffusion":
        raise InvalidArgumentError("the physical-domain solver handles diffusion only")
    _check_coeff(spec, coeff)
    mesh = plate_mesh(spec, physical=True)
    eps = spec.eps
    C = fem.coefficient_at_quadrature(mesh, lambda x, y: coeff(x / eps, y / eps))
    M = fem.assemble_scalar(mesh, C)
    b = assemble_rhs(mesh, spec, C, fem.UNSCALED_SCALAR, physical=True)
    fixed = fem.lateral_dofs(mesh, 1)
    u = np.zeros(len(b))
    if np.any(b):
        u = fem.solve_dirichlet(M, b, fixed, **solver)
    return fem.FemField(mesh, 1, u)


# --- norms --------------------------------------------------------------------

def _weights(mesh):
    return mesh.quadrature_weights(QUAD_2x2)


def norm_parts(values: np.ndarray, scaled_grad: np.ndarray, mesh: RectMesh, L: float,
               eps: float, elastic: bool) -> dict:
    """Norm components from quadrature-point values and scaled gradients/strains."""
    w = _weights(mesh)
    if elastic:
        l2_sq = np.einsum("q,cqk->", w, values**2)
        l2w_sq = (np.einsum("q,cq->", w, values[..., 0] ** 2)
                  + np.einsum("q,cq->", w, values[..., 1] ** 2) / L**2)
        # tensor norm of a Voigt strain (e11, e22, 2 e12)
        en_sq = np.einsum("q,cq->", w, scaled_grad[..., 0] ** 2 + scaled_grad[..., 1] ** 2
                          + 0.5 * scaled_grad[..., 2] ** 2)
        h1_sq = l2w_sq / max(L, eps**2 / L) ** 2 + en_sq
    else:
        vals = values.reshape(values.shape[0], values.shape[1], -1)[..., 0]
        l2_sq = np.einsum("q,cq->", w, vals**2)
        l2w_sq = l2_sq
        en_sq = np.einsum("q,cqk->", w, scaled_grad**2)
        h1_sq = l2_sq / max(eps, L) ** 2 + en_sq
    return {"h1eps": float(np.sqrt(h1_sq)), "l2": float(np.sqrt(l2_sq)),
            "l2w": float(np.sqrt(l2w_sq)), "energy_part": float(np.sqrt(en_sq))}


def _field_parts(fld: fem.FemField, spec: PlateProblemSpec) -> dict:
    vals, grad = fem.field_at_quadrature(fld)
    s = 1.0 / spec.eps
    if spec.is_elastic:
        sg = fem.strain_from_gradient(grad, s)
    else:
        sg = grad[..., 0, :] * np.array([1.0, s])
    return norm_parts(vals, sg, fld.mesh, spec.L, spec.eps, spec.is_elastic)


def h1_eps_norm(fld: fem.FemField, spec: PlateProblemSpec) -> float:
    return _field_parts(fld, spec)["h1eps"]


def l2w_norm(fld: fem.FemField, spec: PlateProblemSpec) -> float:
    return _field_parts(fld, spec)["l2w"]


def extract_Sigma(sol: PlateSolution) -> np.ndarray:
    """Scaled stress (S11, S22, S12) = (s11, s22 / eps^2, s12 / eps) at quadrature points."""
    if not sol.spec.is_elastic:
        raise InvalidArgumentError("scaled stresses exist for elasticity only")
    eps = sol.spec.eps
    return sol.stress() * np.array([1.0, eps**-2, eps**-1])


def weak_residual(sol: PlateSolution, n_tests: int = 20, seed: int = 0) -> float:
    """max |a(u, v) - b(v)| / |b| over random free test dofs."""
    M, b = sol._cache["M"], sol._cache["b"]
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return 0.0
    free = np.setdiff1d(np.arange(len(b)), fem.lateral_dofs(sol.mesh, sol.spec.components))
    rng = np.random.default_rng(seed)
    dofs = rng.choice(free, size=min(n_tests, len(free)), replace=False)
    r = M[dofs] @ sol.u.values - b[dofs]
    return float(np.abs(r).max() / nb)


def solution_parity(sol: PlateSolution) -> float:
    from .cells import parity_violation

    expected = {"membrane": ("even", "odd"), "bending": ("odd", "even")}[sol.spec.mode]
    return parity_violation(sol.u, expected)


# --- field dump ---------------------------------------------------------------

def write_field_dump(path, fld: fem.FemField, spec: PlateProblemSpec, component: int = 0) -> None:
    """Plain-text grid: header 'nx ny L eps' then lexicographic nodal values."""
    mesh = fld.mesh
    vals = fld.values.reshape(-1, fld.components)[:, component]
    with open(path, "w") as fh:
        fh.write(f"{mesh.nx} {mesh.ny} {spec.L!r} {spec.eps!r}\n")
        for v in vals:
            fh.write(f"{v:.17g}\n")


def read_field_dump(path):
    with open(path) as fh:
        nx, ny, L, eps = fh.readline().split()
        vals = np.array([float(line) for line in fh])
    return int(nx), int(ny), float(L), float(eps), vals
