"""Corrector problems on the cell (0,1) x (-1/2, 1/2) and homogenized quantities.

Every corrector is periodic in y1, has free (Neumann) top and bottom faces and
zero discrete mean.  Stresses are kept at the 2x2 Gauss points of the cell
mesh; through-thickness profiles live on the Gauss levels in y2.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fem
from .coefficients import ElasticityCoefficient, ScalarCoefficient
from .errors import InvalidArgumentError, TensorValidityError
from .mesh import QUAD_2x2, RectMesh, build_rect_mesh, periodic_map

IDENTITY_TOL = 1e-8
E11 = np.array([1.0, 0.0, 0.0])  # e1 (x) e1 in Voigt form


def cell_mesh(n: int = 64, n2: int | None = None) -> RectMesh:
    return build_rect_mesh((0.0, 1.0), (-0.5, 0.5), n, n if n2 is None else n2)


def xi_monomial(q: int) -> Callable:
    """Odd profile x2^(2q+1) / (2q+1)."""
    if q not in (0, 1, 2):
        raise InvalidArgumentError(f"q must be 0, 1 or 2, got {q}")
    k = 2 * q + 1
    return lambda x2: np.asarray(x2, dtype=float) ** k / k


@dataclass
class CorrectorField:
    kind: str
    field: fem.FemField
    xi: Callable | None = None
    iterations: int = 0

    @property
    def mesh(self) -> RectMesh:
        return self.field.mesh

    def evaluate(self, y1, y2):
        """Values and (y1, y2)-gradients with periodic wrap in y1."""
        return fem.eval_field(self.field, y1, y2, periodic=True)

    def mean(self) -> np.ndarray:
        w = self.mesh.lumped_weights()
        return w @ self.field.values.reshape(-1, self.field.components) / w.sum()


# --- solves -------------------------------------------------------------------

def _solve_cell(mesh, K, rhs, components, kind, xi=None, **solver) -> CorrectorField:
    pmap = periodic_map(mesh)
    n = pmap.n_reduced
    basis = np.zeros((components, components * n))
    for k in range(components):
        basis[k, k::components] = 1.0
    x, info = fem.pcg(K, rhs, nullspace=basis, **solver)
    full = pmap.expand(x, components).reshape(-1, components)
    w = mesh.lumped_weights()
    full -= (w @ full) / w.sum()
    return CorrectorField(kind, fem.FemField(mesh, components, full.ravel()), xi, info.iterations)


def _check_kind(coeff, cls):
    if not isinstance(coeff, cls):
        raise InvalidArgumentError(f"expected {cls.__name__}, got {type(coeff).__name__}")


def solve_diffusion_corrector(coeff: ScalarCoefficient, mesh: RectMesh, **solver) -> CorrectorField:
    """w with  int A (grad w + e1) . grad v = 0  for all periodic v."""
    _check_kind(coeff, ScalarCoefficient)
    pmap = periodic_map(mesh)
    C = fem.coefficient_at_quadrature(mesh, coeff)
    K = fem.assemble_scalar(mesh, C, periodic=pmap)
    rhs = fem.flux_load(mesh, -C[..., :, 0], periodic=pmap)
    return _solve_cell(mesh, K, rhs, 1, "diffusion_w", **solver)


def _elastic_corrector(coeff, mesh, load_profile, kind, xi=None, **solver):
    _check_kind(coeff, ElasticityCoefficient)
    pmap = periodic_map(mesh)
    C = fem.coefficient_at_quadrature(mesh, coeff)
    K = fem.assemble_elasticity(mesh, C, periodic=pmap)
    x2 = mesh.quadrature_points()[..., 1]
    rhs = fem.stress_load(mesh, load_profile(x2)[..., None] * C[..., :, 0], periodic=pmap)
    return _solve_cell(mesh, K, rhs, 2, kind, xi, **solver)


def solve_membrane_corrector(coeff: ElasticityCoefficient, mesh: RectMesh, **solver):
    """w with  int A (e(w) + e1 (x) e1) : e(v) = 0."""
    return _elastic_corrector(coeff, mesh, lambda x2: -np.ones_like(x2), "membrane_w", **solver)


def solve_bending_corrector(coeff: ElasticityCoefficient, mesh: RectMesh, **solver):
    """W with  int A (e(W) - x2 e1 (x) e1) : e(v) = 0."""
    return _elastic_corrector(coeff, mesh, lambda x2: x2, "bending_W", lambda t: np.asarray(t),
                              **solver)


def solve_enriched_corrector(coeff: ElasticityCoefficient, mesh: RectMesh, q: int | None = 0,
                             xi: Callable | None = None, **solver):
    """W^xi with  int A (e(W^xi) - xi(x2) e1 (x) e1) : e(v) = 0.

    ``xi`` defaults to the odd monomial of order ``q``; any profile may be passed.
    """
    if xi is None:
        xi = xi_monomial(q)
    return _elastic_corrector(coeff, mesh, lambda x2: xi(x2), "enriched_W_xi", xi, **solver)


# --- quadrature-level quantities ----------------------------------------------------

def _weights(mesh):
    return mesh.quadrature_weights(QUAD_2x2)


def diffusion_flux(coeff, corr: CorrectorField):
    """(grad w + e1) and A (grad w + e1) at the cell quadrature points."""
    mesh = corr.mesh
    C = fem.coefficient_at_quadrature(mesh, coeff)
    _, grad = fem.field_at_quadrature(corr.field)
    g = grad[..., 0, :].copy()
    g[..., 0] += 1.0
    return g, np.einsum("cqij,cqj->cqi", C, g)


def corrector_stress(coeff, corr: CorrectorField):
    """Voigt strain e(W) + shift and stress A (e(W) + shift) at quadrature points.

    The shift is e1 (x) e1 for the membrane corrector and -xi(x2) e1 (x) e1 for
    bending or enriched correctors.
    """
    mesh = corr.mesh
    C = fem.coefficient_at_quadrature(mesh, coeff)
    _, grad = fem.field_at_quadrature(corr.field)
    strain = fem.strain_from_gradient(grad)
    x2 = mesh.quadrature_points()[..., 1]
    if corr.kind == "membrane_w":
        strain[..., 0] += 1.0
    else:
        strain[..., 0] -= corr.xi(x2)
    return strain, np.einsum("cqij,cqj->cqi", C, strain)


def _integrate(mesh, values):
    return float(np.einsum("q,cq->", _weights(mesh), values))


def _voigt_energy(a, b):
    # Voigt strains carry 2 e12, Voigt stresses carry s12, so the plain dot product
    # is the tensor contraction
    return np.einsum("cqi,cqi->cq", a, b)


@dataclass
class ThicknessProfile:
    """Values on the Gauss levels x2_l with integration weights w_l (sum w_l = 1)."""

    levels: np.ndarray
    weights: np.ndarray
    values: np.ndarray

    def integrate(self, fn=None) -> float | np.ndarray:
        w = self.weights if fn is None else self.weights * fn(self.levels)
        return np.tensordot(w, self.values, axes=(0, 0))

    def l2_norm(self) -> float:
        return float(np.sqrt(self.weights @ self.values**2))


def level_average(mesh: RectMesh, values: np.ndarray) -> ThicknessProfile:
    """Average over y1 at each Gauss level in y2 of quadrature-point data (nc, nq, ...)."""
    n = 2
    g = QUAD_2x2
    wx = g.weights.reshape(n, n)[0] / g.weights.reshape(n, n)[0].sum()
    eta = np.unique(g.points[:, 1])
    tail = values.shape[2:]
    v = values.reshape((mesh.ny, mesh.nx, n, n) + tail)  # (row, col, eta, xi)
    prof = np.einsum("jcbx...,x->jb...", v, wx) * mesh.hx / (mesh.x_range[1] - mesh.x_range[0])
    y0 = mesh.y_coords[:-1]
    levels = (y0[:, None] + 0.5 * (eta[None, :] + 1.0) * mesh.hy).ravel()
    weights = np.tile(0.5 * np.array([1.0, 1.0]) * mesh.hy, mesh.ny)
    return ThicknessProfile(levels, weights, prof.reshape((-1,) + tail))


def stress_profile_S(coeff, W: CorrectorField) -> ThicknessProfile:
    """S*(x2): y1-average of [A (e(W) - x2 e1 (x) e1)]_11 on the Gauss levels."""
    _, sigma = corrector_stress(coeff, W)
    return level_average(W.mesh, sigma[..., 0])


def stress_profile_T(coeff, W_xi: CorrectorField) -> ThicknessProfile:
    """T^xi(x2): y1-average of the Voigt stress (s11, s22, s12) of A (e(W^xi) - xi e1 (x) e1)."""
    _, sigma = corrector_stress(coeff, W_xi)
    return level_average(W_xi.mesh, sigma)


def check_Sstar_moment_identity(coeff, S_star: ThicknessProfile, W_xi: CorrectorField) -> dict:
    """int xi S*  versus  int x2 [T^xi]_11 ; both use the cell Gauss levels."""
    T = stress_profile_T(coeff, W_xi)
    lhs = float(S_star.integrate(W_xi.xi))
    rhs = float(T.integrate(lambda t: t)[0])
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs),
            "passed": abs(lhs - rhs) <= IDENTITY_TOL * max(1.0, abs(rhs))}


# --- homogenized tensors ------------------------------------------------------

@dataclass
class HomogenizedTensors:
    mode: str
    coefficient: str = ""
    mesh: tuple = ()
    A_star: float = np.nan
    A_star_flux: float = np.nan
    K11: float = np.nan
    K12: float = np.nan
    K22: float = np.nan
    k11: float = np.nan
    k12: float = np.nan
    k21: float = np.nan
    k22: float = np.nan
    S_star: ThicknessProfile | None = None
    checks: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        if self.mode == "diffusion":
            return {"A_star": self.A_star, "A_star_flux": self.A_star_flux}
        return {"K11": self.K11, "K12": self.K12, "K22": self.K22,
                "k11": self.k11, "k12": self.k12, "k21": self.k21, "k22": self.k22}


def homogenized_A(coeff, w: CorrectorField) -> HomogenizedTensors:
    grad, flux = diffusion_flux(coeff, w)
    mesh = w.mesh
    energy = _integrate(mesh, np.einsum("cqi,cqi->cq", grad, flux))
    flux_form = _integrate(mesh, flux[..., 0])
    t = HomogenizedTensors("diffusion", coeff.name, (mesh.nx, mesh.ny), A_star=energy,
                           A_star_flux=flux_form)
    t.checks = {
        "energy_vs_flux": abs(energy - flux_form),
        "lower_bound": coeff.c_minus - energy,
        "upper_bound": energy - coeff.c_plus,
    }
    if abs(energy - flux_form) > 1e-9 * abs(energy):
        raise TensorValidityError(f"A* energy {energy!r} and flux {flux_form!r} forms disagree")
    if energy < coeff.c_minus * (1 - 1e-12) or energy > coeff.c_plus * (1 + 1e-12):
        raise TensorValidityError(
            f"A* = {energy} outside [{coeff.c_minus}, {coeff.c_plus}]")
    return t


def coercivity_bounds(c_minus: float, c_plus: float) -> dict:
    upper = c_plus * (c_plus / c_minus + 1.0)
    return {"K11": (c_minus, upper), "K22": (c_minus / 12.0, upper),
            "S_star_l2": c_plus**2 / c_minus + c_plus}


def homogenized_K(coeff: ElasticityCoefficient, w: CorrectorField, W: CorrectorField,
                  validate: bool = True) -> HomogenizedTensors:
    """Energy-form K11, K12, K22 with the flux-form duplicates and the S* profile."""
    mesh = w.mesh
    eps_m, sig_m = corrector_stress(coeff, w)
    eps_b, sig_b = corrector_stress(coeff, W)
    x2 = mesh.quadrature_points()[..., 1]
    t = HomogenizedTensors(
        "elasticity", coeff.name, (mesh.nx, mesh.ny),
        K11=_integrate(mesh, _voigt_energy(sig_m, eps_m)),
        K12=_integrate(mesh, _voigt_energy(sig_m, eps_b)),
        K22=_integrate(mesh, _voigt_energy(sig_b, eps_b)),
        k11=_integrate(mesh, sig_m[..., 0]),
        k12=_integrate(mesh, sig_b[..., 0]),
        k21=_integrate(mesh, x2 * sig_m[..., 0]),
        k22=_integrate(mesh, x2 * sig_b[..., 0]),
        S_star=level_average(mesh, sig_b[..., 0]),
    )
    bounds = coercivity_bounds(coeff.c_minus, coeff.c_plus)
    scale = max(1.0, abs(t.K11))
    t.checks = {
        "K11_vs_k11": abs(t.K11 - t.k11) / scale,
        "K12_vs_minus_k21": abs(t.K12 + t.k21) / scale,
        "K12_vs_k12": abs(t.K12 - t.k12) / scale,
        "K22_vs_minus_k22": abs(t.K22 + t.k22) / max(1.0, abs(t.K22)),
        "K12_abs": abs(t.K12),
        "S_star_l2": t.S_star.l2_norm(),
    }
    if validate:
        _validate_K(t, bounds, coeff.parity_class)
    return t


def _validate_K(t: HomogenizedTensors, bounds: dict, parity: bool) -> None:
    problems = []
    for key in ("K11_vs_k11", "K12_vs_minus_k21", "K12_vs_k12", "K22_vs_minus_k22"):
        if t.checks[key] > IDENTITY_TOL:
            problems.append(f"{key} = {t.checks[key]:.3e}")
    for name in ("K11", "K22"):
        lo, hi = bounds[name]
        v = getattr(t, name)
        if not lo * (1 - 1e-12) <= v <= hi * (1 + 1e-12):
            problems.append(f"{name} = {v:.6g} outside [{lo:.6g}, {hi:.6g}]")
    if parity and abs(t.K12) > IDENTITY_TOL:
        problems.append(f"K12 = {t.K12:.3e} should vanish under parity")
    if t.S_star.l2_norm() > bounds["S_star_l2"]:
        problems.append(f"|S*| = {t.S_star.l2_norm():.4g} exceeds {bounds['S_star_l2']:.4g}")
    if problems:
        raise TensorValidityError("homogenized tensor checks failed: " + "; ".join(problems))


# --- identities ---------------------------------------------------------------

def _mirror_nodes(mesh: RectMesh) -> np.ndarray:
    i = np.tile(np.arange(mesh.nx + 1), mesh.ny + 1)
    j = np.repeat(np.arange(mesh.ny + 1), mesh.nx + 1)
    return mesh.node_index(i, mesh.ny - j)


def parity_violation(fld: fem.FemField, parities) -> float:
    """Max |u_k(y1, y2) -/+ u_k(y1, -y2)| for parities like ('even', 'odd')."""
    mesh = fld.mesh
    if abs(mesh.y_range[0] + mesh.y_range[1]) > 1e-14:
        raise InvalidArgumentError("parity needs a mesh symmetric about x2 = 0")
    u = fld.values.reshape(-1, fld.components)
    mirror = u[_mirror_nodes(mesh)]
    out = 0.0
    for k, par in enumerate(parities):
        d = u[:, k] - mirror[:, k] if par == "even" else u[:, k] + mirror[:, k]
        out = max(out, float(np.abs(d).max()))
    return out


def corrector_parity(corr: CorrectorField) -> float:
    expected = {"membrane_w": ("even", "odd"), "bending_W": ("odd", "even"),
                "enriched_W_xi": ("odd", "even")}[corr.kind]
    return parity_violation(corr.field, expected)


def _layer_midpoint_weight(mesh: RectMesh) -> np.ndarray:
    """Derivative of the Q1 interpolant of x2^2/2: the layer midpoint, per quadrature point."""
    mid = mesh.cell_origins()[:, 1] + 0.5 * mesh.hy
    return np.repeat(mid[:, None], len(QUAD_2x2.weights), axis=1)


def check_flux_identities(coeff, correctors: dict) -> dict:
    """Residuals of the zero-flux, moment and Z identities.

    ``correctors`` holds any of ``w`` (diffusion or membrane) and ``W`` (bending).
    Returns ``{name: residual}`` plus ``passed``.
    """
    out = {}
    if isinstance(coeff, ScalarCoefficient):
        w = correctors["w"]
        mesh = w.mesh
        _, flux = diffusion_flux(coeff, w)
        t = homogenized_A(coeff, w)
        out["zero_flux_e2"] = abs(_integrate(mesh, flux[..., 1]))
        out["Z_mean_1"] = abs(t.A_star - _integrate(mesh, flux[..., 0]))
        out["Z_mean_2"] = out["zero_flux_e2"]
    else:
        if "w" in correctors:
            w = correctors["w"]
            mesh = w.mesh
            _, sig = corrector_stress(coeff, w)
            x2 = mesh.quadrature_points()[..., 1]
            K11 = _integrate(mesh, _voigt_energy(sig, corrector_stress(coeff, w)[0]))
            # [A(e(w) + E)] : (e2 (x) e_i) picks s12 (i = 1) and s22 (i = 2)
            out["membrane_zero_flux_1"] = abs(_integrate(mesh, sig[..., 2]))
            out["membrane_zero_flux_2"] = abs(_integrate(mesh, sig[..., 1]))
            out["membrane_Z_mean_11"] = abs(K11 - _integrate(mesh, sig[..., 0]))
            if coeff.parity_class:
                out["membrane_Z_moment_11"] = abs(_integrate(mesh, x2 * sig[..., 0]))
                out["membrane_Z_moment_22"] = abs(_integrate(mesh, x2 * sig[..., 1]))
                out["membrane_Z_moment_12"] = abs(_integrate(mesh, x2 * sig[..., 2]))
        if "W" in correctors:
            W = correctors["W"]
            mesh = W.mesh
            _, sig = corrector_stress(coeff, W)
            mid = _layer_midpoint_weight(mesh)
            out["bending_moment_r0_1"] = abs(_integrate(mesh, sig[..., 2]))
            out["bending_moment_r0_2"] = abs(_integrate(mesh, sig[..., 1]))
            out["bending_moment_r1_1"] = abs(_integrate(mesh, mid * sig[..., 2]))
            out["bending_moment_r1_2"] = abs(_integrate(mesh, mid * sig[..., 1]))
            S = level_average(mesh, sig[..., 0])
            x2 = mesh.quadrature_points()[..., 1]
            out["bending_Z_mean_11"] = abs(float(S.integrate()) - _integrate(mesh, sig[..., 0]))
            out["bending_Z_moment_11"] = abs(float(S.integrate(lambda t: t))
                                             - _integrate(mesh, x2 * sig[..., 0]))
    out["passed"] = all(v <= IDENTITY_TOL for v in out.values())
    return out


@dataclass
class CellResults:
    """All correctors and tensors for one coefficient on one cell mesh."""

    coeff: object
    mesh: RectMesh
    tensors: HomogenizedTensors
    correctors: dict


def compute_cell(coeff, mesh: RectMesh | None = None, n: int = 64, n2: int | None = None,
                 validate: bool = True, **solver) -> CellResults:
    mesh = cell_mesh(n, n2) if mesh is None else mesh
    if isinstance(coeff, ScalarCoefficient):
        w = solve_diffusion_corrector(coeff, mesh, **solver)
        return CellResults(coeff, mesh, homogenized_A(coeff, w), {"w": w})
    w = solve_membrane_corrector(coeff, mesh, **solver)
    W = solve_bending_corrector(coeff, mesh, **solver)
    return CellResults(coeff, mesh, homogenized_K(coeff, w, W, validate=validate),
                       {"w": w, "W": W})
