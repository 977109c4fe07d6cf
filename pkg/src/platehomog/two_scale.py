"""Two-scale expansions, H1_eps errors, data norms and the stress-limit diagnostic."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

from . import fem
from .cells import CorrectorField, HomogenizedTensors, ThicknessProfile
from .errors import InvalidArgumentError, UnsupportedDataError
from .homogenized import HomogenizedSolution
from .mesh import gauss_1d
from .plate import PlateSolution, norm_parts
from .problem import PlateProblemSpec


@dataclass
class TwoScaleExpansion:
    """u^{eps,1} built from a closed-form homogenized solution and one corrector.

    ``lift`` is g (diffusion), g1 (membrane) or gd (bending).  The macroscopic
    factor G is (u* + g)' in diffusion and membrane and (U + gd)'' in bending.
    """

    mode: str
    u_star: HomogenizedSolution
    corrector: CorrectorField | None
    lift: Polynomial
    eps: float

    def __post_init__(self):
        if self.mode not in ("diffusion", "membrane", "bending"):
            raise InvalidArgumentError(f"unknown mode {self.mode!r}")
        if self.u_star.poly is None:
            raise UnsupportedDataError("the expansion needs a closed-form homogenized solution")
        if not isinstance(self.lift, Polynomial):
            raise UnsupportedDataError("the expansion needs a polynomial lift")

    @property
    def components(self) -> int:
        return 1 if self.mode == "diffusion" else 2

    def _macro(self, x1):
        """u*-derivatives and the factor G with G'."""
        d = self.u_star.derivative
        if self.mode == "bending":
            G = d(x1, 2) + self.lift.deriv(2)(x1)
            dG = d(x1, 3) + self.lift.deriv(3)(x1)
        else:
            G = d(x1, 1) + self.lift.deriv(1)(x1)
            dG = d(x1, 2) + self.lift.deriv(2)(x1)
        return G, dG

    def _cell(self, x1, x2):
        shape = np.shape(x1) + (self.components,)
        if self.corrector is None:
            return np.zeros(shape), np.zeros(shape + (2,))
        return self.corrector.evaluate(x1 / self.eps, x2)

    def value(self, x1, x2) -> np.ndarray:
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        eps = self.eps
        G, _ = self._macro(x1)
        w, _ = self._cell(x1, x2)
        u = self.u_star.derivative(x1, 0)
        if self.mode == "diffusion":
            return (u + eps * w[..., 0] * G)[..., None]
        if self.mode == "membrane":
            return np.stack([u + eps * w[..., 0] * G, eps**2 * w[..., 1] * G], axis=-1)
        du = self.u_star.derivative(x1, 1)
        return np.stack([-x2 * du + eps * w[..., 0] * G, u + eps**2 * w[..., 1] * G], axis=-1)

    def scaled_gradient(self, x1, x2) -> np.ndarray:
        """grad^eps (scalar, shape (..., 2)) or Voigt e^eps (shape (..., 3))."""
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        eps = self.eps
        G, dG = self._macro(x1)
        w, gw = self._cell(x1, x2)
        if self.mode == "diffusion":
            d1 = self.u_star.derivative(x1, 1) + gw[..., 0, 0] * G + eps * w[..., 0] * dG
            return np.stack([d1, gw[..., 0, 1] * G], axis=-1)
        if self.mode == "membrane":
            e11 = self.u_star.derivative(x1, 1)
        else:
            e11 = -x2 * self.u_star.derivative(x1, 2)
        e11 = e11 + gw[..., 0, 0] * G + eps * w[..., 0] * dG
        e22 = gw[..., 1, 1] * G
        g12 = gw[..., 0, 1] * G + gw[..., 1, 0] * G + eps * w[..., 1] * dG
        return np.stack([e11, e22, g12], axis=-1)


def build_expansion(mode: str, u_star: HomogenizedSolution, corrector: CorrectorField | None,
                    lift, eps: float) -> TwoScaleExpansion:
    if not isinstance(lift, Polynomial):
        lift = Polynomial(np.atleast_1d(np.asarray(lift, dtype=float)))
    return TwoScaleExpansion(mode, u_star, corrector, lift, float(eps))


def spec_lift(spec: PlateProblemSpec) -> Polynomial:
    return {"diffusion": spec.g, "membrane": spec.g1, "bending": spec.gd}[spec.mode]


def error_h1eps(sol: PlateSolution, exp: TwoScaleExpansion) -> dict:
    """Norms of u^eps - u^{eps,1} with the oscillatory mesh quadrature."""
    spec = sol.spec
    if abs(spec.eps - exp.eps) > 1e-14 * spec.eps or spec.mode != exp.mode:
        raise InvalidArgumentError("solution and expansion disagree on eps or mode")
    X = sol.mesh.quadrature_points()
    vals, _ = fem.field_at_quadrature(sol.u)
    dv = vals - exp.value(X[..., 0], X[..., 1])
    dg = sol.scaled_gradient() - exp.scaled_gradient(X[..., 0], X[..., 1])
    return norm_parts(dv, dg, sol.mesh, spec.L, spec.eps, spec.is_elastic)


def fd_check(exp: TwoScaleExpansion, L: float, n_points: int = 100, seed: int = 0) -> float:
    """Largest gap between the analytic scaled gradient and central differences
    of the value evaluator, relative to the largest analytic entry."""
    rng = np.random.default_rng(seed)
    eps = exp.eps
    h = 1e-6 * min(eps, 1.0)
    x1 = rng.uniform(0.02 * L, 0.98 * L, n_points)
    x2 = rng.uniform(-0.49, 0.49, n_points)
    d1 = (exp.value(x1 + h, x2) - exp.value(x1 - h, x2)) / (2 * h)
    d2 = (exp.value(x1, x2 + h) - exp.value(x1, x2 - h)) / (2 * h)
    if exp.mode == "diffusion":
        fd = np.stack([d1[:, 0], d2[:, 0] / eps], axis=-1)
    else:
        fd = np.stack([d1[:, 0], d2[:, 1] / eps**2, (d2[:, 0] + d1[:, 1]) / eps], axis=-1)
    an = exp.scaled_gradient(x1, x2)
    return float(np.abs(fd - an).max() / max(np.abs(an).max(), 1e-300))


def fit_rate(eps_values, errors) -> dict:
    """Least-squares slope of log(error) against log(eps), with per-step ratios."""
    e = np.asarray(eps_values, dtype=float)
    r = np.asarray(errors, dtype=float)
    if len(e) < 2:
        return {"slope": None, "ratios": []}
    slope = float(np.polyfit(np.log(e), np.log(r), 1)[0])
    steps = [float(np.log(r[i] / r[i + 1]) / np.log(e[i] / e[i + 1])) for i in range(len(e) - 1)]
    return {"slope": slope, "ratios": [float(r[i] / r[i + 1]) for i in range(len(e) - 1)],
            "step_slopes": steps}


# --- data norms ---------------------------------------------------------------

def _omega_quadrature(L: float, n: int = 64):
    g = gauss_1d(6)
    h = L / n
    x1 = ((np.arange(n)[:, None] + 0.5 * (g.points + 1.0)) * h).ravel()
    w1 = np.tile(0.5 * h * g.weights, n)
    g2 = gauss_1d(12)
    return x1, w1, 0.5 * g2.points, 0.5 * g2.weights


def _l2_omega_2d(fn, L):
    x1, w1, x2, w2 = _omega_quadrature(L)
    v = fn(x1[:, None], x2[None, :])
    return float(np.sqrt(np.einsum("i,j,ij->", w1, w2, v**2)))


def _l2_omega_1d(fn, L):
    x1, w1, _, _ = _omega_quadrature(L)
    v = np.broadcast_to(np.asarray(fn(x1), dtype=float), x1.shape)
    return float(np.sqrt(w1 @ v**2))


def _need_poly(p, what) -> Polynomial:
    if not isinstance(p, Polynomial):
        raise UnsupportedDataError(f"{what} needs a polynomial")
    return p


def data_norms(spec: PlateProblemSpec) -> dict:
    """The membrane and bending data norms (elasticity only; zero for diffusion)."""
    if not spec.is_elastic:
        return {"N_memb_eps": 0.0, "N_bend": 0.0, "N_bend_bar": 0.0}
    L, eps = spec.L, spec.eps
    f1, f2 = spec.f
    hs = (spec.h_plus, spec.h_minus)
    n_f1 = _l2_omega_2d(f1, L)
    n_f2 = _l2_omega_2d(f2, L)
    try:
        n_df1 = _l2_omega_2d(f1.d1(), L)
    except UnsupportedDataError:
        raise UnsupportedDataError("data norms need the x1-derivative of f1") from None
    n_h1 = sum(_l2_omega_1d(h[0], L) for h in hs)
    n_h2 = sum(_l2_omega_1d(h[1], L) for h in hs)
    n_dh1 = sum(_l2_omega_1d(_need_poly(h[0], "h derivative").deriv(), L) for h in hs)
    n_g4 = _l2_omega_1d(_need_poly(spec.gd, "lift").deriv(4), L)
    n_memb = n_f1 + eps * n_f2 + eps * n_df1 + n_h1 + eps * n_h2 + eps * n_dh1
    n_bend = n_f2 + n_df1 + n_g4 + n_h2 + n_dh1
    return {"N_memb_eps": n_memb, "N_bend": n_bend, "N_bend_bar": n_f1 + n_h1 + L * n_bend}


# --- stress limit ----------------------------------------------------------------

def stress_limit_diagnostic(sol: PlateSolution, tensors: HomogenizedTensors,
                            u_star: HomogenizedSolution, test_phi: Callable,
                            test_xi: Callable) -> dict:
    """M_eps = int Sigma11 phi xi  against  M* = (int xi S*) (int phi (U + gd)'')."""
    from .plate import extract_Sigma

    if sol.spec.mode != "bending":
        raise InvalidArgumentError("the stress-limit diagnostic applies to bending")
    S: ThicknessProfile = tensors.S_star
    mesh = sol.mesh
    X = mesh.quadrature_points()
    Sigma11 = extract_Sigma(sol)[..., 0]
    w = mesh.quadrature_weights()
    M_eps = float(np.einsum("q,cq->", w, Sigma11 * test_phi(X[..., 0]) * test_xi(X[..., 1])))
    x1, w1, _, _ = _omega_quadrature(sol.spec.L)
    curv = u_star.derivative(x1, 2) + sol.spec.gd.deriv(2)(x1)
    M_star = float(S.integrate(test_xi)) * float(w1 @ (test_phi(x1) * curv))
    return {"M_eps": M_eps, "M_star": M_star, "gap": abs(M_eps - M_star)}
