"""Periodic coefficient fields on the reference cell (0,1) x (-1/2, 1/2).

Scalar (diffusion) coefficients evaluate to 2x2 symmetric matrices.  Elasticity
coefficients evaluate to the 3x3 Voigt matrix acting on ``(e11, e22, 2 e12)``::

    [[A1111, A1122, A1112],
     [A1122, A2222, A2212],
     [A1112, A2212, A1212]]

Storing only these six entries enforces the minor and major symmetries of the
fourth-order tensor.  In that layout the plate parity class asks entries
(1,1), (1,2), (2,2), (3,3) to be even in y2 and (1,3), (2,3) to be odd.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CoefficientValidityError, InvalidArgumentError

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]

# Voigt metric: |xi|^2 = v^T diag(1, 1, 1/2) v for v = (xi11, xi22, 2 xi12)
_VOIGT_SCALE = np.array([1.0, 1.0, np.sqrt(2.0)])

EVEN_ENTRIES = ((0, 0), (0, 1), (1, 1), (2, 2))
ODD_ENTRIES = ((0, 2), (1, 2))

PARITY_TOL = 1e-10


@dataclass(frozen=True)
class ScalarCoefficient:
    evaluator: Evaluator
    c_minus: float
    c_plus: float
    kind: str = "custom"
    name: str = ""

    mode = "diffusion"

    def __call__(self, y1, y2) -> np.ndarray:
        return self.evaluator(np.asarray(y1, dtype=float), np.asarray(y2, dtype=float))


@dataclass(frozen=True)
class ElasticityCoefficient:
    evaluator: Evaluator
    c_minus: float
    c_plus: float
    parity_class: bool
    kind: str = "custom"
    name: str = ""

    mode = "elasticity"

    def __call__(self, y1, y2) -> np.ndarray:
        return self.evaluator(np.asarray(y1, dtype=float), np.asarray(y2, dtype=float))

    def tensor(self, y1: float, y2: float) -> np.ndarray:
        """Full fourth-order tensor A_ijkl at one point (for cross-checks)."""
        C = self(y1, y2)
        voigt = {(0, 0): 0, (1, 1): 1, (0, 1): 2, (1, 0): 2}
        A = np.empty((2, 2, 2, 2))
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    for m in range(2):
                        A[i, j, k, m] = C[voigt[i, j], voigt[k, m]]
        return A


def _sample_grid(n: int = 32):
    y1 = (np.arange(n) + 0.5) / n
    y2 = (np.arange(n) + 0.5) / n - 0.5
    return np.meshgrid(y1, y2, indexing="ij")


def _bounds_grid(n: int = 64):
    """Nodes and midpoints of an n x n grid, so extremes at simple fractions are hit."""
    y1 = np.arange(2 * n + 1) / (2 * n)
    return np.meshgrid(y1, y1 - 0.5, indexing="ij")


def _widen(lo: float, hi: float, exact: bool) -> tuple[float, float]:
    # grid estimates of a varying field may miss the true extremes slightly
    return (lo, hi) if exact else (lo * (1 - 1e-3), hi * (1 + 1e-3))


def _eigenvalues(coeff, y1, y2) -> np.ndarray:
    M = coeff(y1, y2)
    if isinstance(coeff, ElasticityCoefficient):
        M = M * _VOIGT_SCALE[:, None] * _VOIGT_SCALE[None, :]
    return np.linalg.eigvalsh(M)


def estimate_bounds(coeff, n: int = 32) -> tuple[float, float]:
    """Min / max eigenvalue (in the tensor norm) over an n x n sample grid."""
    Y1, Y2 = _bounds_grid(n)
    ev = _eigenvalues(coeff, Y1, Y2)
    return float(ev.min()), float(ev.max())


def validate(coeff, n_samples: int = 1000, seed: int = 0) -> None:
    """Sampled checks of symmetry, periodicity, ellipticity and declared bounds."""
    rng = np.random.default_rng(seed)
    y1 = rng.random(n_samples)
    y2 = rng.random(n_samples) - 0.5
    M = coeff(y1, y2)
    if not np.all(np.isfinite(M)):
        raise CoefficientValidityError(f"{coeff.name or coeff.kind}: non-finite values")
    scale = max(1.0, float(np.abs(M).max()))
    if np.abs(M - np.swapaxes(M, -1, -2)).max() > 1e-12 * scale:
        raise CoefficientValidityError(f"{coeff.name or coeff.kind}: not symmetric")
    shifted = coeff(y1 + 1.0, y2)
    if np.abs(shifted - M).max() > 1e-10 * scale:
        raise CoefficientValidityError(f"{coeff.name or coeff.kind}: not 1-periodic in y1")
    ev = _eigenvalues(coeff, y1, y2)
    if ev.min() <= 0:
        raise CoefficientValidityError(
            f"{coeff.name or coeff.kind}: non-positive eigenvalue {ev.min():.3e}")
    tol = 1e-12 * scale
    if ev.min() < coeff.c_minus - tol or ev.max() > coeff.c_plus + tol:
        raise CoefficientValidityError(
            f"{coeff.name or coeff.kind}: sampled eigenvalues [{ev.min():.6g}, {ev.max():.6g}] "
            f"outside declared bounds [{coeff.c_minus}, {coeff.c_plus}]")


def check_parity(coeff: ElasticityCoefficient, n: int = 32) -> dict:
    """Max parity violation of the even and odd entry groups on an n x n grid."""
    Y1, Y2 = _sample_grid(n)
    up = coeff(Y1, Y2)
    down = coeff(Y1, -Y2)
    even = max(float(np.abs(up[..., i, j] - down[..., i, j]).max()) for i, j in EVEN_ENTRIES)
    odd = max(float(np.abs(up[..., i, j] + down[..., i, j]).max()) for i, j in ODD_ENTRIES)
    return {"even_violation": even, "odd_violation": odd,
            "passed": even <= PARITY_TOL and odd <= PARITY_TOL}


# --- builders ---------------------------------------------------------------

def make_scalar(fn: Evaluator, kind="custom", name="", c_minus=None, c_plus=None):
    """Wrap an arbitrary matrix evaluator; bounds default to sampled eigenvalues."""
    probe = ScalarCoefficient(fn, 0.0, np.inf, kind, name)
    lo, hi = _widen(*estimate_bounds(probe, 64), exact=False)
    coeff = ScalarCoefficient(fn, lo if c_minus is None else c_minus,
                              hi if c_plus is None else c_plus, kind, name)
    validate(coeff)
    return coeff


def constant_scalar(matrix, name="constant") -> ScalarCoefficient:
    A = np.asarray(matrix, dtype=float)

    def fn(y1, y2):
        return np.broadcast_to(A, np.shape(y1) + (2, 2)).copy()

    ev = np.linalg.eigvalsh(A)
    coeff = ScalarCoefficient(fn, float(ev[0]), float(ev[-1]), "constant", name)
    validate(coeff)
    return coeff


def make_laminate_inplane(values, breakpoints, name="laminate") -> ScalarCoefficient:
    """Piecewise-constant a(y1) I; ``breakpoints`` partition (0, 1), e.g. [0, 0.5, 1]."""
    values = np.asarray(values, dtype=float)
    bp = np.asarray(breakpoints, dtype=float)
    if (len(bp) != len(values) + 1 or bp[0] != 0.0 or bp[-1] != 1.0
            or np.any(np.diff(bp) <= 0)):
        raise InvalidArgumentError(f"breakpoints {breakpoints} do not partition (0, 1)")
    if np.any(values <= 0):
        raise InvalidArgumentError("laminate values must be positive")

    def fn(y1, y2):
        t = np.mod(y1, 1.0)
        idx = np.clip(np.searchsorted(bp, t, side="right") - 1, 0, len(values) - 1)
        a = values[idx]
        return a[..., None, None] * np.eye(2)

    coeff = ScalarCoefficient(fn, float(values.min()), float(values.max()),
                              "laminate_inplane", name)
    validate(coeff)
    return coeff


def make_stratified(lower, upper, name="stratified") -> ScalarCoefficient:
    """Matrix ``lower`` for y2 < 0 and ``upper`` for y2 >= 0."""
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)

    def fn(y1, y2):
        sel = (np.asarray(y2) >= 0.0)[..., None, None]
        return np.where(sel, hi, lo) * np.ones(np.shape(y1) + (1, 1))

    ev = np.concatenate([np.linalg.eigvalsh(lo), np.linalg.eigvalsh(hi)])
    coeff = ScalarCoefficient(fn, float(ev.min()), float(ev.max()), "stratified", name)
    validate(coeff)
    return coeff


def make_smooth_trig(amplitude=0.5, name="trig_diffusion") -> ScalarCoefficient:
    """a(y1) = 1 + amplitude sin(2 pi y1), times the identity."""
    if not 0 <= amplitude < 1:
        raise InvalidArgumentError("amplitude must lie in [0, 1)")

    def fn(y1, y2):
        a = 1.0 + amplitude * np.sin(2 * np.pi * y1) + 0.0 * y2
        return a[..., None, None] * np.eye(2)

    coeff = ScalarCoefficient(fn, 1.0 - amplitude, 1.0 + amplitude, "smooth_trig", name)
    validate(coeff)
    return coeff


def _as_field(value):
    if callable(value):
        return value
    c = float(value)
    return lambda y1, y2: np.full(np.broadcast(y1, y2).shape, c)


def _is_even_in_y2(fn, n=32) -> bool:
    Y1, Y2 = _sample_grid(n)
    return bool(np.abs(fn(Y1, Y2) - fn(Y1, -Y2)).max() <= PARITY_TOL)


def make_isotropic(lambda_field, mu_field, name="isotropic", parity_class=None,
                   bounds=None) -> ElasticityCoefficient:
    """Isotropic tensor with Lame fields; each field is a constant or f(y1, y2).

    The parity flag is detected from the fields unless given explicitly (an
    explicit ``True`` on a non-symmetric material is useful for negative tests).
    """
    lam = _as_field(lambda_field)
    mu = _as_field(mu_field)
    Y1, Y2 = _bounds_grid(64)
    lam_s, mu_s = lam(Y1, Y2), mu(Y1, Y2)
    if mu_s.min() <= 0:
        raise InvalidArgumentError(f"shear modulus must be positive, min {mu_s.min():.3g}")
    if lam_s.min() < 0:
        raise InvalidArgumentError(f"lambda must be non-negative, min {lam_s.min():.3g}")

    def fn(y1, y2):
        l = lam(y1, y2)
        m = mu(y1, y2)
        C = np.zeros(np.shape(l) + (3, 3))
        C[..., 0, 0] = l + 2 * m
        C[..., 1, 1] = l + 2 * m
        C[..., 0, 1] = l
        C[..., 1, 0] = l
        C[..., 2, 2] = m
        return C

    if parity_class is None:
        parity_class = _is_even_in_y2(lam) and _is_even_in_y2(mu)
    # spectrum on symmetric 2x2 tensors: 2 mu (deviatoric), 2 mu + 2 lambda (spherical)
    constant = np.ptp(lam_s) == 0 and np.ptp(mu_s) == 0
    if bounds is None:
        bounds = _widen(float((2 * mu_s).min()), float((2 * mu_s + 2 * lam_s).max()), constant)
    kind = "constant" if constant else "isotropic"
    coeff = ElasticityCoefficient(fn, bounds[0], bounds[1], bool(parity_class), kind, name)
    validate(coeff)
    return coeff


def make_elasticity(fn: Evaluator, name="custom", parity_class=None) -> ElasticityCoefficient:
    probe = ElasticityCoefficient(fn, 0.0, np.inf, False, "custom", name)
    lo, hi = _widen(*estimate_bounds(probe, 64), exact=False)
    if parity_class is None:
        parity_class = check_parity(probe)["passed"]
    coeff = ElasticityCoefficient(fn, lo, hi, bool(parity_class), "custom", name)
    validate(coeff)
    return coeff


# --- named presets ----------------------------------------------------------

STRATIFIED_LOWER = [[2.0, 0.5], [0.5, 1.0]]
STRATIFIED_UPPER = [[3.0, 1.0], [1.0, 2.0]]


def _preset_table():
    return {
        "identity": lambda: constant_scalar(np.eye(2), name="identity"),
        "laminate_1_4": lambda: make_laminate_inplane([1.0, 4.0], [0.0, 0.5, 1.0],
                                                      name="laminate_1_4"),
        "stratified_1_4": lambda: make_stratified(np.eye(2), 4 * np.eye(2),
                                                  name="stratified_1_4"),
        "stratified_aniso": lambda: make_stratified(STRATIFIED_LOWER, STRATIFIED_UPPER,
                                                    name="stratified_aniso"),
        "trig_diffusion": lambda: make_smooth_trig(0.5, name="trig_diffusion"),
        "isotropic_unit": lambda: make_isotropic(1.0, 1.0, name="isotropic_unit"),
        "trig_isotropic": lambda: make_isotropic(
            lambda y1, y2: 1.0 + 0.5 * np.cos(2 * np.pi * y1) + 0.0 * y2,
            lambda y1, y2: 1.0 + 0.5 * np.cos(2 * np.pi * y1) + 0.0 * y2,
            name="trig_isotropic", bounds=(1.0, 6.0)),
        "layered_isotropic": lambda: make_isotropic(
            lambda y1, y2: np.where(np.abs(y2) < 0.25, 2.0, 1.0),
            lambda y1, y2: np.where(np.abs(y2) < 0.25, 2.0, 1.0),
            name="layered_isotropic"),
    }


PRESETS = tuple(_preset_table())
DIFFUSION_PRESETS = ("identity", "laminate_1_4", "stratified_1_4", "stratified_aniso",
                     "trig_diffusion")
ELASTICITY_PRESETS = ("isotropic_unit", "trig_isotropic", "layered_isotropic")


def preset(key: str):
    table = _preset_table()
    if key not in table:
        raise InvalidArgumentError(f"unknown coefficient preset {key!r}; known: {sorted(table)}")
    return table[key]()
