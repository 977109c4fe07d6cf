"""Plate problem data: geometry, loads and their symmetry classes.

Loads are either polynomials (exact means, moments and derivatives, which the
closed-form homogenized solutions need) or plain callables.  A 2D polynomial
stores ``coef[i, j]`` multiplying ``x1**i * x2**j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as P

from .errors import InvalidArgumentError, ParityViolationError, UnsupportedDataError
from .mesh import gauss_1d

MODES = ("diffusion", "membrane", "bending")
PARITY_TOL = 1e-10
_X2_RULE = gauss_1d(12)


def _x2_power_means(n: int) -> np.ndarray:
    """int_{-1/2}^{1/2} x2^j dx2 for j < n."""
    j = np.arange(n)
    return (0.5 ** (j + 1) - (-0.5) ** (j + 1)) / (j + 1)


@dataclass(frozen=True)
class Field2D:
    """Scalar load f(x1, x2), polynomial (``coef``) or callable (``fn``)."""

    coef: np.ndarray | None = None
    fn: Callable | None = None

    def __post_init__(self):
        if (self.coef is None) == (self.fn is None):
            raise InvalidArgumentError("give exactly one of coef or fn")
        if self.coef is not None:
            object.__setattr__(self, "coef", np.atleast_2d(np.asarray(self.coef, dtype=float)))

    @property
    def is_polynomial(self) -> bool:
        return self.coef is not None

    def __call__(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        if self.coef is not None:
            return P.polyval2d(x1, x2, self.coef)
        return np.broadcast_to(np.asarray(self.fn(x1, x2), dtype=float),
                               np.broadcast(x1, x2).shape)

    def _require_poly(self, what):
        if self.coef is None:
            raise UnsupportedDataError(f"{what} needs a polynomial load")

    def mean(self) -> Polynomial:
        """m(f)(x1) = int f dx2."""
        self._require_poly("exact mean")
        return Polynomial(self.coef @ _x2_power_means(self.coef.shape[1]))

    def moment(self) -> Polynomial:
        """m(x2 f)(x1)."""
        self._require_poly("exact moment")
        return Polynomial(self.coef @ _x2_power_means(self.coef.shape[1] + 1)[1:])

    def mean_values(self, x1, weight=None) -> np.ndarray:
        """m(weight(x2) f)(x1) by Gauss quadrature in x2 (works for any load)."""
        t = 0.5 * _X2_RULE.points
        w = 0.5 * _X2_RULE.weights
        wt = w if weight is None else w * weight(t)
        x1 = np.asarray(x1, dtype=float)
        return self(x1[..., None], t) @ wt

    def d1(self) -> "Field2D":
        self._require_poly("x1-derivative")
        return Field2D(coef=P.polyder(self.coef, axis=0) if self.coef.shape[0] > 1
                       else np.zeros((1, self.coef.shape[1])))

    def is_zero(self) -> bool:
        return self.coef is not None and not np.any(self.coef)


def poly2d(coef) -> Field2D:
    return Field2D(coef=coef)


def constant2d(c: float) -> Field2D:
    return Field2D(coef=[[float(c)]])


ZERO2D = constant2d(0.0)
ZERO1D = Polynomial([0.0])


def as_poly1d(value) -> Polynomial | Callable:
    """Scalars and coefficient lists become polynomials; callables pass through."""
    if isinstance(value, Polynomial):
        return value
    if callable(value):
        return value
    return Polynomial(np.atleast_1d(np.asarray(value, dtype=float)))


def _eval1d(fn, x):
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(np.asarray(fn(x), dtype=float), x.shape)


def _deriv(fn, m: int, what: str) -> Polynomial:
    if not isinstance(fn, Polynomial):
        raise UnsupportedDataError(f"{what} needs a polynomial")
    return fn.deriv(m) if m else fn


@dataclass(frozen=True)
class PlateProblemSpec:
    """Data of a rescaled plate problem on (0, L) x (-1/2, 1/2).

    ``f`` has one component (diffusion) or two (elasticity).  ``g`` is the lift
    g(x1) in diffusion; in elasticity the Kirchhoff-Love lift is built from
    ``g1`` (in-plane) and ``gd`` (deflection):  g = (g1 - x2 gd', gd).
    ``h_plus``/``h_minus`` hold one 1D function per component.
    """

    L: float
    eps: float
    mode: str
    f: tuple = (ZERO2D,)
    g: object = ZERO1D
    g1: object = ZERO1D
    gd: object = ZERO1D
    h_plus: tuple = (ZERO1D,)
    h_minus: tuple = (ZERO1D,)
    p: int = 32
    n2: int = 32
    enforce_symmetry: bool = True
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (0.0 < self.eps <= 1.0):
            raise InvalidArgumentError(f"eps must lie in (0, 1], got {self.eps}")
        if not self.L > 0:
            raise InvalidArgumentError(f"L must be positive, got {self.L}")
        m = self.L / self.eps
        if abs(m - round(m)) > 1e-9 * max(1.0, m):
            raise InvalidArgumentError(f"L/eps must be an integer, got {m}")
        if self.p < 1 or self.n2 < 1:
            raise InvalidArgumentError("mesh resolution must be positive")
        nc = self.components
        f = tuple(self.f) + (ZERO2D,) * (nc - len(self.f))
        hp = tuple(as_poly1d(h) for h in self.h_plus) + (ZERO1D,) * (nc - len(self.h_plus))
        hm = tuple(as_poly1d(h) for h in self.h_minus) + (ZERO1D,) * (nc - len(self.h_minus))
        if len(f) != nc or len(hp) != nc or len(hm) != nc:
            raise InvalidArgumentError(f"{self.mode} loads need {nc} component(s)")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "h_plus", hp)
        object.__setattr__(self, "h_minus", hm)
        for name in ("g", "g1", "gd"):
            object.__setattr__(self, name, as_poly1d(getattr(self, name)))
        if self.enforce_symmetry and self.mode != "diffusion":
            check_load_parity(self)

    @property
    def components(self) -> int:
        return 1 if self.mode == "diffusion" else 2

    @property
    def periods(self) -> int:
        return int(round(self.L / self.eps))

    @property
    def nx(self) -> int:
        return self.p * self.periods

    @property
    def is_elastic(self) -> bool:
        return self.mode != "diffusion"

    def with_eps(self, eps: float, **changes) -> "PlateProblemSpec":
        from dataclasses import replace
        return replace(self, eps=eps, **changes)

    # --- lift ---------------------------------------------------------------

    def lift_gradient(self, x1, x2):
        """Diffusion: d1 g.  Elasticity: e11(g) = g1' - x2 gd''."""
        if self.mode == "diffusion":
            return _eval1d(_deriv(self.g, 1, "lift derivative"), x1) * np.ones_like(x2)
        return (_eval1d(_deriv(self.g1, 1, "lift derivative"), x1)
                - x2 * _eval1d(_deriv(self.gd, 2, "lift derivative"), x1))

    def lift_value(self, x1, x2):
        if self.mode == "diffusion":
            return _eval1d(self.g, x1) * np.ones_like(x2)
        g1 = _eval1d(self.g1, x1) - x2 * _eval1d(_deriv(self.gd, 1, "lift"), x1)
        return np.stack([g1, _eval1d(self.gd, x1) * np.ones_like(x2)], axis=-1)


def _odd_even_violation(fn, parity: str) -> float:
    rng = np.random.default_rng(1)
    x1 = rng.random(200)
    x2 = rng.random(200) - 0.5
    a, b = fn(x1, x2), fn(x1, -x2)
    return float(np.abs(a - b).max() if parity == "even" else np.abs(a + b).max())


def check_load_parity(spec: PlateProblemSpec) -> None:
    """Membrane data: f1 even, f2 odd, gd = 0, h+1 = h-1, h+2 = -h-2; bending the reverse."""
    if spec.mode == "membrane":
        par, sign1, sign2, lift = ("even", "odd"), 1.0, -1.0, spec.gd
    elif spec.mode == "bending":
        par, sign1, sign2, lift = ("odd", "even"), -1.0, 1.0, spec.g1
    else:
        return
    x = np.linspace(0.0, spec.L, 101)
    problems = []
    for k in range(2):
        v = _odd_even_violation(spec.f[k], par[k])
        if v > PARITY_TOL:
            problems.append(f"f{k + 1} not {par[k]} in x2 (violation {v:.2e})")
    for k, sign in enumerate((sign1, sign2)):
        v = float(np.abs(_eval1d(spec.h_plus[k], x) - sign * _eval1d(spec.h_minus[k], x)).max())
        if v > PARITY_TOL:
            problems.append(f"h+{k + 1} {'=' if sign > 0 else '= -'} h-{k + 1} violated ({v:.2e})")
    v = float(np.abs(_eval1d(lift, x)).max())
    if v > PARITY_TOL:
        problems.append(f"lift component incompatible with {spec.mode} class ({v:.2e})")
    if problems:
        raise ParityViolationError(f"{spec.mode} load parity: " + "; ".join(problems))


# --- named load presets -------------------------------------------------------

def load_preset(key: str, mode: str) -> dict:
    """Keyword arguments for PlateProblemSpec from a preset name."""
    table = {
        ("unit", "diffusion"): dict(f=(constant2d(1.0),)),
        ("unit", "membrane"): dict(f=(constant2d(1.0), ZERO2D)),
        ("unit", "bending"): dict(f=(ZERO2D, constant2d(1.0))),
        ("zero", "diffusion"): dict(),
        ("zero", "membrane"): dict(),
        ("zero", "bending"): dict(),
        ("traction", "membrane"): dict(h_plus=(Polynomial([1.0]), ZERO1D),
                                       h_minus=(Polynomial([1.0]), ZERO1D)),
        ("traction", "bending"): dict(h_plus=(ZERO1D, Polynomial([0.5])),
                                      h_minus=(ZERO1D, Polynomial([0.5]))),
        ("linear", "diffusion"): dict(f=(poly2d([[1.0], [1.0]]),)),
    }
    if (key, mode) not in table:
        known = sorted({k for k, m in table if m == mode})
        raise InvalidArgumentError(f"unknown load preset {key!r} for {mode}; known: {known}")
    return table[key, mode]
