"""Run configuration, experiment pipelines and report files.

A run is described by a JSON object with the keys of :class:`RunConfig`.
The coefficient is either a preset key or an inline definition::

    {"type": "constant",   "matrix": [[a11, a12], [a21, a22]]}
    {"type": "laminate",   "values": [1, 4], "breakpoints": [0, 0.5, 1]}
    {"type": "stratified", "lower": [[...]], "upper": [[...]]}
    {"type": "trig",       "amplitude": 0.5}
    {"type": "isotropic",  "lambda": F, "mu": F, "parity_class": true}

where a Lame field ``F`` is a number or an affine combination
``{"const": c, "cos_y1": a, "sin_y1": b, "y2": d}`` of
1, cos(2 pi y1), sin(2 pi y1) and y2.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, cells, coefficients, homogenized, plate, two_scale
from .coefficients import ElasticityCoefficient, ScalarCoefficient
from .errors import InvalidConfigError, PlateHomogError, StageError
from .problem import MODES, PlateProblemSpec, load_preset

CSV_COLUMNS = ("eps", "h1eps", "l2", "l2w", "solve_time_s")
CHECKS = ("flux", "parity", "symmetry", "coercivity", "sstar_moment", "rescaling")
CHECK_TOL = 1e-8
RESCALING_TOL = 1e-9


@dataclass
class RunConfig:
    coefficient: str | dict
    mode: str
    L: float = 1.0
    eps_list: list = field(default_factory=lambda: [0.25, 0.125, 0.0625, 0.03125])
    p: int = 32
    n2: int = 32
    cell_n: int | None = None
    cell_n2: int | None = None
    load: str = "unit"
    out_dir: str = "out"
    checks: list = field(default_factory=lambda: list(CHECKS))
    threads: int = 1
    timing: bool = True
    field_dump: bool = False
    samples: int = 11

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        try:
            self.L = float(self.L)
            self.eps_list = [float(e) for e in self.eps_list]
        except (TypeError, ValueError) as exc:
            raise InvalidConfigError(f"L and eps_list must be numeric: {exc}") from None
        if self.L <= 0:
            raise InvalidConfigError(f"L must be positive, got {self.L}")
        if not self.eps_list:
            raise InvalidConfigError("eps_list must not be empty")
        if any(b >= a for a, b in zip(self.eps_list, self.eps_list[1:])):
            raise InvalidConfigError(f"eps_list must be strictly decreasing: {self.eps_list}")
        for e in self.eps_list:
            m = self.L / e if e > 0 else np.inf
            if not 0 < e <= 1 or abs(m - round(m)) > 1e-9 * m:
                raise InvalidConfigError(f"eps = {e} must lie in (0, 1] with L/eps an integer")
        for name in ("p", "n2", "threads", "samples"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise InvalidConfigError(f"{name} must be a positive integer, got {v!r}")
        for name in ("cell_n", "cell_n2"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, int) or v < 1):
                raise InvalidConfigError(f"{name} must be a positive integer, got {v!r}")
        unknown = set(self.checks) - set(CHECKS)
        if unknown:
            raise InvalidConfigError(f"unknown checks {sorted(unknown)}; known: {list(CHECKS)}")
        try:
            load_preset(self.load, self.mode)
        except PlateHomogError as exc:
            raise InvalidConfigError(str(exc)) from None
        coeff = self.build_coefficient()
        want = ScalarCoefficient if self.mode == "diffusion" else ElasticityCoefficient
        if not isinstance(coeff, want):
            raise InvalidConfigError(f"coefficient {self.coefficient_name} does not fit mode "
                                     f"{self.mode!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise InvalidConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfigError(f"unknown config keys {sorted(unknown)}")
        missing = {"coefficient", "mode"} - set(data)
        if missing:
            raise InvalidConfigError(f"missing config keys {sorted(missing)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    @property
    def coefficient_name(self) -> str:
        c = self.coefficient
        return c if isinstance(c, str) else c.get("name", f"inline_{c.get('type', '?')}")

    @property
    def cell_shape(self) -> tuple[int, int]:
        # matched by default: one cell mesh per period of the plate mesh
        return (self.cell_n or self.p, self.cell_n2 or self.n2)

    def build_coefficient(self):
        try:
            return _coefficient_from(self.coefficient)
        except InvalidConfigError:
            raise
        except PlateHomogError as exc:
            raise InvalidConfigError(f"coefficient: {exc}") from None

    def spec(self, eps: float) -> PlateProblemSpec:
        return PlateProblemSpec(self.L, eps, self.mode, p=self.p, n2=self.n2,
                                **load_preset(self.load, self.mode))

    def as_dict(self) -> dict:
        return asdict(self)


_LAME_BASIS = {
    "const": lambda y1, y2: np.ones(np.broadcast(y1, y2).shape),
    "cos_y1": lambda y1, y2: np.cos(2 * np.pi * y1) + 0.0 * y2,
    "sin_y1": lambda y1, y2: np.sin(2 * np.pi * y1) + 0.0 * y2,
    "y2": lambda y1, y2: y2 + 0.0 * y1,
}


def _lame_field(spec):
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return float(spec)
    if not isinstance(spec, dict) or not spec or set(spec) - set(_LAME_BASIS):
        raise InvalidConfigError(f"Lame field must be a number or a dict over "
                                 f"{sorted(_LAME_BASIS)}, got {spec!r}")
    terms = [(float(c), _LAME_BASIS[k]) for k, c in spec.items()]
    return lambda y1, y2: sum(c * b(y1, y2) for c, b in terms)


def _coefficient_from(spec):
    if isinstance(spec, str):
        return coefficients.preset(spec)
    if not isinstance(spec, dict) or "type" not in spec:
        raise InvalidConfigError("coefficient must be a preset key or an object with 'type'")
    kind = spec["type"]
    name = spec.get("name", f"inline_{kind}")
    allowed = {"constant": {"matrix"}, "laminate": {"values", "breakpoints"},
               "stratified": {"lower", "upper"}, "trig": {"amplitude"},
               "isotropic": {"lambda", "mu", "parity_class"}}
    if kind not in allowed:
        raise InvalidConfigError(f"unknown inline coefficient type {kind!r}")
    extra = set(spec) - allowed[kind] - {"type", "name"}
    if extra:
        raise InvalidConfigError(f"unknown keys for {kind} coefficient: {sorted(extra)}")
    try:
        if kind == "constant":
            return coefficients.constant_scalar(np.asarray(spec["matrix"], dtype=float), name)
        if kind == "laminate":
            return coefficients.make_laminate_inplane(spec["values"], spec["breakpoints"], name)
        if kind == "stratified":
            return coefficients.make_stratified(spec["lower"], spec["upper"], name)
        if kind == "trig":
            return coefficients.make_smooth_trig(spec.get("amplitude", 0.5), name)
        return coefficients.make_isotropic(_lame_field(spec["lambda"]), _lame_field(spec["mu"]),
                                           name, parity_class=spec.get("parity_class"))
    except KeyError as exc:
        raise InvalidConfigError(f"{kind} coefficient needs key {exc}") from None


class _Stage:
    """Context manager that re-raises failures tagged with the stage name."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, tp, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, Exception):
            raise StageError(self.name, exc) from exc
        return False


# --- shared pipeline pieces -------------------------------------------------------

def run_cell(cfg: RunConfig, validate: bool = True) -> cells.CellResults:
    with _Stage("coefficient"):
        coeff = cfg.build_coefficient()
    with _Stage("cell"):
        n, n2 = cfg.cell_shape
        return cells.compute_cell(coeff, n=n, n2=n2, validate=validate)


def _main_corrector(cfg: RunConfig, cell: cells.CellResults):
    return cell.correctors["W" if cfg.mode == "bending" else "w"]


def cell_report(cfg: RunConfig, cell: cells.CellResults) -> dict:
    t = cell.tensors
    out = {"coefficient": cfg.coefficient_name, "mesh": list(cfg.cell_shape)}
    if cfg.mode == "diffusion":
        out["A_star"] = t.A_star
    else:
        out.update({"K11": t.K11, "K12": t.K12, "K22": t.K22})
    residuals = {k: float(v) for k, v in t.checks.items()}
    flux = cells.check_flux_identities(cell.coeff, cell.correctors)
    residuals.update({k: float(v) for k, v in flux.items() if k != "passed"})
    out["identity_residuals"] = residuals
    S = t.S_star
    out["S_star_samples"] = ([] if S is None else
                             [{"x_d": float(x), "value": float(v)}
                              for x, v in zip(S.levels, S.values)])
    return out


def homog_report(cfg: RunConfig, cell: cells.CellResults) -> dict:
    with _Stage("homogenized"):
        spec = cfg.spec(cfg.eps_list[0])
        u = homogenized.closed_form_polynomial(spec, cell.tensors)
    x = np.linspace(0.0, cfg.L, cfg.samples)
    return {"mode": cfg.mode, "L": cfg.L, "stiffness": homogenized.stiffness(spec, cell.tensors),
            "coefficients": [float(c) for c in u.poly.coef],
            "samples": [{"x": float(a), "value": float(b)} for a, b in zip(x, u(x))]}


# --- convergence study --------------------------------------------------------------

def _one_eps(cfg, coeff, cell, u_star, eps):
    with _Stage(f"solve eps={eps:g}"):
        spec = cfg.spec(eps)
        sol = plate.solve_oscillatory(spec, coeff)
    with _Stage(f"error eps={eps:g}"):
        exp = two_scale.build_expansion(cfg.mode, u_star, _main_corrector(cfg, cell),
                                        two_scale.spec_lift(spec), eps)
        err = two_scale.error_h1eps(sol, exp)
        norms = two_scale.data_norms(spec)
    return {"eps": eps, "h1eps": err["h1eps"], "l2": err["l2"], "l2w": err["l2w"],
            "solve_time_s": sol.solve_time if cfg.timing else 0.0,
            "energy_part": err["energy_part"], "iterations": sol.iterations,
            "data_norms": norms}


def run_converge(cfg: RunConfig) -> dict:
    """Cell solves, tensors, closed-form u*, one plate solve per eps, errors and the fit."""
    cell = run_cell(cfg)
    coeff = cell.coeff
    with _Stage("homogenized"):
        u_star = homogenized.closed_form_polynomial(cfg.spec(cfg.eps_list[0]), cell.tensors)
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            rows = list(pool.map(lambda e: _one_eps(cfg, coeff, cell, u_star, e), cfg.eps_list))
    else:
        rows = [_one_eps(cfg, coeff, cell, u_star, e) for e in cfg.eps_list]
    errs = [r["h1eps"] for r in rows]
    fit = two_scale.fit_rate(cfg.eps_list, errs)
    no_model_error = getattr(coeff, "kind", "") == "constant"
    return {
        "version": __version__,
        "command": "converge",
        "config": cfg.as_dict(),
        "rows": rows,
        "slope": fit["slope"],
        "fit": fit,
        "strictly_decreasing": all(b < a for a, b in zip(errs, errs[1:])),
        "flags": ["no model error"] if no_model_error else [],
        "tensors": cell.tensors.as_dict(),
        "identity_residuals": cell_report(cfg, cell)["identity_residuals"],
    }


def write_errors_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([repr(float(r[c])) for c in CSV_COLUMNS])


def read_errors_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def write_report(out_dir, report: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.json"
    path.write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    if report.get("command") == "converge":
        write_errors_csv(out / "errors.csv", report["rows"])
    return path


# --- structural checks --------------------------------------------------------------

def _result(passed, **detail):
    return {"status": "pass" if passed else "fail", **_jsonable(detail)}


def _skipped(reason):
    return {"status": "skipped", "reason": reason}


def run_check(cfg: RunConfig) -> dict:
    """Pass/fail report of the structural identities requested in ``cfg.checks``."""
    elastic = cfg.mode != "diffusion"
    results: dict = {}
    try:
        cell = run_cell(cfg, validate=False)
    except StageError as exc:
        cell = None
        results["cell"] = _result(False, error=str(exc))
    coeff = cfg.build_coefficient()
    t = cell.tensors if cell else None

    for name in cfg.checks:
        if cell is None and name != "rescaling":
            results[name] = _skipped("cell stage failed")
            continue
        if name == "flux":
            r = cells.check_flux_identities(coeff, cell.correctors)
            res = {k: v for k, v in r.items() if k != "passed"}
            results[name] = _result(r["passed"], residuals=res)
        elif name == "symmetry":
            keys = (("energy_vs_flux",) if not elastic else
                    ("K11_vs_k11", "K12_vs_minus_k21", "K12_vs_k12", "K22_vs_minus_k22"))
            res = {k: t.checks[k] for k in keys}
            results[name] = _result(all(v <= CHECK_TOL for v in res.values()), residuals=res)
        elif name == "coercivity":
            results[name] = _coercivity(coeff, t, elastic)
        elif name == "parity":
            results[name] = _parity(cfg, coeff, cell) if elastic else _skipped("diffusion")
        elif name == "sstar_moment":
            results[name] = _sstar_moment(cfg, coeff, t) if elastic else _skipped("diffusion")
        elif name == "rescaling":
            results[name] = _rescaling(cfg, coeff) if not elastic else _skipped("elasticity")
    passed = all(r["status"] != "fail" for r in results.values())
    return {"version": __version__, "command": "check", "config": cfg.as_dict(),
            "checks": results, "passed": passed,
            "tensors": t.as_dict() if t else {}}


def _coercivity(coeff, t, elastic):
    lo, hi = coeff.c_minus, coeff.c_plus
    slack = 1e-12
    if not elastic:
        ok = lo * (1 - slack) <= t.A_star <= hi * (1 + slack)
        return _result(ok, A_star=t.A_star, bounds=[lo, hi])
    b = cells.coercivity_bounds(lo, hi)
    ok = all(b[k][0] * (1 - slack) <= getattr(t, k) <= b[k][1] * (1 + slack)
             for k in ("K11", "K22"))
    return _result(ok, K11=t.K11, K22=t.K22, K11_bounds=b["K11"], K22_bounds=b["K22"])


def _parity(cfg, coeff, cell):
    coef = coefficients.check_parity(coeff)
    detail = {"parity_class": coeff.parity_class, "coefficient": coef,
              "corrector_w": cells.corrector_parity(cell.correctors["w"]),
              "corrector_W": cells.corrector_parity(cell.correctors["W"])}
    ok = (coef["passed"] and detail["corrector_w"] <= CHECK_TOL
          and detail["corrector_W"] <= CHECK_TOL)
    if ok or coeff.parity_class:
        with _Stage("parity solve"):
            sol = plate.solve_oscillatory(cfg.spec(cfg.eps_list[0]), coeff)
        scale = max(1.0, float(np.abs(sol.u.values).max()))
        detail["solution"] = plate.solution_parity(sol) / scale
        ok = ok and detail["solution"] <= CHECK_TOL
    return _result(ok, **detail)


def _sstar_moment(cfg, coeff, t):
    res = {}
    mesh = cells.cell_mesh(*cfg.cell_shape)
    for q in (0, 1, 2):
        W_xi = cells.solve_enriched_corrector(coeff, mesh, q=q)
        res[f"q{q}"] = cells.check_Sstar_moment_identity(coeff, t.S_star, W_xi)["residual"]
    return _result(all(v <= CHECK_TOL for v in res.values()), residuals=res)


def _rescaling(cfg, coeff):
    gaps = {}
    for eps in cfg.eps_list:
        spec = cfg.spec(eps)
        a = plate.solve_oscillatory(spec, coeff).u.values
        b = plate.solve_physical_diffusion(spec, coeff).values
        gaps[repr(eps)] = float(np.abs(a - b).max())
    return _result(all(g <= RESCALING_TOL for g in gaps.values()), max_nodal_gap=gaps)


# --- single solves and diagnostics ----------------------------------------------------

def run_solve(cfg: RunConfig, out_dir=None) -> dict:
    """One plate solve per eps with norms, residual and optional field dumps."""
    coeff = cfg.build_coefficient()
    rows = []
    for eps in cfg.eps_list:
        with _Stage(f"solve eps={eps:g}"):
            spec = cfg.spec(eps)
            sol = plate.solve_oscillatory(spec, coeff)
        row = {"eps": eps, "h1eps_norm": plate.h1_eps_norm(sol.u, spec),
               "l2w_norm": plate.l2w_norm(sol.u, spec), "iterations": sol.iterations,
               "residual": sol.residual, "weak_residual": plate.weak_residual(sol),
               "solve_time_s": sol.solve_time if cfg.timing else 0.0,
               "max_abs": [float(np.abs(sol.u.values[k::sol.u.components]).max())
                           for k in range(sol.u.components)]}
        if spec.is_elastic:
            row["solution_parity"] = plate.solution_parity(sol)
        if cfg.field_dump and out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            dumps = []
            for k in range(sol.u.components):
                path = Path(out_dir) / f"field_eps{eps:g}_u{k + 1}.txt"
                plate.write_field_dump(path, sol.u, spec, component=k)
                dumps.append(path.name)
            row["field_dumps"] = dumps
        rows.append(row)
    return {"version": __version__, "command": "solve", "config": cfg.as_dict(),
            "solutions": rows}


def sine_test(L: float):
    return lambda x: np.sin(np.pi * np.asarray(x) / L)


def run_diag_stress(cfg: RunConfig) -> dict:
    """Weak stress limit with phi = sin(pi x1 / L) and xi = x2 over the eps sweep."""
    if cfg.mode != "bending":
        raise InvalidConfigError("diag-stress needs mode 'bending'")
    cell = run_cell(cfg)
    u_star = homogenized.closed_form_polynomial(cfg.spec(cfg.eps_list[0]), cell.tensors)
    rows = []
    for eps in cfg.eps_list:
        with _Stage(f"solve eps={eps:g}"):
            sol = plate.solve_oscillatory(cfg.spec(eps), cell.coeff)
        d = two_scale.stress_limit_diagnostic(sol, cell.tensors, u_star, sine_test(cfg.L),
                                              lambda t: t)
        d["relative_gap"] = d["gap"] / abs(d["M_star"]) if d["M_star"] else None
        rows.append({"eps": eps, **d})
    gaps = [r["gap"] for r in rows]
    return {"version": __version__, "command": "diag-stress", "config": cfg.as_dict(),
            "rows": rows, "gap_decreasing": all(b < a for a, b in zip(gaps, gaps[1:]))}
