"""Acceptance suite: one test per criterion, each reporting a pass/fail line.

The lines are printed in the terminal summary (see conftest.py) and also when
this file is run directly with ``python tests/test_acceptance.py``.
"""
import time

import numpy as np
import pytest

from platehomog import cells, harness, plate
from platehomog import coefficients as co
from platehomog import homogenized as hz
from platehomog import two_scale as ts
from platehomog.problem import PlateProblemSpec, constant2d, load_preset

RATE_EPS = [0.25, 0.125, 0.0625, 0.03125]
GUARD_EPS = [0.125, 0.0625]
SLOPE_WINDOW = (0.35, 1.25)


def _report(record, n, ok, detail):
    record(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_01_trivial_correctors(acceptance_record):
    t0 = time.perf_counter()
    res = cells.compute_cell(co.preset("identity"), n=64)
    elapsed = time.perf_counter() - t0
    wmax = float(np.abs(res.correctors["w"].field.values).max())
    a = res.tensors.A_star
    ok = wmax <= 1e-9 and abs(a - 1.0) <= 1e-9 and elapsed < 1.0
    _report(acceptance_record, 1, ok, f"|w|max={wmax:.1e} A*={a:.12f} t={elapsed:.2f}s")


def test_criterion_02_laminate(acceptance_record):
    a = cells.compute_cell(co.preset("laminate_1_4"), n=64).tensors.A_star
    _report(acceptance_record, 2, abs(a - 1.6) <= 1e-7, f"A*={a:.12f} (oracle 1.6)")


def test_criterion_03_stratified(acceptance_record):
    a = cells.compute_cell(co.preset("stratified_1_4"), n=64).tensors.A_star
    b = cells.compute_cell(co.preset("stratified_aniso"), n=64).tensors.A_star
    lo, hi = np.array(co.STRATIFIED_LOWER), np.array(co.STRATIFIED_UPPER)
    oracle = np.mean([M[0, 0] - M[0, 1] * M[1, 0] / M[1, 1] for M in (lo, hi)])
    ok = abs(a - 2.5) <= 1e-7 and abs(b - oracle) <= 1e-6
    _report(acceptance_record, 3, ok, f"diag A*={a:.12f} (2.5); full A*={b:.12f} ({oracle})")


def test_criterion_04_plane_stress(acceptance_record, iso_cell):
    t = iso_cell.tensors
    c = co.preset("isotropic_unit")
    errs = [abs(cells.compute_cell(c, n=n).tensors.K22 - 2 / 9) for n in (16, 32, 64)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    S = t.S_star
    s_err = float(np.abs(S.values + 8 / 3 * S.levels).max())
    ok = (abs(t.K11 - 8 / 3) <= 1e-7 and abs(t.K22 - 2 / 9) <= 1e-3 and abs(t.K12) <= 1e-8
          and s_err <= 2e-3 and np.all(orders > 1.8))
    _report(acceptance_record, 4, ok,
            f"K11 err={abs(t.K11 - 8 / 3):.1e} K22 err={abs(t.K22 - 2 / 9):.1e} "
            f"orders={np.round(orders, 2).tolist()} K12={t.K12:.1e} S* err={s_err:.1e}")


def test_criterion_05_structural_identities(acceptance_record):
    t0 = time.perf_counter()
    worst = {}
    for key in ("laminate_1_4", "stratified_aniso", "trig_diffusion"):
        c = co.preset(key)
        r = cells.compute_cell(c, n=64)
        worst[f"{key}:energy_vs_flux"] = r.tensors.checks["energy_vs_flux"]
        rep = cells.check_flux_identities(c, r.correctors)
        worst[f"{key}:flux"] = max(v for k, v in rep.items() if k != "passed")
    for key in ("trig_isotropic", "layered_isotropic", "isotropic_unit"):
        c = co.preset(key)
        r = cells.compute_cell(c, n=64)
        t = r.tensors
        worst[f"{key}:tensor_forms"] = max(t.checks[k] for k in (
            "K11_vs_k11", "K12_vs_minus_k21", "K12_vs_k12", "K22_vs_minus_k22"))
        rep = cells.check_flux_identities(c, r.correctors)
        worst[f"{key}:flux_moments"] = max(v for k, v in rep.items() if k != "passed")
        for q in (0, 1, 2):
            W_xi = cells.solve_enriched_corrector(c, r.mesh, q=q)
            m = cells.check_Sstar_moment_identity(c, t.S_star, W_xi)
            worst[f"{key}:Sstar_q{q}"] = m["residual"] / max(1.0, abs(m["rhs"]))
        worst[f"{key}:corrector_parity"] = max(cells.corrector_parity(r.correctors[k])
                                               for k in ("w", "W"))
        for mode in ("membrane", "bending"):
            s = PlateProblemSpec(1.0, 0.125, mode, p=16, n2=16, **load_preset("unit", mode))
            sol = plate.solve_oscillatory(s, c)
            worst[f"{key}:{mode}_solution_parity"] = (
                plate.solution_parity(sol) / np.abs(sol.u.values).max())
    elapsed = time.perf_counter() - t0
    name, value = max(worst.items(), key=lambda kv: kv[1])
    ok = value <= 1e-8 and elapsed < 30.0
    _report(acceptance_record, 5, ok,
            f"{len(worst)} residuals, worst {name}={value:.1e}, t={elapsed:.1f}s")


def test_criterion_06_coercivity(acceptance_record):
    lines = []
    ok = True
    for key in co.PRESETS:
        c = co.preset(key)
        t = cells.compute_cell(c, n=64).tensors
        if isinstance(c, co.ScalarCoefficient):
            good = c.c_minus <= t.A_star
            lines.append(f"{key} {c.c_minus:g}<={t.A_star:.4g}")
        else:
            upper = c.c_plus * (c.c_plus / c.c_minus + 1)
            good = c.c_minus <= t.K11 and c.c_minus / 12 <= t.K22 <= upper
            lines.append(f"{key} K11={t.K11:.4g}>={c.c_minus:g} "
                         f"{c.c_minus / 12:.3g}<=K22={t.K22:.4g}<={upper:.3g}")
        ok = ok and good
    _report(acceptance_record, 6, ok, "; ".join(lines))


def test_criterion_07_rescaling(acceptance_record):
    gaps = {}
    for key in ("trig_diffusion", "stratified_aniso"):
        c = co.preset(key)
        for eps in (1.0, 0.5, 0.125):
            s = PlateProblemSpec(1.0, eps, "diffusion", p=16, n2=16,
                                 **load_preset("linear", "diffusion"))
            a = plate.solve_oscillatory(s, c).u.values
            b = plate.solve_physical_diffusion(s, c).values
            gaps[f"{key}@{eps:g}"] = float(np.abs(a - b).max())
    worst = max(gaps.values())
    _report(acceptance_record, 7, worst <= 1e-9, f"max nodal gap {worst:.1e} over {list(gaps)}")


def test_criterion_08_homogenized_oracles(acceptance_record, iso_cell):
    L, f = 2.0, 3.0
    t = cells.compute_cell(co.preset("trig_diffusion"), n=64).tensors
    s = PlateProblemSpec(L, 0.5, "diffusion", f=(constant2d(f),))
    u = hz.solve_homogenized(s, t, n=64)
    x = u.field.mesh.nodes
    d_err = float(np.abs(u(x) - x * (L - x) * f / (2 * t.A_star)).max())
    K22 = iso_cell.tensors.K22
    b = PlateProblemSpec(1.0, 0.5, "bending", **load_preset("unit", "bending"))
    w = hz.solve_homogenized(b, iso_cell.tensors, n=16)(0.5)
    b_err = abs(w - 1 / (384 * K22))
    ok = d_err <= 1e-9 and b_err <= 1e-9
    _report(acceptance_record, 8, ok, f"diffusion nodal err={d_err:.1e}; "
                                      f"beam midpoint {w:.10f} err={b_err:.1e}")


def _rate_config(mode, key, p, eps):
    return harness.RunConfig.from_dict({"coefficient": key, "mode": mode, "eps_list": eps,
                                        "p": p, "n2": 32, "load": "unit", "timing": False})


@pytest.mark.parametrize("n, mode, key", [(9, "diffusion", "trig_diffusion"),
                                          (10, "membrane", "trig_isotropic"),
                                          (11, "bending", "trig_isotropic")])
def test_criteria_09_to_11_rates(acceptance_record, n, mode, key):
    t0 = time.perf_counter()
    main = harness.run_converge(_rate_config(mode, key, 32, RATE_EPS))
    g32 = harness.run_converge(_rate_config(mode, key, 32, GUARD_EPS))["slope"]
    g64 = harness.run_converge(_rate_config(mode, key, 64, GUARD_EPS))["slope"]
    elapsed = time.perf_counter() - t0
    slope = main["slope"]
    errs = [r["h1eps"] for r in main["rows"]]
    ok = (main["strictly_decreasing"] and SLOPE_WINDOW[0] <= slope <= SLOPE_WINDOW[1]
          and abs(g64 - g32) <= 0.1 and elapsed <= 600)
    _report(acceptance_record, n, ok,
            f"{mode}: errors={[f'{e:.3e}' for e in errs]} slope={slope:.3f} "
            f"guard p32={g32:.3f} p64={g64:.3f} t={elapsed:.1f}s")


def test_criterion_12_stress_limit(acceptance_record):
    cfg = harness.RunConfig.from_dict({"coefficient": "trig_isotropic", "mode": "bending",
                                       "eps_list": [0.125, 0.0625, 0.03125], "p": 32,
                                       "n2": 32, "load": "unit"})
    rep = harness.run_diag_stress(cfg)
    rel = [r["relative_gap"] for r in rep["rows"]]
    ok = rep["gap_decreasing"] and rel[-1] <= 0.10
    _report(acceptance_record, 12, ok, f"relative gaps {[f'{g:.4f}' for g in rel]} "
                                       f"M*={rep['rows'][-1]['M_star']:.6f}")


def test_criterion_13_chain_rule(acceptance_record, trig_iso_cell):
    worst = {}
    diff_cell = cells.compute_cell(co.preset("trig_diffusion"), n=32)
    for mode in ("diffusion", "membrane", "bending"):
        cell = diff_cell if mode == "diffusion" else trig_iso_cell
        corr = cell.correctors["W" if mode == "bending" else "w"]
        for eps in RATE_EPS:
            s = PlateProblemSpec(1.0, eps, mode, **load_preset("unit", mode))
            u = hz.closed_form_polynomial(s, cell.tensors)
            exp = ts.build_expansion(mode, u, corr, ts.spec_lift(s), eps)
            worst[mode] = max(worst.get(mode, 0.0), ts.fd_check(exp, 1.0, n_points=100))
    ok = max(worst.values()) <= 1e-5
    _report(acceptance_record, 13, ok,
            "max relative FD gap " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
