"""The twelve acceptance criteria, at their stated tolerances and budgets.

Each test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary under "acceptance criteria".
"""

import json
import time

import numpy as np
import pytest

from intercurv import catalog as cat
from intercurv import cli, verify
from intercurv.verify import Context, check_family

pytestmark = pytest.mark.slow

WARP2 = "2+0.5*sin(2*pi*x1)*cos(2*pi*x2)"
WARP1 = "2+0.5*sin(2*pi*x1)"


def _run(family, params, checks, **opts):
    return check_family(family, params, checks, Context(**opts))


def _detail(reports):
    return "; ".join(r.summary_line() for r in reports)


def _assert(ok, reports):
    assert ok, "\n".join(r.summary_line() + " " + str(r.failing()) for r in reports)


def test_criterion_01_engine_oracle(criterion):
    t0 = time.perf_counter()
    reps = _run("engine", {"sphere_dim": 4}, ["engine_sphere"])
    dt = time.perf_counter() - t0
    r = reps[0]
    passed = r.residuals["sectional_minus_one"] <= 1e-9 and r.params["points"] == 100
    _assert(criterion(1, "unit S^4 sectional = 1 at 100 random points/planes", passed, dt, 5, _detail(reps)), reps)


def test_criterion_02_christoffel_and_curvature(criterion):
    t0 = time.perf_counter()
    reps = []
    for m, k in ((3, 5), (4, 4)):
        reps += _run("torus_sphere", {"m": m, "k": k, "F": WARP2, "eps": 0.1}, ["ts_christoffel", "ts_curvature"])
    dt = time.perf_counter() - t0
    passed = all(r.passed for r in reps) and all(max(r.residuals.values()) <= 1e-8 for r in reps)
    _assert(criterion(2, "Christoffel and curvature closed forms, (3,5) and (4,4)", passed, dt, 30, _detail(reps)), reps)


def test_criterion_03_coordinate_frame_cm(criterion):
    t0 = time.perf_counter()
    reps = _run("torus_sphere", {"m": 3, "k": 5, "F": WARP2, "eps": 0.1}, ["ts_cm_coordinate"])
    reps += _run("torus_sphere", {"m": 4, "k": 4, "F": WARP2, "eps": 0.1}, ["ts_cm_coordinate"])
    dt = time.perf_counter() - t0
    coeff = cat.cm_coordinate_coefficient(3, 5)
    passed = all(r.passed for r in reps) and reps[0].params["points"] >= 50 and float(coeff) == 1.25
    _assert(criterion(3, "coordinate-frame C_m formula, 50 points; coefficient 1.25", passed, dt, 30, _detail(reps)), reps)


def test_criterion_04_nonnegativity_and_perturbation(criterion):
    t0 = time.perf_counter()
    scan = _run("torus_sphere", {"m": 4, "k": 4, "F": WARP2, "eps": 0.1}, ["ts_eps_search", "ts_nonneg_scan"])
    pert = _run("torus_sphere", {"m": 3, "k": 6, "F": WARP1, "eps": 0.1}, ["ts_perturbation"])
    dt = time.perf_counter() - t0
    nonneg = scan[1]
    deltas = pert[0].witnesses
    passed = (
        all(r.passed for r in scan + pert)
        and nonneg.witnesses["global_min"] >= -1e-8
        and deltas.get("delta", 0.0) > 0
        and deltas.get("t", 0.0) > 0
    )
    detail = f"eps*={nonneg.params['eps']} global_min={nonneg.witnesses['global_min']:.3e}; t={deltas.get('t')} delta={deltas.get('delta')}"
    _assert(criterion(4, "(4,4) scan at eps* >= -1e-8 and (3,6) perturbed positivity", passed, dt, 600, detail), scan + pert)


def test_criterion_05_hessian_blocks(criterion):
    t0 = time.perf_counter()
    opts = {"ts_hessian": {"F": "2+0.1*sin(2*pi*x1)*cos(2*pi*x2)", "eps": [0.1, 0.05, 0.025]}}
    reps = check_family("torus_sphere", {"m": 4, "k": 4, "F": WARP2, "eps": 0.1}, ["ts_hessian"], Context(check_options=opts))
    dt = time.perf_counter() - t0
    r = reps[0]
    passed = r.passed and r.witnesses["c"] > 0
    detail = f"c={r.witnesses['c']:.4g}; " + _detail(reps)
    _assert(criterion(5, "Hessian cross blocks, x-block and z-block ~ c eps^-2", passed, dt, 120, detail), reps)


def test_criterion_06_metric_variation(criterion):
    t0 = time.perf_counter()
    reps = _run("torus_sphere", {"m": 3, "k": 5, "F": WARP1, "eps": 0.0125}, ["ts_metric_variation"])
    reps += _run("torus_sphere", {"m": 4, "k": 4, "F": WARP2, "eps": 0.025}, ["ts_metric_variation"])
    dt = time.perf_counter() - t0
    passed = all(r.passed for r in reps) and all(r.residuals["formula_rel"] <= 1e-5 for r in reps)
    _assert(criterion(6, "metric-variation derivative = -(n-1)/2 tr Hess psi and > 0", passed, dt, 60, _detail(reps)), reps)


CYLINDERS = [
    {"n": 5, "beta": 1.0, "lam": 1.0, "branch": "C2_zero"},
    {"n": 6, "beta": 1.0, "lam": 1.0, "branch": "C2_negative"},
    {"n": 3, "beta": 0.25, "lam": 1.0, "branch": "n3_special"},
]


def test_criterion_07_ode_branches(criterion):
    t0 = time.perf_counter()
    reps = []
    for params in CYLINDERS:
        reps += _run("warped_cylinder", params, ["cyl_ode"])
    dt = time.perf_counter() - t0
    passed = all(r.passed for r in reps)
    for r in reps:
        ode = {k: v for k, v in r.residuals.items() if k not in ("f_not_decaying", "c3_not_positive")}
        passed = passed and max(ode.values()) <= 1e-10
    c3 = [cat.constants_c2_c3(p["n"], p["beta"])[1] for p in CYLINDERS[:2]]
    passed = passed and all(c > 0 for c in c3)
    _assert(criterion(7, "ODE residuals <= 1e-10 for (5,1,1), (6,1,1), (3,1/4,1); C3 > 0; f decays", passed, dt, 10, _detail(reps)), reps)


def test_criterion_08_r0_direction(criterion):
    t0 = time.perf_counter()
    reps = []
    for params in CYLINDERS[:2]:
        reps += _run("warped_cylinder", dict(params, eps=1e-3), ["r0_direction", "r0_failure_witness"])
    dt = time.perf_counter() - t0
    aligned = [r for r in reps if r.check_id == "r0_direction"]
    passed = all(r.passed for r in reps) and all(r.params["r_min"] == -6.0 and r.params["r_max"] == 6.0 for r in aligned)
    _assert(criterion(8, "R0 along d_r at eps=1e-3 on [-6,6]; failure witness at eps=10", passed, dt, 60, _detail(reps)), reps)


def test_criterion_09_biricci(criterion):
    t0 = time.perf_counter()
    reps = _run("biricci_plane", {"sphere_dim": 5, "lam": 1.0}, ["br_curvature", "br_identity", "br_scan"])
    dt = time.perf_counter() - t0
    u = cat.biricci_profiles(cat.BiRicciPlaneParams(5)).u
    u_min = float(np.min(u(np.linspace(-10, 10, 2001)[:, None])))
    passed = all(r.passed for r in reps) and u_min >= 1.0
    detail = f"u_min={u_min}; " + _detail(reps)
    _assert(criterion(9, "bi-Ricci identity, cross terms, m=2 scan >= lambda - 1e-6, u >= 1", passed, dt, 300, detail), reps)


def test_criterion_10_shape_operator(criterion):
    t0 = time.perf_counter()
    reps = [verify.check_shape_operator_bound(n) for n in (4, 5, 6)]
    dt = time.perf_counter() - t0
    expected = {4: 0.5, 5: 0.25, 6: 0.0}
    passed = all(r.passed for r in reps)
    for r in reps:
        n = r.params["n"]
        passed = passed and abs(r.witnesses["oracle"] - expected[n]) <= 1e-6 and r.witnesses["analytic"] == expected[n]
    passed = passed and abs(reps[2].witnesses["n6_witness"]["Q"]) <= 1e-12
    _assert(criterion(10, "min Q/H^2 = 1/2, 1/4, 0 (with witness), matched by random search", passed, dt, 30, _detail(reps)), reps)


def test_criterion_11_gate_table(criterion):
    t0 = time.perf_counter()
    rep = verify.check_dim_constants()
    dt = time.perf_counter() - t0
    passed = rep.passed and rep.residuals["violated_claims"] == 0
    _assert(criterion(11, "gate table and dimension constants hold exactly", passed, dt, 1, rep.summary_line()), [rep])


def test_criterion_12_determinism(criterion, tmp_path):
    cfg = {
        "name": "determinism",
        "grid": "coarse",
        "runs": [
            {"family": "engine"},
            {"family": "warped_cylinder", "params": {"n": 5, "beta": 1.0, "branch": "C2_zero"}},
            {"family": "biricci_plane", "params": {"sphere_dim": 5}, "checks": ["br_scan"]},
            {"family": "torus_sphere", "params": {"m": 3, "k": 5, "F": WARP1, "eps": 0.0125}, "checks": ["ts_optimizer", "ts_large_eps"]},
        ],
    }
    path = tmp_path / "determinism.json"
    path.write_text(json.dumps(cfg))
    t0 = time.perf_counter()
    codes = [cli.main(["run", str(path), "--seed", "2024", "--out", str(tmp_path / d)]) for d in ("a", "b")]
    dt = time.perf_counter() - t0
    a, b = ((tmp_path / d / "report.json").read_bytes() for d in ("a", "b"))
    csv_same = all(
        (tmp_path / "a" / f.name).read_bytes() == f.read_bytes() for f in (tmp_path / "b").glob("scan_*.csv")
    )
    passed = a == b and csv_same and codes == [0, 0]
    assert criterion(12, "identical config + seed give byte-identical reports", passed, dt, None, f"{len(a)} bytes, exit codes {codes}")
