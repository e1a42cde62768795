import json
import math
from fractions import Fraction

import numpy as np
import pytest

from intercurv import catalog as cat
from intercurv import verify
from intercurv.cli import bundled_configs
from intercurv.verify import COVERAGE, FAMILIES, ConfigError, Context, check_family


def _all_check_ids():
    return {c for fam in FAMILIES.values() for c in fam["checks"]}


# -- registry ---------------------------------------------------------------------


def test_coverage_points_at_registered_checks():
    ids = _all_check_ids()
    for item, checks in COVERAGE.items():
        assert checks, item
        assert set(checks) <= ids, item


def test_every_declared_cover_is_a_manifest_item():
    for fam in FAMILIES.values():
        for spec in fam["checks"].values():
            assert set(spec.covers) <= set(COVERAGE)


def test_default_suite_covers_the_manifest():
    suite = json.loads(bundled_configs()["default_suite"])
    selected = set()
    reports = 0
    for run in suite["runs"]:
        names = run.get("checks") or verify.default_checks(run["family"], run.get("params", {}))
        selected |= set(names)
        for name in names:
            reports += len(run.get("params", {}).get("shape_ns", [3, 4, 5, 6, 7])) if name == "shape_operator" else 1
    for item, checks in COVERAGE.items():
        assert selected & set(checks), f"{item} is not exercised by the default suite"
    assert reports >= 20


def test_perturbation_needs_the_strict_gate():
    assert "ts_perturbation" in verify.default_checks("torus_sphere", {"m": 3, "k": 5, "F": "2"})
    assert "ts_perturbation" not in verify.default_checks("torus_sphere", {"m": 3, "k": 4, "F": "2"})


# -- error handling ---------------------------------------------------------------------


def test_unknown_family_and_check():
    with pytest.raises(ConfigError):
        check_family("nope", {})
    with pytest.raises(ConfigError):
        check_family("engine", {}, ["not_a_check"])


def test_invalid_parameters():
    with pytest.raises(cat.FamilyError):
        check_family("torus_sphere", {"m": 3, "k": 5, "F": "0.5*sin(2*pi*x1)"}, ["ts_christoffel"])
    with pytest.raises(ConfigError):
        check_family("torus_sphere", {"m": 2, "k": 4, "F": "2"}, ["ts_christoffel"])
    with pytest.raises(cat.FamilyError):
        check_family("warped_cylinder", {"n": 5, "beta": 2.0, "branch": "C2_zero"}, ["cyl_ode"])


def test_a_raising_check_becomes_a_failing_report():
    # no default psi for this warp, so the metric-variation check cannot run
    params = {"m": 3, "k": 5, "F": "2+0.5*cos(2*pi*x1)"}
    reps = check_family("torus_sphere", params, ["ts_cm_coordinate", "ts_metric_variation"], Context(grid="coarse"))
    assert [r.check_id for r in reps] == ["ts_cm_coordinate", "ts_metric_variation"]
    assert reps[0].passed
    assert not reps[1].passed and math.isinf(reps[1].residuals["error"])
    assert reps[1].witnesses["exception"] == "PreconditionError"


def test_reports_carry_seed_and_covers():
    reps = check_family("engine", {}, ["engine_sphere"], Context(seed=99))
    assert reps[0].seed == 99 and reps[0].covers == ("cm_definition",)


# -- algebra ------------------------------------------------------------------------------


def test_gate_labels():
    t = verify.gate_table(9)
    assert t[(3, 7)] == "equality" and t[(4, 7)] == "equality"
    assert t[(3, 8)] == "strict"
    assert all(v == "vacuous" for (m, n), v in t.items() if m == 2)
    assert "equality" in verify.render_gate_table(9)


def test_dimension_constants_hold_exactly():
    rep = verify.check_dim_constants()
    assert rep.passed and rep.residuals["violated_claims"] == 0


@pytest.mark.parametrize("n,value", [(4, 0.5), (5, 0.25), (6, 0.0)])
def test_shape_operator_bound(n, value):
    rep = verify.check_shape_operator_bound(n)
    assert rep.passed
    assert cat.shape_operator_constant(n) == value
    oracle, _ = verify.shape_operator_oracle(n)
    assert oracle == pytest.approx(value, abs=1e-6)
    if n == 6:
        assert rep.witnesses["n6_witness"]["Q"] == 0.0


def test_young_constant_is_a_lower_bound():
    for n in (3, 4, 5):
        assert verify.young_constant(n) <= cat.shape_operator_constant(n) + 1e-15


# -- cylinders -----------------------------------------------------------------------------


@pytest.mark.parametrize(
    "params",
    [
        {"n": 5, "beta": 1.0, "branch": "C2_zero"},
        {"n": 6, "beta": 1.0, "branch": "C2_negative"},
        {"n": 3, "beta": 0.25, "branch": "n3_special"},
    ],
)
def test_cylinder_residuals(params):
    p = cat.WarpedCylinderParams(**params)
    r = np.linspace(-10, 10, 201) if p.branch != "C2_negative" else np.linspace(0.05, 10, 200)
    res = verify.cylinder_ode_residuals(p, r)
    assert res and max(float(np.max(v)) for v in res.values()) <= 1e-10


def test_cylinder_family_passes_on_a_coarse_grid():
    reps = check_family("warped_cylinder", {"n": 5, "beta": 1.0, "branch": "C2_zero"}, ctx=Context(grid="coarse"))
    assert all(r.passed for r in reps), [r.summary_line() for r in reps]


def test_r0_failure_witness_at_large_eps():
    rep = check_family("warped_cylinder", {"n": 5, "beta": 1.0, "branch": "C2_zero"}, ["r0_failure_witness"])[0]
    assert rep.passed


def test_dim_constants_c2_exact():
    c2, c3 = verify._c2_c3_exact(5, Fraction(1))
    assert c2 == 0 and c3 == 1


def test_manifest_and_declared_covers_agree():
    for fam in FAMILIES.values():
        for name, spec in fam["checks"].items():
            for item in spec.covers:
                assert name in COVERAGE[item]
    for item, checks in COVERAGE.items():
        for c in checks:
            spec = next(f["checks"][c] for f in FAMILIES.values() if c in f["checks"])
            assert item in spec.covers
