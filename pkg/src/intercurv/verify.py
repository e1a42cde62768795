"""Check orchestration: every check returns a :class:`CheckReport`.

Checks are grouped by family.  A check function takes ``(params, ctx)`` and
returns one report; :func:`check_family` runs a list of them in dependency
order and never lets one failure abort the rest.
"""

from __future__ import annotations

import itertools
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from . import catalog as cat
from .expr import parse
from .frameopt import (
    ConvergenceWarning,
    OptimOptions,
    PreconditionError,
    ScanGrid,
    _rmat,
    cm_from_projector,
    find_admissible_eps,
    grass_hessian_cm,
    grassmann_gradient,
    metric_variation_derivative,
    min_cm_at,
    perturbed_positivity_check,
    plane_cm,
    scan_min_cm,
    variation_trace_formula,
)
from .geom import (
    Chart,
    ChartMetric,
    Frame,
    constant_coefficient,
    c_m,
    curvature_at,
    curvature_batch,
    expression_coefficient,
    gauss_residual,
    r0_at,
    sectional,
    slice_geometry,
)
from .report import CheckReport
from .tolerances import DEFAULT, Tolerances

__all__ = [
    "COVERAGE",
    "CheckReport",
    "CheckSpec",
    "ConfigError",
    "Context",
    "FAMILIES",
    "GRID_PRESETS",
    "check_biricci_scan",
    "check_dim_constants",
    "check_family",
    "check_mu_bubble_slice_identity",
    "check_r0_direction",
    "check_shape_operator_bound",
    "cylinder_ode_residuals",
    "default_checks",
    "gate_table",
    "render_gate_table",
    "shape_operator_oracle",
]


GRID_PRESETS = {
    "coarse": {"torus": 5, "sphere": 5, "r": 21},
    "default": {"torus": 9, "sphere": 7, "r": 41},
    "fine": {"torus": 13, "sphere": 9, "r": 81},
}


@dataclass
class Context:
    tol: Tolerances = DEFAULT
    opts: OptimOptions = field(default_factory=OptimOptions)
    grid: str = "default"
    seed: int = 0
    check_options: dict = field(default_factory=dict)
    # memo shared between checks of one family run (e.g. eps*)
    memo: dict = field(default_factory=dict)

    def counts(self) -> dict:
        return GRID_PRESETS[self.grid]

    def option(self, check_id: str, key: str, default):
        return self.check_options.get(check_id, {}).get(key, default)

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed & (2**64 - 1), salt]))


def _rel(a, b, floor: float = 0.0) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    den = max(float(np.max(np.abs(b))) if b.size else 0.0, floor)
    if den == 0.0:
        return float(np.max(np.abs(a - b))) if a.size else 0.0
    return float(np.max(np.abs(a - b)) / den)


def _timed(fn):
    def wrapper(params, ctx):
        t0 = time.perf_counter()
        rep = fn(params, ctx)
        rep.runtime = time.perf_counter() - t0
        rep.seed = ctx.seed
        return rep

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _sphere_axis(count: int) -> tuple:
    return tuple(float(x) for x in np.linspace(-3.0, 3.0, count))


def _torus_axis(count: int) -> tuple:
    return tuple(j / count for j in range(count))


# ---------------------------------------------------------------------------
# Engine self-tests on model spaces
# ---------------------------------------------------------------------------


def _round_sphere(k: int, radius: float = 1.0) -> ChartMetric:
    ys = cat.sphere_vars(k)
    e = parse(f"{radius * radius!r}*4/(1+" + "+".join(f"{y}^2" for y in ys) + ")^2", ys)
    c = expression_coefficient(e, range(k), k)
    return ChartMetric(Chart(tuple(ys), (False,) * k, ((-3.0, 3.0),) * k), {(a, a): c for a in range(k)}, f"S^{k}")


def _euclidean(n: int) -> ChartMetric:
    one = constant_coefficient(1.0, n)
    names = tuple(f"x{i + 1}" for i in range(n))
    return ChartMetric(Chart(names, (False,) * n, ((-1.0, 1.0),) * n), {(a, a): one for a in range(n)}, f"R^{n}")


def _polar_euclidean(n: int) -> ChartMetric:
    """``dr^2 + r^2 gbar`` on ``(r, y)``; ``gbar`` round in stereographic form."""
    ys = cat.sphere_vars(n - 1)
    e = parse("r^2*4/(1+" + "+".join(f"{y}^2" for y in ys) + ")^2", ["r"] + ys)
    c = expression_coefficient(e, range(n), n)
    coeff = {(0, 0): constant_coefficient(1.0, n)}
    coeff.update({(a, a): c for a in range(1, n)})
    return ChartMetric(Chart(tuple(["r"] + ys), (False,) * n, ((0.1, 10.0),) + ((-3.0, 3.0),) * (n - 1)), coeff, "polar")


def _product_s2s2() -> ChartMetric:
    e1 = parse("4/(1+a1^2+a2^2)^2", ["a1", "a2"])
    e2 = parse("4/(1+b1^2+b2^2)^2", ["b1", "b2"])
    c1 = expression_coefficient(e1, [0, 1], 4)
    c2 = expression_coefficient(e2, [2, 3], 4)
    return ChartMetric(
        Chart(("a1", "a2", "b1", "b2"), (False,) * 4, ((-3.0, 3.0),) * 4),
        {(0, 0): c1, (1, 1): c1, (2, 2): c2, (3, 3): c2},
        "S2xS2",
    )


def _symmetry_residual(cb) -> float:
    R = cb.riem_low
    scale = np.max(np.abs(R), axis=(-1, -2, -3, -4))
    scale = np.where(scale > 0, scale, 1.0)[:, None, None, None, None]
    terms = [
        R + np.swapaxes(R, 1, 2),  # R_pqrs = -R_qprs (batch axis first)
        R + np.swapaxes(R, 3, 4),
        R - np.transpose(R, (0, 3, 4, 1, 2)),
        R + np.transpose(R, (0, 1, 3, 4, 2)) + np.transpose(R, (0, 1, 4, 2, 3)),
    ]
    return float(max(np.max(np.abs(t) / scale) for t in terms))


def _random_unit_pairs(rng, g, count):
    E = np.linalg.inv(np.linalg.cholesky(g)).T
    out = []
    for _ in range(count):
        V = rng.standard_normal((g.shape[0], 2))
        out.append((E @ V[:, 0], E @ V[:, 1]))
    return out


def _cm_random_completion(cp, vectors, m, rng) -> float:
    """Definition sum over a completion built from random vectors."""
    n = cp.dim
    basis = [v for v in vectors]
    while len(basis) < n:
        v = rng.standard_normal(n)
        for _ in range(2):
            for b in basis:
                v = v - cp.inner(b, v) * b
        basis.append(v / math.sqrt(cp.inner(v, v)))
    return sum(cp.R(basis[p], basis[q], basis[q], basis[p]) for p in range(m) for q in range(p + 1, n))


@_timed
def check_engine_sphere(params, ctx):
    """Unit S^4 sectional curvature 1, plus constant-curvature C_m oracles."""
    k = int(params.get("sphere_dim", 4))
    M = _round_sphere(k)
    rng = ctx.rng(101)
    pts = rng.uniform(-2.5, 2.5, (100, k))
    cb = curvature_batch(M, pts)
    worst = 0.0
    for b in range(100):
        cp = cb.at(b)
        X, Y = _random_unit_pairs(rng, cp.g, 1)[0]
        worst = max(worst, abs(sectional(cp, X, Y) - 1.0))
    # C_2 on S^3 for random frames: 2 + 1
    S3 = _round_sphere(3)
    cp3 = curvature_at(S3, rng.uniform(-2, 2, 3))
    E3 = np.linalg.inv(np.linalg.cholesky(cp3.g)).T
    Q, _ = np.linalg.qr(rng.standard_normal((3, 2)))
    cm3 = c_m(cp3, Frame(cp3.point, (E3 @ Q).T))
    # min over planes on S^4, m = 2: constant 5
    opts = replace(ctx.opts, starts=min(ctx.opts.starts, 8))
    mins = [min_cm_at(M, p, 2, opts, index=i).value for i, p in enumerate(pts[:5])]
    # scan minima constant across the grid
    grid = ScanGrid((_sphere_axis(3),) * k, ball=(tuple(range(k)),))
    scan = scan_min_cm(M, grid, 2, opts)
    # flat space: everything zero
    flat = curvature_batch(_euclidean(k), rng.uniform(-1, 1, (5, k)))
    return CheckReport(
        "engine_sphere",
        {"sphere_dim": k, "points": 100},
        {
            "sectional_minus_one": worst,
            "cm_S3_m2_minus_3": abs(cm3 - 3.0),
            "min_cm_S4_m2_minus_5": float(np.max(np.abs(np.array(mins) - 5.0))),
            "scan_spread": float(np.ptp(scan.minima)),
            "flat_riemann": float(np.max(np.abs(flat.riem_low))),
        },
        {
            "sectional_minus_one": ctx.tol.identity,
            "cm_S3_m2_minus_3": ctx.tol.identity,
            "min_cm_S4_m2_minus_5": ctx.tol.scan,
            "scan_spread": ctx.tol.nonneg_scan,
            "flat_riemann": 0.0,
        },
        {"scan_points": len(scan.points)},
        covers=("cm_definition", "engine"),
    )


@_timed
def check_engine_invariants(params, ctx):
    """Tensor symmetries, span invariance of C_m, Ricci/scalar reductions, R0 minimality."""
    rng = ctx.rng(102)
    M = cat.build_torus_sphere(cat.TorusSphereParams(3, 3, 0.3, "2+0.5*sin(2*pi*x1)*cos(2*pi*x2)+0.2*cos(2*pi*x3)"))
    n = M.dim
    pts = np.hstack([rng.uniform(-2, 2, (20, 3)), rng.uniform(0, 1, (20, 3))])
    cb = curvature_batch(M, pts)
    sym = _symmetry_residual(cb)
    inv = 0.0
    reductions = 0.0
    r0_viol = 0.0
    scal = 0.0
    for b in range(5):
        cp = cb.at(b)
        E = np.linalg.inv(np.linalg.cholesky(cp.g)).T
        scale = 1.0 + np.max(np.abs(cp.ricci))
        for m in (1, 2, 3, n - 1):
            Q, _ = np.linalg.qr(rng.standard_normal((n, m)))
            base = c_m(cp, Frame(cp.point, (E @ Q).T))
            rot, _ = np.linalg.qr(rng.standard_normal((m, m)))
            perm = rng.permutation(m)
            v_rot = c_m(cp, Frame(cp.point, (E @ Q @ rot).T))
            v_perm = c_m(cp, Frame(cp.point, (E @ Q[:, perm]).T))
            v_comp = _cm_random_completion(cp, (E @ Q).T, m, rng)
            inv = max(inv, abs(v_rot - base) / scale, abs(v_perm - base) / scale, abs(v_comp - base) / scale)
            if m == 1:
                e = (E @ Q)[:, 0]
                reductions = max(reductions, abs(base - cp.ric(e, e)) / scale)
            if m == n - 1:
                reductions = max(reductions, abs(base - 0.5 * cp.scalar) / scale)
        val, e = r0_at(cp)
        for _ in range(100):
            w = E @ rng.standard_normal(n)
            w = w / math.sqrt(cp.inner(w, w))
            r0_viol = max(r0_viol, (val - cp.ric(w, w)) / scale)
        scal = max(scal, abs(cp.scalar - float(np.sum(cp.g_inv * cp.ricci))) / scale)
    # constant rescaling by c^2 scales sectional curvature by 1/c^2
    c = 1.7
    S = _round_sphere(4, radius=c)
    cp = curvature_at(S, rng.uniform(-2, 2, 4))
    X, Y = _random_unit_pairs(rng, cp.g, 1)[0]
    rescale = abs(sectional(cp, X, Y) * c * c - 1.0)
    # S^2 x S^2 mixed plane
    P = _product_s2s2()
    cp = curvature_at(P, rng.uniform(-2, 2, 4))
    mixed = abs(sectional(cp, np.array([1.0, 0, 0, 0]), np.array([0, 0, 1.0, 0])))
    return CheckReport(
        "engine_invariants",
        {"points": 20},
        {
            "tensor_symmetry": sym,
            "cm_span_invariance": inv,
            "cm_ricci_scalar_reduction": reductions,
            "r0_minimality_violation": max(0.0, r0_viol),
            "scalar_trace": scal,
            "rescaling": rescale,
            "product_mixed_plane": mixed,
        },
        {
            "tensor_symmetry": ctx.tol.tensor_symmetry,
            "cm_span_invariance": ctx.tol.identity,
            "cm_ricci_scalar_reduction": ctx.tol.identity,
            "r0_minimality_violation": ctx.tol.identity,
            "scalar_trace": ctx.tol.identity,
            "rescaling": ctx.tol.identity,
            "product_mixed_plane": ctx.tol.identity,
        },
        covers=("cm_definition", "r0_definition", "engine"),
    )


@_timed
def check_engine_slices(params, ctx):
    """Slice mean curvature and the Gauss equation on model hypersurfaces."""
    n = int(params.get("dim", 4))
    P = _polar_euclidean(n)
    rng = ctx.rng(103)
    y = rng.uniform(-1, 1, n - 1)
    H2 = slice_geometry(P, np.concatenate([[2.0], y]), 0).H
    res = 0.0
    for r in (1.0, 2.0):
        pt = np.concatenate([[r], y])
        cp = curvature_at(P, pt)
        e = np.zeros(n)
        e[1] = 1.0 / math.sqrt(cp.g[1, 1])
        res = max(res, gauss_residual(P, pt, 0, e))
    flat = _euclidean(n)
    pt = rng.uniform(-1, 1, n)
    A_flat = float(np.max(np.abs(slice_geometry(flat, pt, 0).A)))
    e = np.zeros(n)
    e[1] = 1.0
    res_flat = gauss_residual(flat, pt, 0, e)
    return CheckReport(
        "engine_slices",
        {"dim": n},
        {
            "sphere_slice_H": abs(H2 - (n - 1) / 2),
            "gauss_round_sphere": res,
            "flat_slice_A": A_flat,
            "gauss_flat": res_flat,
        },
        {
            "sphere_slice_H": ctx.tol.identity,
            "gauss_round_sphere": ctx.tol.identity,
            "flat_slice_A": 0.0,
            "gauss_flat": ctx.tol.identity,
        },
        covers=("gauss_lemma", "engine"),
    )


# ---------------------------------------------------------------------------
# Pure algebra: shape operator constant, dimension gates, barrier profile
# ---------------------------------------------------------------------------


def _shape_q(A: np.ndarray) -> tuple[float, float]:
    """``(Q, H)`` with ``Q = H A(e,e) - A^2(e,e) + |A|^2`` and ``e`` the first axis."""
    H = float(np.trace(A))
    return H * A[0, 0] - float(A[0] @ A[0]) + float(np.sum(A * A)), H


def shape_operator_oracle(n: int, starts: int = 24, seed: int = 0) -> tuple[float, np.ndarray]:
    """Minimize ``Q(A)`` over symmetric ``(n-1) x (n-1)`` matrices with ``tr A = 1``.

    Random starts refined by BFGS on the free upper-triangular entries (the
    last diagonal entry absorbs the trace constraint).  Independent of the
    diagonal reduction.
    """
    N = n - 1
    iu = np.triu_indices(N)
    free = [t for t in range(len(iu[0])) if not (iu[0][t] == N - 1 and iu[1][t] == N - 1)]

    def unpack(x):
        A = np.zeros((N, N))
        vals = np.zeros(len(iu[0]))
        vals[free] = x
        A[iu] = vals
        A = A + np.triu(A, 1).T
        A[N - 1, N - 1] = 1.0 - (np.trace(A) - A[N - 1, N - 1])
        return A

    def fun(x):
        return _shape_q(unpack(x))[0]

    rng = np.random.default_rng(seed)
    best, best_A = math.inf, None
    for _ in range(starts):
        res = minimize(fun, rng.standard_normal(len(free)) * 2, method="BFGS", options={"gtol": 1e-12, "maxiter": 10_000})
        if res.fun < best:
            best, best_A = float(res.fun), unpack(res.x)
    return best, best_A


def young_constant(n: int) -> float:
    """``min(1/5, 1 - 5(n-2)/16) / (n-1)``: the Young-inequality route's constant."""
    return min(0.2, 1 - 5 * (n - 2) / 16) / (n - 1)


def check_shape_operator_bound(n: int, ctx: Optional[Context] = None) -> CheckReport:
    """Exact reduction vs random-search oracle for ``min Q/H^2``."""
    ctx = ctx or Context()
    t0 = time.perf_counter()
    if not 3 <= n <= 7:
        raise PreconditionError("shape operator check needs 3 <= n <= 7")
    analytic = cat.shape_operator_constant(n)
    # one-dimensional grid over a on a + s = 1 as a cross-check of the reduction
    a = np.linspace(-6, 6, 240_001)
    grid_min = float(np.min(a + (1 - a) ** 2 / (n - 2)))
    oracle, A = shape_operator_oracle(n, seed=ctx.seed)
    witness = None
    if n == 6:
        W = np.diag([2.0, -1.0, -1.0, -1.0, -1.0])
        Qw, Hw = _shape_q(W)
        witness = {"A_diag": [2.0, -1.0, -1.0, -1.0, -1.0], "Q": Qw, "H": Hw}
    young = young_constant(n)
    residuals = {
        "oracle_vs_analytic": abs(oracle - analytic),
        "grid_vs_analytic": abs(grid_min - analytic),
        # the Young-inequality constant is a valid lower bound when positive
        "young_bound_violation": max(0.0, young - analytic) if young > 0 else 0.0,
    }
    tols = {"oracle_vs_analytic": ctx.tol.shape_operator, "grid_vs_analytic": ctx.tol.shape_operator, "young_bound_violation": 0.0}
    if witness:
        residuals["witness_Q"] = abs(witness["Q"])
        tols["witness_Q"] = ctx.tol.identity
    return CheckReport(
        f"shape_operator_n{n}",
        {"n": n},
        residuals,
        tols,
        {"analytic": analytic, "oracle": oracle, "oracle_A_over_H": A, "young_constant": young, "n6_witness": witness},
        seed=ctx.seed,
        runtime=time.perf_counter() - t0,
        covers=("shape_operator",),
    )


def gate_label(m: int, n: int) -> str:
    lhs, rhs = n * (m - 2), m * m - 2
    if lhs > rhs:
        return "strict"
    if lhs == rhs:
        return "equality"
    return "vacuous"


def gate_table(max_n: int = 9) -> dict:
    """``(m, n) -> label`` over ``2 <= m < n <= max_n``."""
    return {(m, n): gate_label(m, n) for n in range(3, max_n + 1) for m in range(2, n)}


def _c2_c3_exact(n: int, beta: Fraction) -> tuple[Fraction, Fraction]:
    d = Fraction(1, n - 1) + beta - 1
    c2 = Fraction(1, n - 1) - Fraction(1, 4) * Fraction(n - 3, n - 1) ** 2 / d
    c3 = Fraction(1, 2) * Fraction(n - 3, n - 1) / d
    return c2, c3


def check_dim_constants(ctx: Optional[Context] = None) -> CheckReport:
    """Boundary facts of the three dimension gates, in exact arithmetic."""
    ctx = ctx or Context()
    t0 = time.perf_counter()
    table = gate_table(9)
    bad: list[str] = []
    # nonneg gate: nothing for n <= 6, equality at (3,7) and (4,7)
    for (m, n), lab in table.items():
        if n <= 6 and lab != "vacuous":
            bad.append(f"nonneg gate holds early at {(m, n)}")
        if n <= 7 and lab == "strict":
            bad.append(f"strict gate holds early at {(m, n)}")
    if table[(3, 7)] != "equality" or table[(4, 7)] != "equality":
        bad.append("n=7 cells (3,7), (4,7) are not equality")
    if table[(3, 8)] != "strict":
        bad.append("(3,8) is not strict")
    if any(table[(2, n)] != "vacuous" for n in range(3, 10)):
        bad.append("m=2 cells must be vacuous")
    # beta threshold identity
    for n in range(2, 10):
        if cat.beta_threshold(n) != Fraction(n - 1, 4):
            bad.append(f"beta threshold identity fails at n={n}")
    # rigidity gate: equivalence on every cell, and all m <= 5 at n = 6
    for n in range(3, 10):
        for m in range(2, n):
            lhs = Fraction(2 * m, (n - m) * (m - 1)) >= 1
            if lhs != (n * (m - 1) <= m * m + m) or lhs != cat.rigidity_gate(m, n):
                bad.append(f"rigidity gate equivalence fails at {(m, n)}")
    if not all(cat.rigidity_gate(m, 6) for m in range(2, 6)):
        bad.append("rigidity gate fails for some m <= 5 at n = 6")
    # constants
    if _c2_c3_exact(5, Fraction(1)) != (Fraction(0), Fraction(1)):
        bad.append("C2, C3 at n=5, beta=1 are not (0, 1)")
    if _c2_c3_exact(6, Fraction(1)) != (Fraction(-1, 4), Fraction(3, 2)):
        bad.append("C2, C3 at n=6, beta=1 are not (-1/4, 3/2)")
    for n in range(4, 10):
        lower = 1 - Fraction(1, n - 1)
        for j in range(1, 40):
            beta = lower + Fraction(j, 10)
            c2, c3 = _c2_c3_exact(n, beta)
            if not c3 > 0:
                bad.append(f"C3 <= 0 at n={n}, beta={beta}")
            if (c2 < 0) != (beta < Fraction(n - 1, 4)) or (c2 == 0) != (beta == Fraction(n - 1, 4)):
                bad.append(f"sign of C2 disagrees with the beta threshold at n={n}, beta={beta}")
    if cat.beta_threshold(3) != Fraction(1, 2) or 1 - Fraction(1, 2) != Fraction(1, 2):
        bad.append("n=3 threshold is not 1/2")
    if cat.beta_threshold(5) != 1:
        bad.append("n=5 beta threshold is not 1")
    rig = {f"{m},6": str(Fraction(2 * m, (6 - m) * (m - 1))) for m in range(2, 6)}
    return CheckReport(
        "dim_constants",
        {"max_n": 9},
        {"violated_claims": float(len(bad))},
        {"violated_claims": 0.0},
        {"violations": bad, "table": {f"{m},{n}": lab for (m, n), lab in table.items()}, "rigidity_ratio_n6": rig},
        seed=ctx.seed,
        runtime=time.perf_counter() - t0,
        covers=("gates", "beta_threshold", "rigidity_gate", "cylinder_constants"),
    )


def render_gate_table(max_n: int = 9) -> str:
    """Markdown table of the nonnegativity gate labels, rows m, columns n."""
    table = gate_table(max_n)
    ns = list(range(3, max_n + 1))
    lines = ["| m \\ n | " + " | ".join(str(n) for n in ns) + " |", "|---|" + "---|" * len(ns)]
    for m in range(2, max_n):
        cells = [table.get((m, n), "") for n in ns]
        lines.append(f"| {m} | " + " | ".join(cells) + " |")
    return "\n".join(lines)


@_timed
def check_cot_barrier(params, ctx):
    """Cot profile: pole at 0, zero at the midpoint, admissibility inequality."""
    n = int(params.get("n", 4))
    lam = float(params.get("lam", 1.0))
    C = cat.shape_operator_constant(n)
    domain = math.pi * math.sqrt(8 / (C * lam))
    d = np.linspace(0, domain, 20_003)[1:-1]
    prof = cat.cot_barrier_profile(n, lam, d)
    rhs = C * prof.h**2 + lam / 2
    viol = float(np.max((2 * np.abs(prof.dh) - rhs) / rhs))
    mid = cat.cot_barrier_profile(n, lam, [domain / 2])
    near0 = cat.cot_barrier_profile(n, lam, [domain * 1e-9])
    try:
        cat.cot_barrier_profile(6, lam, [1.0])
        n6_error = 1.0
    except cat.FamilyError:
        n6_error = 0.0
    return CheckReport(
        "cot_barrier",
        {"n": n, "lam": lam},
        {
            "admissibility_violation": max(0.0, viol),
            "midpoint_h": abs(float(mid.h[0])) / math.sqrt(lam / (2 * C)),
            "pole_missing": 0.0 if float(near0.h[0]) > 1e6 else 1.0,
            "n6_not_rejected": n6_error,
        },
        {"admissibility_violation": ctx.tol.identity, "midpoint_h": ctx.tol.identity, "pole_missing": 0.0, "n6_not_rejected": 0.0},
        {
            "C": C,
            "profile_domain": domain,
            "barrier_distance": prof.barrier_distance,
            "admissibility_slack_min": float(np.min((rhs - 2 * np.abs(prof.dh)) / rhs)),
        },
        notes="admissibility holds with equality: 2|h'| = C h^2 + lam/2 identically",
        covers=("cot_barrier",),
    )


# ---------------------------------------------------------------------------
# Torus x sphere family
# ---------------------------------------------------------------------------


def _ts_params(params) -> cat.TorusSphereParams:
    if isinstance(params, cat.TorusSphereParams):
        return params
    return cat.TorusSphereParams(int(params["m"]), int(params["k"]), float(params.get("eps", 0.1)), str(params.get("F", "1")))


def _ts_dict(p: cat.TorusSphereParams) -> dict:
    return {"m": p.m, "k": p.k, "eps": p.eps, "F": p.F}


def _ts_random_points(p, rng, count):
    return np.hstack([rng.uniform(-2.0, 2.0, (count, p.k)), rng.uniform(0.0, 1.0, (count, p.m))])


def _ts_critical(p: cat.TorusSphereParams):
    """Critical points of F lifted to chart points with the sphere at y = 0."""
    crit, hess, free = cat.critical_points(p.F_expr())
    pts = np.hstack([np.zeros((len(crit), p.k)), crit])
    return pts, hess, free


def _ts_grid(p: cat.TorusSphereParams, ctx: Context, extra: bool = True) -> ScanGrid:
    c = ctx.counts()
    axes = (_sphere_axis(c["sphere"]),) * p.k + (_torus_axis(c["torus"]),) * p.m
    extra_pts = tuple(tuple(float(v) for v in q) for q in _ts_critical(p)[0]) if extra else ()
    return ScanGrid(axes, ball=(tuple(range(p.k)),), extra_points=extra_pts)


def _ts_eps_star(p: cat.TorusSphereParams, ctx: Context):
    """Memoized admissible-eps search shared by the checks of one run."""
    key = ("eps_star", p.m, p.k, p.F, ctx.grid, ctx.opts)
    if key not in ctx.memo:
        sym = cat.torus_sphere_symmetric_vars(p, translations=True)
        eps, scan, trace = find_admissible_eps(
            lambda e: cat.build_torus_sphere(p.with_eps(e)), p.m, _ts_grid(p, ctx), ctx.opts, ctx.tol.nonneg_scan, sym, gate=True
        )
        ctx.memo[key] = (eps, scan, trace)
    return ctx.memo[key]


def _frame_components(R_on, k, m):
    """Split the orthonormal tensor (sphere indices first) into closed-form slots."""
    T = range(k, k + m)
    sec_tt = np.array([[R_on[i, j, j, i] for j in T] for i in T])
    np.fill_diagonal(sec_tt, 0.0)
    mixed = np.array([[R_on[i, 0, 0, j] for j in T] for i in T])
    # components with an odd number of sphere slots, and sphere-index
    # structure beyond the round one, vanish
    n = k + m
    is_s = [int(a < k) for a in range(n)]
    zero = 0.0
    for a, b, c, d in itertools.product(range(n), repeat=4):
        ns = is_s[a] + is_s[b] + is_s[c] + is_s[d]
        if ns % 2 == 1:
            zero = max(zero, abs(R_on[a, b, c, d]))
        elif ns == 2 and is_s[b] and is_s[c] and not is_s[a] and not is_s[d] and b != c:
            zero = max(zero, abs(R_on[a, b, c, d]))
    return sec_tt, mixed, zero


@_timed
def check_ts_christoffel(params, ctx):
    """Engine Christoffel symbols against the frame formulas."""
    p = _ts_params(params)
    rng = ctx.rng(201)
    count = int(ctx.option("ts_christoffel", "points", 20))
    pts = _ts_random_points(p, rng, count)
    cb = curvature_batch(cat.build_torus_sphere(p), pts)
    worst = 0.0
    for b in range(count):
        worst = max(worst, _rel(cb.gamma[b], cat.closed_form_christoffel(p, pts[b])))
    return CheckReport(
        "ts_christoffel",
        _ts_dict(p) | {"points": count},
        {"christoffel_rel": worst},
        {"christoffel_rel": ctx.tol.engine_vs_closed_form},
        covers=("christoffel",),
    )


@_timed
def check_ts_curvature(params, ctx):
    """Engine frame curvature against the closed-form component list."""
    p = _ts_params(params)
    rng = ctx.rng(202)
    count = int(ctx.option("ts_curvature", "points", 20))
    pts = _ts_random_points(p, rng, count)
    cb = curvature_batch(cat.build_torus_sphere(p), pts)
    _, R_on, _ = cb.orthonormal()
    worst = {"sec_tt": 0.0, "sec_ts": 0.0, "mixed": 0.0, "sec_ss": 0.0, "vanishing": 0.0}
    for b in range(count):
        cf = cat.closed_form_curvature(p, pts[b])
        scale = float(np.max(np.abs(R_on[b])))
        sec_tt, mixed, zero = _frame_components(R_on[b], p.k, p.m)
        ts = np.array([[R_on[b][p.k + i, a, a, p.k + i] for a in range(p.k)] for i in range(p.m)])
        ss = np.array([R_on[b][a, c, c, a] for a in range(p.k) for c in range(p.k) if a != c])
        worst["sec_tt"] = max(worst["sec_tt"], float(np.max(np.abs(sec_tt - cf["sec_tt"]))) / scale)
        worst["sec_ts"] = max(worst["sec_ts"], float(np.max(np.abs(ts - cf["sec_ts"][:, None]))) / scale)
        worst["mixed"] = max(worst["mixed"], float(np.max(np.abs(mixed - cf["mixed"]))) / scale)
        worst["sec_ss"] = max(worst["sec_ss"], float(np.max(np.abs(ss - cf["sec_ss"]))) / scale)
        worst["vanishing"] = max(worst["vanishing"], zero / scale)
    return CheckReport(
        "ts_curvature",
        _ts_dict(p) | {"points": count},
        worst,
        {k: ctx.tol.engine_vs_closed_form for k in worst},
        covers=("curvature_components",),
    )


@_timed
def check_ts_cm_coordinate(params, ctx):
    """C_m of the torus coordinate frame against its closed form."""
    p = _ts_params(params)
    rng = ctx.rng(203)
    count = int(ctx.option("ts_cm_coordinate", "points", 50))
    pts = _ts_random_points(p, rng, count)
    V = np.zeros((p.m, p.n))
    V[:, p.k :] = np.eye(p.m)
    engine = plane_cm(cat.build_torus_sphere(p), pts, V)
    closed = np.array([cat.closed_form_cm_coordinate(p, q) for q in pts])
    coef = cat.cm_coordinate_coefficient(p.m, p.k)
    # the coefficient from its defining sum, in exact arithmetic
    direct = Fraction(p.k * p.k, 2) * Fraction(p.m - 2, p.m - 1) - p.k
    residuals = {"cm_coordinate_rel": _rel(engine, closed), "coefficient": float(abs(coef - direct))}
    tols = {"cm_coordinate_rel": ctx.tol.engine_vs_closed_form, "coefficient": 0.0}
    if (p.m, p.k) != (3, 5):
        residuals["coefficient_35"] = float(abs(cat.cm_coordinate_coefficient(3, 5) - Fraction(5, 4)))
        tols["coefficient_35"] = 0.0
    return CheckReport(
        "ts_cm_coordinate",
        _ts_dict(p) | {"points": count},
        residuals,
        tols,
        {"coefficient": str(coef)},
        covers=("cm_coordinate",),
    )


@_timed
def check_ts_cross_terms(params, ctx):
    """Projection bounds used in the cross-term estimate, on random frames."""
    p = _ts_params(params)
    rng = ctx.rng(204)
    count = int(ctx.option("ts_cross_terms", "frames", 2000))
    pts = _ts_random_points(p, rng, 10)
    cb = curvature_batch(cat.build_torus_sphere(p), pts)
    _, R_on, _ = cb.orthonormal()
    k, m, n = p.k, p.m, p.n
    viol = {"sum_bound": 0.0, "pair_bound": 0.0, "sphere_sectional_bound": 0.0}
    for b in range(len(pts)):
        F = float(p.F_expr()(pts[b][k:][None])[0])
        top = p.eps**-2 * F**-2
        for _ in range(count // len(pts)):
            Q, _ = np.linalg.qr(rng.standard_normal((n, m)))
            XS = Q[:k].T  # rows: sphere parts of X_l
            s = float(np.sum(XS * XS))
            pair = sum(float(XS[l] @ XS[l]) * float(XS[r] @ XS[r]) - float(XS[l] @ XS[r]) ** 2 for l in range(m) for r in range(l + 1, m))
            ss = 0.0
            for l in range(m):
                for r in range(l + 1, m):
                    a = np.concatenate([XS[l], np.zeros(m)])
                    c = np.concatenate([XS[r], np.zeros(m)])
                    ss += float(np.einsum("abcd,a,b,c,d->", R_on[b], a, c, c, a))
            viol["sum_bound"] = max(viol["sum_bound"], s - k)
            viol["pair_bound"] = max(viol["pair_bound"], pair - 0.5 * k * s)
            viol["sphere_sectional_bound"] = max(viol["sphere_sectional_bound"], (ss - top * pair) / top)
    return CheckReport(
        "ts_cross_terms",
        _ts_dict(p) | {"frames": count},
        {key: max(0.0, v) for key, v in viol.items()},
        {key: ctx.tol.identity for key in viol},
        notes="constants of the cross-term estimate are not explicit; only the bounds on sphere projections are checked",
        covers=("cross_term", "sphere_component_bound"),
    )


@_timed
def check_ts_eps_search(params, ctx):
    """Largest eps in the halving schedule with a nonnegative scan."""
    p = _ts_params(params)
    eps, scan, trace = _ts_eps_star(p, ctx)
    return CheckReport(
        "ts_eps_search",
        _ts_dict(p) | {"grid": ctx.grid, "starts": ctx.opts.starts},
        {"scan_negativity": max(0.0, -scan.global_min)},
        {"scan_negativity": ctx.tol.nonneg_scan},
        {"eps_star": eps, "trace": trace, "reduction": scan.reduction},
        covers=("eps_search",),
    )


@_timed
def check_ts_nonneg_scan(params, ctx):
    """Full scan at eps*, sphere isometries only."""
    p0 = _ts_params(params)
    eps, _, _ = _ts_eps_star(p0, ctx)
    p = p0.with_eps(eps)
    translations = bool(ctx.option("ts_nonneg_scan", "translations", False))
    sym = cat.torus_sphere_symmetric_vars(p, translations=translations)
    scan = scan_min_cm(cat.build_torus_sphere(p), _ts_grid(p, ctx), p.m, ctx.opts, sym, ctx.tol)
    rep = CheckReport(
        "ts_nonneg_scan",
        _ts_dict(p) | {"grid": ctx.grid, "starts": ctx.opts.starts},
        {"scan_negativity": max(0.0, -scan.global_min), "probe_tensor_deviation": float(scan.reduction.get("probe_max_tensor_deviation", 0.0))},
        {"scan_negativity": ctx.tol.nonneg_scan, "probe_tensor_deviation": ctx.tol.tensor_symmetry},
        {"global_min": scan.global_min, "argmin": scan.argmin_point, "argmin_frame": scan.argmin_frame.vectors, "reduction": scan.reduction},
        covers=("nonneg_theorem",),
    )
    rep.scans["ts_nonneg_scan"] = (p.chart_vars, scan)
    return rep


def _sphere_weight(frame_vectors: np.ndarray, g: np.ndarray, k: int) -> float:
    """``sum_l |X_l^S|^2`` of a g-orthonormal chart frame (sphere coordinates first)."""
    gs = g[:k, :k]
    return float(sum(v[:k] @ gs @ v[:k] for v in frame_vectors))


@_timed
def check_ts_large_eps(params, ctx):
    """At eps = 10 the minimum goes negative along planes tilted into the sphere."""
    p = _ts_params(params).with_eps(float(ctx.option("ts_large_eps", "eps", 10.0)))
    M = cat.build_torus_sphere(p)
    rng = ctx.rng(205)
    pts = np.vstack([_ts_critical(p)[0], _ts_random_points(p, rng, 16)])
    best = None
    for i, q in enumerate(pts):
        r = min_cm_at(M, q, p.m, ctx.opts, index=i)
        if best is None or r.value < best[0].value:
            best = (r, q)
    r, q = best
    weight = _sphere_weight(r.frame.vectors, curvature_at(M, q).g, p.k)
    return CheckReport(
        "ts_large_eps",
        _ts_dict(p),
        # expected failure: residuals measure the absence of the witness
        {"min_not_negative": max(0.0, r.value + ctx.tol.scan), "witness_in_torus": max(0.0, 1e-3 - weight)},
        {"min_not_negative": 0.0, "witness_in_torus": 0.0},
        {"min": r.value, "point": q, "frame": r.frame.vectors, "sphere_weight": weight},
        notes="passes when a negative minimum with a sphere-tilted witness plane is found",
        covers=("eps_search",),
    )


@_timed
def check_ts_optimizer(params, ctx):
    """Reseeding, first-order optimality and random-frame domination at eps*."""
    p0 = _ts_params(params)
    eps, _, _ = _ts_eps_star(p0, ctx)
    p = p0.with_eps(eps)
    M = cat.build_torus_sphere(p)
    rng = ctx.rng(206)
    pts = _ts_random_points(p, rng, int(ctx.option("ts_optimizer", "points", 6)))
    cb = curvature_batch(M, pts)
    _, R_on, ric_on = cb.orthonormal()
    Rm = _rmat(R_on)
    reseed = grad = dom = 0.0
    for i, q in enumerate(pts):
        a = min_cm_at(M, q, p.m, ctx.opts, index=i)
        b = min_cm_at(M, q, p.m, replace(ctx.opts, seed=ctx.opts.seed + 1), index=i)
        reseed = max(reseed, abs(a.value - b.value))
        gvec = grassmann_gradient(R_on[i], ric_on[i], a.W_on)
        grad = max(grad, float(np.linalg.norm(gvec)) / (1e-4 * (1 + abs(a.value))))
        Ws = np.linalg.qr(rng.standard_normal((100, p.n, p.m)))[0]
        vals = cm_from_projector(Rm[i : i + 1], ric_on[i : i + 1], Ws[None])[0]
        dom = max(dom, a.value - float(vals.min()))
    return CheckReport(
        "ts_optimizer",
        _ts_dict(p) | {"starts": ctx.opts.starts},
        {"reseed_spread": reseed, "gradient_ratio": grad, "random_frame_violation": max(0.0, dom)},
        {"reseed_spread": ctx.tol.scan, "gradient_ratio": 1.0, "random_frame_violation": 0.0},
        covers=("optimizer",),
    )


@_timed
def check_ts_fiber_minimizer(params, ctx):
    """Away from the critical set the fiber minimizer is the torus plane."""
    p0 = _ts_params(params)
    eps, _, _ = _ts_eps_star(p0, ctx)
    p = p0.with_eps(eps)
    M = cat.build_torus_sphere(p)
    rng = ctx.rng(207)
    F = p.F_expr()
    x = rng.uniform(0, 1, (200, p.m))
    dF = np.linalg.norm(np.asarray(F.jet(x).grad), axis=-1)
    q = np.concatenate([rng.uniform(-1, 1, p.k), x[int(np.argmax(dF))]])
    r = min_cm_at(M, q, p.m, ctx.opts)
    P = r.W_on @ r.W_on.T
    E = r.E
    T = np.linalg.inv(E)[:, p.k :]
    T, _ = np.linalg.qr(T)
    dist = float(np.linalg.norm(P - T @ T.T))
    samples = int(ctx.option("ts_fiber_minimizer", "samples", 10_000))
    cb = curvature_batch(M, q[None])
    _, R_on, ric_on = cb.orthonormal()
    Ws = np.linalg.qr(rng.standard_normal((samples, p.n, p.m)))[0]
    brute = cm_from_projector(_rmat(R_on), ric_on, Ws[None])[0]
    torus_val = float(plane_cm(M, q, np.eye(p.n)[p.k :])[0])
    return CheckReport(
        "ts_fiber_minimizer",
        _ts_dict(p) | {"samples": samples},
        {
            "plane_distance": dist,
            "brute_below_optimum": max(0.0, r.value - float(brute.min())),
            "optimum_vs_torus_plane": abs(r.value - torus_val) / (1 + abs(torus_val)),
        },
        {"plane_distance": 1e-3, "brute_below_optimum": 0.0, "optimum_vs_torus_plane": ctx.tol.scan},
        {"point": q, "|dF|": float(dF.max()), "value": r.value, "brute_min": float(brute.min())},
        covers=("fiber_minimum",),
    )


def _default_psi(F: str) -> Optional[str]:
    """A psi vanishing to second order at every critical point of the two
    standard warp shapes (it is a multiple of -|dF|^2)."""
    import re

    num = r"[0-9.eE+-]+"
    if re.fullmatch(rf"\s*{num}\s*\+\s*{num}\s*\*\s*sin\(2\*pi\*x1\)\*cos\(2\*pi\*x2\)\s*", F):
        return "-((cos(2*pi*x1)*cos(2*pi*x2))^2+(sin(2*pi*x1)*sin(2*pi*x2))^2)"
    if re.fullmatch(rf"\s*{num}\s*\+\s*{num}\s*\*\s*sin\(2\*pi\*x1\)\s*", F):
        return "-(1+cos(4*pi*x1))"
    return None


def _ts_psi(p: cat.TorusSphereParams, ctx: Context, check_id: str):
    src = ctx.option(check_id, "psi", None) or _default_psi(p.F)
    if src is None:
        raise PreconditionError(f"{check_id} needs a 'psi' option for F = {p.F!r}")
    return parse(src, p.torus_vars)


@_timed
def check_ts_hessian(params, ctx):
    """Block structure of the Hessian of C_m on the Grassmannian bundle."""
    p0 = _ts_params(params)
    F_src = ctx.option("ts_hessian", "F", p0.F)
    p0 = cat.TorusSphereParams(p0.m, p0.k, p0.eps, F_src)
    eps_list = [float(e) for e in ctx.option("ts_hessian", "eps", (0.1, 0.05, 0.025))]
    max_points = int(ctx.option("ts_hessian", "points", 2))
    crit, _, _ = _ts_critical(p0)
    pick = np.unique(np.linspace(0, len(crit) - 1, min(max_points, len(crit))).round().astype(int))
    plane = list(range(p0.k, p0.n))
    coef = float(cat.cm_coordinate_coefficient(p0.m, p0.k))
    cross = xrel = 0.0
    scaled = []
    for eps in eps_list:
        p = p0.with_eps(eps)
        M = cat.build_torus_sphere(p)
        F = p.F_expr()
        for j in pick:
            q = crit[j]
            H = grass_hessian_cm(M, q, p.m, plane, F=F, tol=ctx.tol)
            diag = float(np.max(np.abs(np.diag(H.matrix))))
            for a, b in (("y", "x"), ("y", "z"), ("x", "z")):
                blk = H.block(a, b)
                if blk.size:
                    cross = max(cross, float(np.max(np.abs(blk))) / diag)
            J = F.jet(q[p.k :])
            Fv, Hs = float(J.value), np.asarray(J.hess)
            target = 2 * coef * Fv ** (p.s - 2) * (Hs @ Hs)
            xrel = max(xrel, _rel(H.block("x"), target))
            lam = float(np.linalg.eigvalsh(H.block("z"))[0])
            scaled.append((eps, q[p.k :].tolist(), lam, eps * eps * lam))
    c_fit = min(s[3] for s in scaled)
    return CheckReport(
        "ts_hessian",
        _ts_dict(p0) | {"eps_list": eps_list},
        {"cross_blocks": cross, "x_block_rel": xrel, "z_block_scaling": 0.0 if c_fit > 0 else 1.0 + abs(c_fit)},
        {"cross_blocks": ctx.tol.hessian_cross, "x_block_rel": ctx.tol.hessian_xblock, "z_block_scaling": 0.0},
        {"c": c_fit, "z_min_eigs": scaled},
        covers=("hessian_blocks",),
    )


@_timed
def check_ts_metric_variation(params, ctx):
    """t-derivative of C_m under (1 + t psi) g at zero-set points."""
    p = _ts_params(params)
    psi = _ts_psi(p, ctx, "ts_metric_variation")
    M = cat.build_torus_sphere(p)
    crit, _, _ = _ts_critical(p)
    rng = ctx.rng(208)
    plane = list(range(p.k, p.n))
    tv = plane
    rel = cons = 0.0
    positivity = 0.0
    values = []
    for q in crit:
        for _ in range(2):
            pt = q.copy()
            pt[: p.k] = rng.uniform(-1.5, 1.5, p.k)
            val, fds = metric_variation_derivative(M, psi, pt, plane, tv, tol=ctx.tol)
            formula = variation_trace_formula(M, psi, pt, tv)
            rel = max(rel, abs(val - formula) / abs(formula))
            cons = max(cons, abs(fds[0] - fds[1]) / abs(fds[0]))
            if not val > 0:
                positivity = max(positivity, 1.0 + abs(val))
            values.append(val)
    zero, _ = metric_variation_derivative(M, parse("0", p.torus_vars), crit[0], plane, tv, tol=ctx.tol)
    return CheckReport(
        "ts_metric_variation",
        _ts_dict(p) | {"psi": str(psi), "samples": len(values)},
        {"formula_rel": rel, "step_consistency": cons, "not_positive": positivity, "zero_psi": abs(zero)},
        {"formula_rel": ctx.tol.metric_variation, "step_consistency": ctx.tol.metric_variation, "not_positive": 0.0, "zero_psi": 0.0},
        {"min_value": min(values), "max_value": max(values)},
        covers=("metric_variation",),
    )


@_timed
def check_ts_perturbation(params, ctx):
    """A conformal perturbation makes C_m strictly positive (strict gate)."""
    p0 = _ts_params(params)
    eps, _, _ = _ts_eps_star(p0, ctx)
    p = p0.with_eps(eps)
    psi = _ts_psi(p, ctx, "ts_perturbation")
    crit, _, free = cat.critical_points(p.F_expr())
    dirs = [i for i in range(p.m) if i not in free]
    tv = list(range(p.k, p.n))
    M0 = cat.build_torus_sphere(p)

    def build(factor):
        return M0 if factor is None else M0.conformal(factor)

    # psi depends only on the variables F uses, so unused torus directions
    # stay isometries of the perturbed metric
    used = set(p.F_expr().free_variables()) | set(psi.free_variables())
    sym = list(range(p.k)) + [p.k + i for i, x in enumerate(p.torus_vars) if x not in used]
    rep = perturbed_positivity_check(
        build, _ts_grid(p, ctx), p.m, p.n, psi, tv, crit, dirs, opts=ctx.opts, symmetric_vars=sym, tol=ctx.tol, params=_ts_dict(p)
    )
    rep.check_id = "ts_perturbation"
    return rep


# ---------------------------------------------------------------------------
# Warped cylinders
# ---------------------------------------------------------------------------


def _cyl_params(params) -> cat.WarpedCylinderParams:
    if isinstance(params, cat.WarpedCylinderParams):
        return params
    n = int(params["n"])
    branch = str(params.get("branch", "C2_zero"))
    beta = params.get("beta")
    if beta is None:
        beta = (n - 1) / 4 if branch == "C2_zero" else 1.0
    return cat.WarpedCylinderParams(n, float(beta), float(params.get("lam", 1.0)), float(params.get("eps", 1e-3)), branch)


def _cyl_dict(p: cat.WarpedCylinderParams) -> dict:
    return {"n": p.n, "beta": p.beta, "lam": p.lam, "eps": p.eps, "branch": p.branch}


def _radial(expr, r):
    """``(value, first, second)`` derivatives of a profile on an r array."""
    J = expr.jet(np.asarray(r, dtype=float)[:, None])
    return np.asarray(J.value), np.asarray(J.grad)[:, 0], np.asarray(J.hess)[:, 0, 0]


def _normalized(*terms) -> np.ndarray:
    """``|sum terms| / sum |terms|``, the scale-free residual of a balance."""
    terms = [np.asarray(t, dtype=float) for t in terms]
    den = sum(np.abs(t) for t in terms)
    return np.abs(sum(terms)) / np.where(den > 0, den, 1.0)


def _r_grid(ctx: Context, lo: float, hi: float) -> np.ndarray:
    return np.linspace(lo, hi, ctx.counts()["r"])


def cylinder_ode_residuals(p: cat.WarpedCylinderParams, r) -> dict:
    """Scale-normalized residuals of every equation the profiles must solve."""
    prof = cat.cylinder_profiles(p)
    n, beta, lam = p.n, p.beta, p.lam
    h, dh, _ = _radial(prof.h, r)
    u, du, ddu = _radial(prof.u, r)
    f, df, ddf = _radial(prof.f, r)
    v, dv, ddv = _radial(prof.v, r)
    lf, lv, lu = df / f, dv / v, du / u
    out = {
        # every constant-r slice is a mu-bubble
        "mean_curvature": _normalized((n - 1) * lf, -h, lv),
        # u solves Delta u = beta Ric(dr, dr) u - lam u
        "u_equation": _normalized(ddu / u, (n - 1) * lf * lu, beta * (n - 1) * ddf / f, lam + 0 * r),
        "v_equation": _normalized(ddv / v, (n - 1) * lf * lv, (n - 1) * ddf / f, lam / beta + 0 * r, -(1 - beta) * lv**2),
        "v_is_u_power": np.abs(np.log(v) - np.log(u) / beta) / (1 + np.abs(np.log(v))),
    }
    if p.branch == "n3_special":
        out["n3_balance"] = _normalized((0.5 - beta) * lv**2, -0.5 * h**2, -lam / beta + 0 * r, np.abs(dh))
    else:
        c2, c3 = p.constants
        out["riccati"] = _normalized(dh, c2 * h**2, lam / beta + 0 * r)
        out["v_first_order"] = _normalized(lv, c3 * h)
    return {k: float(np.max(val)) for k, val in out.items()}


@_timed
def check_cyl_ode(params, ctx):
    """Closed-form branch profiles against their defining equations."""
    p = _cyl_params(params)
    lo, hi = ctx.option("cyl_ode", "r_range", (-10.0, 10.0))
    r = np.linspace(lo, hi, max(ctx.counts()["r"], 201))
    res = cylinder_ode_residuals(p, r)
    tols = {k: ctx.tol.ode_residual for k in res}
    prof = cat.cylinder_profiles(p)
    f, df, _ = _radial(prof.f, r)
    far = np.abs(r) >= 1.0
    res["f_not_decaying"] = float(np.max(np.maximum(0.0, np.sign(r[far]) * df[far] / f[far])))
    tols["f_not_decaying"] = 0.0
    wit = {"profiles": prof.sources()}
    if p.branch != "n3_special":
        c2, c3 = p.constants
        res["c3_not_positive"] = max(0.0, -c3) + (1.0 if c3 == 0 else 0.0)
        tols["c3_not_positive"] = 0.0
        wit.update({"C2": c2, "C3": c3})
    if p.branch == "C2_negative":
        # the coth form fails the Riccati equation (sign) and v' = -C3 h v
        rr = r[np.abs(r) > 0.1]
        hc, dhc, _ = _radial(cat.coth_candidate_h(p), rr)
        v, dv, _ = _radial(prof.v, rr)
        c2, c3 = p.constants
        wit["coth_riccati"] = float(np.max(_normalized(dhc, c2 * hc**2, p.lam / p.beta + 0 * rr)))
        wit["coth_v_first_order"] = float(np.max(_normalized(dv / v, c3 * hc)))
    return CheckReport("cyl_ode", _cyl_dict(p) | {"r_range": [lo, hi]}, res, tols, wit, covers=("ode_branches", "cylinder_constants"))


@_timed
def check_cyl_beta_monotonicity(params, ctx):
    """u^(b'/b) is a supersolution for every smaller b' (radial operator)."""
    p = _cyl_params(params)
    prof = cat.cylinder_profiles(p)
    n, beta, lam = p.n, p.beta, p.lam
    r = np.linspace(-6, 6, 241)
    u, du, ddu = _radial(prof.u, r)
    f, df, ddf = _radial(prof.f, r)
    ric_rr = -(n - 1) * ddf / f
    worst = 0.0
    betas = [beta * j / 8 for j in range(1, 8)]
    for b2 in betas:
        g = b2 / beta
        # w = u^g, divided through by w
        lw, llw = g * du / u, g * ddu / u + g * (g - 1) * (du / u) ** 2
        lhs = llw + (n - 1) * (df / f) * lw - b2 * ric_rr + lam * g
        scale = np.abs(llw) + np.abs((n - 1) * (df / f) * lw) + np.abs(b2 * ric_rr) + lam * g
        worst = max(worst, float(np.max(lhs / scale)))
    return CheckReport(
        "cyl_beta_monotonicity",
        _cyl_dict(p) | {"betas": betas},
        {"supersolution_violation": max(0.0, worst)},
        {"supersolution_violation": ctx.tol.identity},
        covers=("beta_monotonicity",),
    )


@_timed
def check_cyl_curvature(params, ctx):
    """Engine Ricci of dr^2 + eps^2 f^2 gbar against the warped-product formulas."""
    p = _cyl_params(params)
    n = p.n
    M = cat.build_warped_cylinder(p)
    rng = ctx.rng(301)
    r = _r_grid(ctx, -6.0, 6.0)
    pts = np.hstack([r[:, None], rng.uniform(-1.5, 1.5, (len(r), n - 1))])
    cb = curvature_batch(M, pts)
    f, df, ddf = _radial(cat.cylinder_profiles(p).f, r)
    err_rr = err_ee = 0.0
    for b in range(len(r)):
        cp = cb.at(b)
        e = np.zeros(n)
        e[1] = 1 / math.sqrt(cp.g[1, 1])
        rr = -(n - 1) * ddf[b] / f[b]
        ee = (n - 2) * p.eps**-2 / f[b] ** 2 - ((n - 2) * df[b] ** 2 + f[b] * ddf[b]) / f[b] ** 2
        err_rr = max(err_rr, abs(cp.ricci[0, 0] - rr) / max(1.0, abs(rr)))
        err_ee = max(err_ee, abs(cp.ric(e, e) - ee) / max(1.0, abs(ee)))
    # f = 1: product cylinder
    P = cat.build_warped_cylinder(p, f="1")
    cp = curvature_at(P, pts[0])
    e = np.zeros(n)
    e[1] = 1 / math.sqrt(cp.g[1, 1])
    prod = max(abs(cp.ricci[0, 0]), abs(cp.ric(e, e) - (n - 2) * p.eps**-2) * p.eps**2)
    return CheckReport(
        "cyl_curvature",
        _cyl_dict(p),
        {"ric_rr_rel": err_rr, "ric_sphere_rel": err_ee, "product": prod},
        {"ric_rr_rel": ctx.tol.identity, "ric_sphere_rel": ctx.tol.identity, "product": ctx.tol.identity},
        covers=("cylinder_curvature",),
    )


def _r0_profile(M, p, r):
    """Alignment ``|<dir, d_r>|``, value error and eigenvectors along an r grid."""
    n = p.n
    pts = np.hstack([np.asarray(r, dtype=float)[:, None], np.full((len(r), n - 1), 0.3)])
    cb = curvature_batch(M, pts)
    f, _, ddf = _radial(cat.cylinder_profiles(p).f, r)
    align, err, vecs = [], [], []
    for b in range(len(r)):
        val, e = r0_at(cb.at(b))
        target = -(n - 1) * ddf[b] / f[b]
        align.append(abs(e[0]))
        err.append(abs(val - target) / max(1.0, abs(target)))
        vecs.append(e)
    return np.array(align), np.array(err), np.array(vecs)


def _r0_ok(M, p, r, tol) -> bool:
    align, err, _ = _r0_profile(M, p, r)
    return bool(np.all(align >= 1 - tol.r0_alignment) and np.all(err <= tol.engine_vs_closed_form))


def check_r0_direction(family, params, r_grid=None, ctx: Optional[Context] = None) -> CheckReport:
    """R_0 is attained along d_r on the counterexample cylinders at small eps."""
    ctx = ctx or Context()
    t0 = time.perf_counter()
    if family != "warped_cylinder":
        raise PreconditionError(f"R0 direction check is defined for warped_cylinder, not {family!r}")
    p = _cyl_params(params)
    r = np.asarray(r_grid if r_grid is not None else _r_grid(ctx, -6.0, 6.0), dtype=float)
    M = cat.build_warped_cylinder(p)
    align, err, vecs = _r0_profile(M, p, r)
    worst = int(np.argmin(align))
    # largest eps in 10 * 2^-j for which the direction holds on the grid
    eps_max = None
    for j in range(40):
        e = 10.0 * 2.0**-j
        q = replace(p, eps=e)
        if _r0_ok(cat.build_warped_cylinder(q), q, r, ctx.tol):
            eps_max = e
            break
    # product cylinder: R0 = Ric(dr, dr) = 0 while the sphere directions carry (n-2) eps^-2
    prod_eps = math.sqrt(p.n - 2)
    P = cat.build_warped_cylinder(replace(p, eps=prod_eps), f="1")
    cp = curvature_at(P, np.concatenate([[0.0], np.full(p.n - 1, 0.3)]))
    pval, pdir = r0_at(cp)
    return CheckReport(
        "r0_direction",
        _cyl_dict(p) | {"r_min": float(r.min()), "r_max": float(r.max()), "samples": len(r)},
        {
            "alignment_deficit": float(np.max(1 - align)),
            "value_rel": float(np.max(err)),
            "product_value": abs(pval),
            "product_alignment_deficit": 1 - abs(pdir[0]),
        },
        {
            "alignment_deficit": ctx.tol.r0_alignment,
            "value_rel": ctx.tol.engine_vs_closed_form,
            "product_value": ctx.tol.identity,
            "product_alignment_deficit": ctx.tol.r0_alignment,
        },
        {"worst_r": float(r[worst]), "worst_direction": vecs[worst], "eps_max": eps_max},
        seed=ctx.seed,
        runtime=time.perf_counter() - t0,
        covers=("r0_definition", "r0_direction"),
    )


@_timed
def check_r0_failure_witness(params, ctx):
    """At eps = 10 the sphere term no longer dominates and R_0 leaves d_r."""
    p = replace(_cyl_params(params), eps=float(ctx.option("r0_failure_witness", "eps", 10.0)))
    M = cat.build_warped_cylinder(p)
    align, err, vecs = _r0_profile(M, p, np.array([0.0]))
    e = vecs[0]
    cp = curvature_at(M, np.concatenate([[0.0], np.full(p.n - 1, 0.3)]))
    sphere_weight = float(e[1:] @ cp.g[1:, 1:] @ e[1:])
    failed = align[0] < 1 - ctx.tol.r0_alignment
    return CheckReport(
        "r0_failure_witness",
        _cyl_dict(p),
        {"no_failure_at_r0": 0.0 if failed else 1.0, "witness_not_spherical": max(0.0, 0.5 - sphere_weight)},
        {"no_failure_at_r0": 0.0, "witness_not_spherical": 0.0},
        {"r": 0.0, "direction": e, "alignment": float(align[0]), "sphere_weight": sphere_weight},
        notes="expected failure of the R0 direction; passes when the witness is found",
        covers=("r0_direction",),
    )


def check_mu_bubble_slice_identity(p, r_grid=None, ctx: Optional[Context] = None) -> CheckReport:
    """Slice mean curvature equals h - v'/v; Gauss equation on the slices."""
    ctx = ctx or Context()
    t0 = time.perf_counter()
    p = _cyl_params(p)
    r = np.asarray(r_grid if r_grid is not None else _r_grid(ctx, -6.0, 6.0), dtype=float)
    n = p.n
    M = cat.build_warped_cylinder(p)
    prof = cat.cylinder_profiles(p)
    h, _, _ = _radial(prof.h, r)
    v, dv, _ = _radial(prof.v, r)
    target = h - dv / v
    y = np.full(n - 1, 0.3)
    Hs = np.array([slice_geometry(M, np.concatenate([[ri], y]), 0).H for ri in r])
    ident = float(np.max(np.abs(Hs - target) / np.maximum(1.0, np.abs(target))))
    gauss = 0.0
    for ri in r[:: max(1, len(r) // 8)]:
        pt = np.concatenate([[ri], y])
        cp = curvature_at(M, pt)
        e = np.zeros(n)
        e[1] = 1 / math.sqrt(cp.g[1, 1])
        gauss = max(gauss, gauss_residual(M, pt, 0, e) / (1.0 + abs(cp.ric(e, e))))
    H0 = slice_geometry(M, np.concatenate([[0.0], y]), 0).H
    P = cat.build_warped_cylinder(p, f="1")
    Hprod = max(abs(slice_geometry(P, np.concatenate([[ri], y]), 0).H) for ri in r[::5])
    return CheckReport(
        "mu_bubble_slice",
        _cyl_dict(p) | {"samples": len(r)},
        {"slice_identity": ident, "gauss_rel": gauss, "minimal_slice_r0": abs(H0), "product_H": Hprod},
        {"slice_identity": ctx.tol.identity, "gauss_rel": ctx.tol.gauss, "minimal_slice_r0": ctx.tol.identity, "product_H": ctx.tol.identity},
        seed=ctx.seed,
        runtime=time.perf_counter() - t0,
        covers=("mu_bubble_variation", "gauss_lemma"),
    )


# ---------------------------------------------------------------------------
# Bi-Ricci plane family
# ---------------------------------------------------------------------------


def _br_params(params) -> cat.BiRicciPlaneParams:
    if isinstance(params, cat.BiRicciPlaneParams):
        return params
    return cat.BiRicciPlaneParams(
        int(params.get("sphere_dim", 5)), float(params.get("lam", 1.0)), float(params.get("eps", 1e-2)), params.get("branch")
    )


def _br_dict(p: cat.BiRicciPlaneParams) -> dict:
    return {"sphere_dim": p.sphere_dim, "lam": p.lam, "eps": p.eps, "branch": p.cylinder().branch}


def _br_points(p, r, rng):
    return np.hstack([np.zeros((len(r), 1)), np.asarray(r)[:, None], rng.uniform(-1.5, 1.5, (len(r), p.sphere_dim))])


@_timed
def check_br_curvature(params, ctx):
    """Frame curvature of u^2 dt^2 + dr^2 + eps^2 f^2 gbar against the list."""
    p = _br_params(params)
    k = p.sphere_dim
    prof = cat.biricci_profiles(p)
    r = _r_grid(ctx, -6.0, 6.0)
    pts = _br_points(p, r, ctx.rng(401))
    cb = curvature_batch(cat.build_biricci_plane(p), pts)
    _, R_on, _ = cb.orthonormal()
    u, du, ddu = _radial(prof.u, r)
    f, df, ddf = _radial(prof.f, r)
    comp = 0.0
    cross = 0.0
    for b in range(len(r)):
        R = R_on[b]
        expect = {
            (0, 1): -ddu[b] / u[b],
            (1, 2): -ddf[b] / f[b],
            (0, 2): -df[b] * du[b] / (f[b] * u[b]),
            (2, 3): p.eps**-2 / f[b] ** 2 - df[b] ** 2 / f[b] ** 2,
        }
        for (a, c), val in expect.items():
            comp = max(comp, abs(R[a, c, c, a] - val) / max(1.0, abs(val)))
        scale = float(np.max(np.abs(R)))
        n = k + 2
        for a, bb, c, d in itertools.product(range(n), repeat=4):
            if not ((a == d and bb == c) or (a == c and bb == d)):
                cross = max(cross, abs(R[a, bb, c, d]) / scale)
    return CheckReport(
        "br_curvature",
        _br_dict(p),
        {"components_rel": comp, "cross_terms": cross},
        {"components_rel": ctx.tol.identity, "cross_terms": ctx.tol.identity},
        covers=("biricci_metric",),
    )


@_timed
def check_br_identity(params, ctx):
    """C_2(d_r, u^-1 d_t) = lambda at every r sample; u >= 1."""
    p = _br_params(params)
    k = p.sphere_dim
    prof = cat.biricci_profiles(p)
    r = _r_grid(ctx, -6.0, 6.0)
    pts = _br_points(p, r, ctx.rng(402))
    V = np.zeros((2, k + 2))
    V[0, 1] = 1.0
    V[1, 0] = 1.0
    engine = plane_cm(cat.build_biricci_plane(p), pts, V)
    u, du, ddu = _radial(prof.u, r)
    f, df, ddf = _radial(prof.f, r)
    closed = -ddu / u - k * ddf / f - k * du * df / (u * f)
    rr = np.linspace(-10, 10, 401)
    return CheckReport(
        "br_identity",
        _br_dict(p) | {"samples": len(r)},
        {
            "engine_minus_lambda": float(np.max(np.abs(engine - p.lam))),
            "closed_minus_lambda": float(np.max(np.abs(closed - p.lam))),
            "u_below_one": max(0.0, 1.0 - float(np.min(prof.u(rr[:, None])))),
        },
        {"engine_minus_lambda": ctx.tol.identity, "closed_minus_lambda": ctx.tol.identity, "u_below_one": 0.0},
        covers=("biricci_metric",),
    )


def _br_grid(p, ctx, t_value: float = 0.0) -> ScanGrid:
    c = ctx.counts()
    axes = ((t_value,), tuple(float(x) for x in _r_grid(ctx, -6.0, 6.0))) + (_sphere_axis(c["sphere"]),) * p.sphere_dim
    return ScanGrid(axes, ball=(tuple(range(2, 2 + p.sphere_dim)),))


def check_biricci_scan(p, grid=None, ctx: Optional[Context] = None) -> CheckReport:
    """m = 2 scan at the admissible eps: global minimum at least lambda."""
    ctx = ctx or Context()
    t0 = time.perf_counter()
    p = _br_params(p)
    grid = grid or _br_grid(p, ctx)
    sym = [0] + list(range(2, 2 + p.sphere_dim))
    eps, scan, trace = find_admissible_eps(
        lambda e: cat.build_biricci_plane(replace(p, eps=e)), 2, grid, ctx.opts, ctx.tol.scan, sym, level=p.lam
    )
    q = replace(p, eps=eps)
    M = cat.build_biricci_plane(q)
    rng = ctx.rng(403)
    shift = 0.0
    for i in range(4):
        base = np.concatenate([[0.0, rng.uniform(-6, 6)], rng.uniform(-1, 1, p.sphere_dim)])
        moved = base.copy()
        moved[0] = 7.0
        shift = max(shift, abs(min_cm_at(M, base, 2, ctx.opts, index=i).value - min_cm_at(M, moved, 2, ctx.opts, index=i).value))
    rep = CheckReport(
        "br_scan",
        _br_dict(q) | {"grid": ctx.grid, "starts": ctx.opts.starts},
        {
            "below_lambda": max(0.0, p.lam - scan.global_min),
            "t_translation": shift,
            "probe_tensor_deviation": float(scan.reduction.get("probe_max_tensor_deviation", 0.0)),
        },
        {"below_lambda": ctx.tol.scan, "t_translation": 1e-10, "probe_tensor_deviation": ctx.tol.tensor_symmetry},
        {"eps_star": eps, "trace": trace, "global_min": scan.global_min, "argmin": scan.argmin_point, "reduction": scan.reduction},
        seed=ctx.seed,
        runtime=time.perf_counter() - t0,
        covers=("biricci_scan",),
    )
    rep.scans["br_scan"] = (list(M.chart.var_names), scan)
    return rep


# ---------------------------------------------------------------------------
# Registry and orchestration
# ---------------------------------------------------------------------------


class ConfigError(ValueError):
    """Unknown family or check, or parameters that do not describe a family member."""


@dataclass(frozen=True)
class CheckSpec:
    fn: Callable
    covers: tuple


def _algebra_shape(params, ctx):
    ns = params.get("shape_ns", (3, 4, 5, 6, 7))
    return [check_shape_operator_bound(int(n), ctx) for n in ns]


def _algebra_dims(params, ctx):
    return check_dim_constants(ctx)


def _cyl_r0(params, ctx):
    return check_r0_direction("warped_cylinder", params, ctx=ctx)


def _cyl_slice(params, ctx):
    return check_mu_bubble_slice_identity(params, ctx=ctx)


def _br_scan(params, ctx):
    return check_biricci_scan(params, ctx=ctx)


def _validate_ts(params):
    p = _ts_params(params)
    p.validate()
    if not cat.nonneg_gate(p.m, p.n):
        raise ConfigError(f"torus_sphere (m, k) = ({p.m}, {p.k}) violates the gate n(m-2) >= m^2-2")


def _validate_cyl(params):
    _cyl_params(params).validate()


def _validate_br(params):
    p = _br_params(params)
    p.cylinder().validate()


def _validate_none(params):
    return None


def _validate_algebra(params):
    for n in params.get("shape_ns", (3, 4, 5, 6, 7)):
        if not 3 <= int(n) <= 7:
            raise ConfigError("shape_ns entries must satisfy 3 <= n <= 7")


# checks are listed in dependency order: engine tests, closed forms, ODEs,
# R0 directions, scans, Hessian and perturbation checks
FAMILIES: dict = {
    "engine": {
        "validate": _validate_none,
        "checks": {
            "engine_sphere": CheckSpec(check_engine_sphere, ("cm_definition",)),
            "engine_invariants": CheckSpec(check_engine_invariants, ("cm_definition", "span_invariance", "r0_definition")),
            "engine_slices": CheckSpec(check_engine_slices, ("gauss_lemma",)),
        },
    },
    "algebra": {
        "validate": _validate_algebra,
        "checks": {
            "shape_operator": CheckSpec(_algebra_shape, ("shape_operator",)),
            "dim_constants": CheckSpec(_algebra_dims, ("gates", "beta_threshold", "rigidity_gate", "cylinder_constants")),
            "cot_barrier": CheckSpec(check_cot_barrier, ("cot_barrier",)),
        },
    },
    "torus_sphere": {
        "validate": _validate_ts,
        "checks": {
            "ts_christoffel": CheckSpec(check_ts_christoffel, ("christoffel",)),
            "ts_curvature": CheckSpec(check_ts_curvature, ("curvature_components",)),
            "ts_cm_coordinate": CheckSpec(check_ts_cm_coordinate, ("cm_coordinate",)),
            "ts_cross_terms": CheckSpec(check_ts_cross_terms, ("cross_term", "sphere_component_bound")),
            "ts_eps_search": CheckSpec(check_ts_eps_search, ("eps_search",)),
            "ts_nonneg_scan": CheckSpec(check_ts_nonneg_scan, ("nonneg_theorem",)),
            "ts_large_eps": CheckSpec(check_ts_large_eps, ("eps_search",)),
            "ts_optimizer": CheckSpec(check_ts_optimizer, ("optimizer",)),
            "ts_fiber_minimizer": CheckSpec(check_ts_fiber_minimizer, ("fiber_minimum",)),
            "ts_hessian": CheckSpec(check_ts_hessian, ("hessian_blocks",)),
            "ts_metric_variation": CheckSpec(check_ts_metric_variation, ("metric_variation",)),
            "ts_perturbation": CheckSpec(check_ts_perturbation, ("perturbation",)),
        },
    },
    "warped_cylinder": {
        "validate": _validate_cyl,
        "checks": {
            "cyl_curvature": CheckSpec(check_cyl_curvature, ("cylinder_curvature",)),
            "cyl_ode": CheckSpec(check_cyl_ode, ("ode_branches", "cylinder_constants")),
            "cyl_beta_monotonicity": CheckSpec(check_cyl_beta_monotonicity, ("beta_monotonicity",)),
            "mu_bubble_slice": CheckSpec(_cyl_slice, ("mu_bubble_variation", "gauss_lemma")),
            "r0_direction": CheckSpec(_cyl_r0, ("r0_definition", "r0_direction")),
            "r0_failure_witness": CheckSpec(check_r0_failure_witness, ("r0_direction",)),
        },
    },
    "biricci_plane": {
        "validate": _validate_br,
        "checks": {
            "br_curvature": CheckSpec(check_br_curvature, ("biricci_metric",)),
            "br_identity": CheckSpec(check_br_identity, ("biricci_metric",)),
            "br_scan": CheckSpec(_br_scan, ("biricci_scan",)),
        },
    },
}

# in-scope items of the source and the checks that exercise them
COVERAGE: dict = {
    "cm_definition": ("engine_sphere", "engine_invariants"),
    "span_invariance": ("engine_invariants",),
    "r0_definition": ("engine_invariants", "r0_direction"),
    "gauss_lemma": ("engine_slices", "mu_bubble_slice"),
    "christoffel": ("ts_christoffel",),
    "curvature_components": ("ts_curvature",),
    "cm_coordinate": ("ts_cm_coordinate",),
    "cross_term": ("ts_cross_terms",),
    "sphere_component_bound": ("ts_cross_terms",),
    "nonneg_theorem": ("ts_nonneg_scan",),
    "hessian_blocks": ("ts_hessian",),
    "metric_variation": ("ts_metric_variation",),
    "perturbation": ("ts_perturbation",),
    "mu_bubble_variation": ("mu_bubble_slice",),
    "shape_operator": ("shape_operator",),
    "cot_barrier": ("cot_barrier",),
    "cylinder_constants": ("dim_constants", "cyl_ode"),
    "beta_threshold": ("dim_constants",),
    "ode_branches": ("cyl_ode",),
    "beta_monotonicity": ("cyl_beta_monotonicity",),
    "biricci_metric": ("br_curvature", "br_identity"),
    "rigidity_gate": ("dim_constants",),
    # supporting items: numerical machinery behind the in-scope claims
    "gates": ("dim_constants",),
    "eps_search": ("ts_eps_search", "ts_large_eps"),
    "optimizer": ("ts_optimizer",),
    "fiber_minimum": ("ts_fiber_minimizer",),
    "cylinder_curvature": ("cyl_curvature",),
    "r0_direction": ("r0_direction", "r0_failure_witness"),
    "biricci_scan": ("br_scan",),
}


def default_checks(family_id: str, params: dict) -> list[str]:
    """Every registered check of a family that applies to ``params``."""
    if family_id not in FAMILIES:
        raise ConfigError(f"unknown family {family_id!r}; expected one of {sorted(FAMILIES)}")
    names = list(FAMILIES[family_id]["checks"])
    if family_id == "torus_sphere":
        p = _ts_params(params)
        if not cat.strict_gate(p.m, p.n):
            names.remove("ts_perturbation")
    return names


def _error_report(check_id: str, params: dict, exc: BaseException, seed: int) -> CheckReport:
    return CheckReport(
        check_id,
        dict(params),
        {"error": math.inf},
        {"error": 0.0},
        {"exception": type(exc).__name__, "message": str(exc)},
        seed=seed,
        notes=f"check raised {type(exc).__name__}: {exc}",
    )


def check_family(family_id: str, params: dict, check_list: Optional[Sequence[str]] = None, ctx: Optional[Context] = None) -> list:
    """Run ``check_list`` (default: every applicable check) in registry order.

    Unknown families or checks and invalid parameters raise; an exception
    inside one check becomes a failing report and the run continues.
    """
    ctx = ctx or Context()
    if family_id not in FAMILIES:
        raise ConfigError(f"unknown family {family_id!r}; expected one of {sorted(FAMILIES)}")
    fam = FAMILIES[family_id]
    params = dict(params or {})
    try:
        fam["validate"](params)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"invalid parameters for {family_id}: {exc}") from exc
    wanted = default_checks(family_id, params) if check_list is None else list(check_list)
    unknown = [c for c in wanted if c not in fam["checks"]]
    if unknown:
        raise ConfigError(f"unknown checks for {family_id}: {unknown}; available: {list(fam['checks'])}")
    reports: list = []
    for name in fam["checks"]:
        if name not in wanted:
            continue
        spec = fam["checks"][name]
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                out = spec.fn(params, ctx)
        except cat.FamilyError:
            raise
        except Exception as exc:  # noqa: BLE001 - one failing check must not abort the run
            out = _error_report(name, params, exc, ctx.seed)
        out = out if isinstance(out, list) else [out]
        for rep in out:
            rep.covers = spec.covers
        reports.extend(out)
    return reports
