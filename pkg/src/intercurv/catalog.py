"""Metric families with their closed-form curvature and ODE oracles.

Families
--------
``torus_sphere``
    ``g = eps^2 F^2 h + F^(-s) sum dx_i^2`` on ``S^k x T^m`` with
    ``s = 2k/(m-1)``, ``h`` the round metric in the stereographic chart.
``warped_cylinder``
    ``g = dr^2 + eps^2 f(r)^2 gbar`` with profiles solving the counterexample
    ODE system for the minimum-Ricci eigenvalue problem.
``biricci_plane``
    ``g = u(r)^2 dt^2 + dr^2 + eps^2 f(r)^2 gbar`` built from the ``beta = 1``
    cylinder profiles.

Chart order is always: sphere-free coordinates first for the cylinder
families (``t``, ``r``), sphere coordinates first for ``torus_sphere``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .expr import Expression, Jet2, parse
from .geom import Chart, ChartMetric, constant_coefficient, expression_coefficient

__all__ = [
    "FamilyError",
    "TorusSphereParams",
    "WarpedCylinderParams",
    "BiRicciPlaneParams",
    "Profiles",
    "CotBarrier",
    "nonneg_gate",
    "strict_gate",
    "rigidity_gate",
    "beta_threshold",
    "constants_c2_c3",
    "shape_operator_constant",
    "build_torus_sphere",
    "torus_sphere_symmetric_vars",
    "closed_form_christoffel",
    "closed_form_curvature",
    "closed_form_cm_coordinate",
    "cm_coordinate_coefficient",
    "critical_points",
    "cylinder_profiles",
    "coth_candidate_h",
    "build_warped_cylinder",
    "biricci_profiles",
    "build_biricci_plane",
    "cot_barrier_profile",
    "sphere_vars",
]


class FamilyError(ValueError):
    """A family parameter violates its invariants."""


def sphere_vars(k: int) -> list[str]:
    return [f"y{a + 1}" for a in range(k)]


def _sphere_factor_source(ys: Sequence[str]) -> str:
    return "4/(1+" + "+".join(f"{y}^2" for y in ys) + ")^2"


# ---------------------------------------------------------------------------
# Dimension gates (exact arithmetic)
# ---------------------------------------------------------------------------


def nonneg_gate(m: int, n: int) -> bool:
    """``n(m-2) >= m^2 - 2``: hypothesis of the nonnegativity construction."""
    return n * (m - 2) >= m * m - 2


def strict_gate(m: int, n: int) -> bool:
    return n * (m - 2) > m * m - 2


def rigidity_gate(m: int, n: int) -> bool:
    """``2m / ((n-m)(m-1)) >= 1``, i.e. ``n(m-1) <= m^2 + m``."""
    return n * (m - 1) <= m * m + m


def beta_threshold(n: int) -> Fraction:
    """``1 - 1/(n-1) + (n-3)^2/(4(n-1))``; equals ``(n-1)/4``."""
    return 1 - Fraction(1, n - 1) + Fraction((n - 3) ** 2, 4 * (n - 1))


def constants_c2_c3(n: int, beta: float) -> tuple[float, float]:
    d = 1.0 / (n - 1) + beta - 1.0
    c2 = 1.0 / (n - 1) - 0.25 * ((n - 3) / (n - 1)) ** 2 / d
    c3 = 0.5 * (n - 3) / ((n - 1) * d)
    return c2, c3


def shape_operator_constant(n: int) -> float:
    """Exact ``min (H A(e,e) - A^2(e,e) + |A|^2) / H^2`` for a hypersurface in ``M^n``.

    Reduces to ``a + (1-a)^2/(n-2)`` on ``a + s = 1``, minimized at
    ``a = (4-n)/2`` with value ``(6-n)/4``.
    """
    if n < 3:
        raise FamilyError("shape operator bound needs n >= 3")
    return (6 - n) / 4


# ---------------------------------------------------------------------------
# Torus x sphere family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TorusSphereParams:
    m: int
    k: int
    eps: float
    F: str = "1"

    @property
    def n(self) -> int:
        return self.m + self.k

    @property
    def s(self) -> float:
        return 2 * self.k / (self.m - 1)

    @property
    def torus_vars(self) -> list[str]:
        return [f"x{i + 1}" for i in range(self.m)]

    @property
    def chart_vars(self) -> list[str]:
        return sphere_vars(self.k) + self.torus_vars

    def F_expr(self) -> Expression:
        return parse(self.F, self.torus_vars)

    def with_eps(self, eps: float) -> "TorusSphereParams":
        return TorusSphereParams(self.m, self.k, eps, self.F)

    def validate(self, samples_per_dim: Optional[int] = None) -> None:
        if self.m < 2 or self.k < 2:
            raise FamilyError("torus_sphere needs m >= 2 and k >= 2")
        if not self.eps > 0:
            raise FamilyError("eps must be positive")
        F = self.F_expr()
        per = samples_per_dim or max(3, int(20000 ** (1 / self.m)))
        axes = [np.arange(per) / per] * self.m
        pts = np.array(list(itertools.product(*axes)))
        vals = F(pts)
        bad = ~(vals > 0)
        if bad.any():
            where = pts[np.argmax(bad)]
            raise FamilyError(
                f"F must be positive on the torus (positivity invariant); F={self.F!r} gives "
                f"{float(vals[np.argmax(bad)]):.6g} at x={where.tolist()}"
            )


def build_torus_sphere(p: TorusSphereParams) -> ChartMetric:
    """``eps^2 F^2 4/(1+|y|^2)^2`` on the sphere block, ``F^(-s)`` on the torus."""
    p.validate()
    ys, xs = sphere_vars(p.k), p.torus_vars
    n = p.n
    sph = parse(f"{p.eps!r}^2*({p.F})^2*{_sphere_factor_source(ys)}", ys + xs)
    tor = parse(f"({p.F})^(-{p.s!r})", xs)
    c_sph = expression_coefficient(sph, range(n), n)
    c_tor = expression_coefficient(tor, range(p.k, n), n)
    coeff = {(a, a): c_sph for a in range(p.k)}
    coeff.update({(a, a): c_tor for a in range(p.k, n)})
    chart = Chart(tuple(ys + xs), (False,) * p.k + (True,) * p.m, ((-3.0, 3.0),) * p.k + (None,) * p.m)
    return ChartMetric(chart, coeff, name=f"torus_sphere(m={p.m},k={p.k},eps={p.eps!r},F={p.F})")


def torus_sphere_symmetric_vars(p: TorusSphereParams, translations: bool = False) -> list[int]:
    """Chart indices along which the metric is homogeneous.

    Sphere coordinates always (round factor); with ``translations`` also the
    torus coordinates that F does not depend on.
    """
    out = list(range(p.k))
    if translations:
        used = set(p.F_expr().free_variables())
        out += [p.k + i for i, x in enumerate(p.torus_vars) if x not in used]
    return out


def _F_jet(p: TorusSphereParams, point) -> Jet2:
    point = np.asarray(point, dtype=float)
    return p.F_expr().jet(point[p.k :])


def closed_form_christoffel(p: TorusSphereParams, point) -> np.ndarray:
    """``Gamma[r, a, b] = Gamma^r_ab`` in chart coordinates from the frame formulas."""
    point = np.asarray(point, dtype=float)
    k, n, s, eps = p.k, p.n, p.s, p.eps
    J = _F_jet(p, point)
    F, dF = float(J.value), np.asarray(J.grad, dtype=float)
    y = point[:k]
    q = 1.0 + y @ y
    h = 4.0 / q**2
    dw = -2.0 * y / q  # h = exp(2w) delta
    G = np.zeros((n, n, n))
    S = range(k)
    T = range(k, n)
    for a in S:
        for b in S:
            for c in S:
                G[c, a, b] = (c == a) * dw[b] + (c == b) * dw[a] - (a == b) * dw[c]
    for i in T:
        Fi = dF[i - k]
        for a in S:
            G[i, a, a] = -(eps**2) * F ** (s + 1) * Fi * h
            G[a, a, i] = G[a, i, a] = Fi / F
        for j in T:
            Fj = dF[j - k]
            G[i, i, j] = G[i, j, i] = -0.5 * s * Fj / F
            if i != j:
                G[j, i, i] = 0.5 * s * Fj / F
    return G


def closed_form_curvature(p: TorusSphereParams, point) -> dict:
    """Frame curvature components in ``e_i = d_i/|d_i|``, ``e_a`` (sphere).

    Returns arrays indexed by torus (``i, j``) and scalars for the sphere block:
    ``sec_tt[i, j]``, ``sec_ts[i]``, ``mixed[i, j] = R(e_i, e_a, e_a, e_j)``
    and ``sec_ss``.
    """
    point = np.asarray(point, dtype=float)
    m, s, eps = p.m, p.s, p.eps
    J = _F_jet(p, point)
    F, dF, H = float(J.value), np.asarray(J.grad), np.asarray(J.hess)
    dF2 = float(dF @ dF)
    sec_tt = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            if i != j:
                rest = dF2 - dF[i] ** 2 - dF[j] ** 2
                sec_tt[i, j] = (
                    0.5 * s * F ** (s - 1) * (H[i, i] + H[j, j])
                    - 0.5 * s * F ** (s - 2) * (dF[i] ** 2 + dF[j] ** 2)
                    - 0.25 * s * s * F ** (s - 2) * rest
                )
    sec_ts = np.array([-(F ** (s - 1)) * H[i, i] + 0.5 * s * F ** (s - 2) * (dF2 - 2 * dF[i] ** 2) for i in range(m)])
    mixed = -(F ** (s - 1)) * H - s * F ** (s - 2) * np.outer(dF, dF)
    np.fill_diagonal(mixed, sec_ts)
    sec_ss = eps**-2 * F**-2 - F ** (s - 2) * dF2
    return {"sec_tt": sec_tt, "sec_ts": sec_ts, "mixed": mixed, "sec_ss": sec_ss}


def cm_coordinate_coefficient(m: int, k: int) -> Fraction:
    """``k^2 (m-2) / (2(m-1)) - k``."""
    return Fraction(k * k * (m - 2), 2 * (m - 1)) - k


def closed_form_cm_coordinate(p: TorusSphereParams, point) -> float:
    """C_m of the normalized coordinate frame of the torus factor."""
    J = _F_jet(p, point)
    F, dF = float(J.value), np.asarray(J.grad)
    return float(cm_coordinate_coefficient(p.m, p.k)) * F ** (p.s - 2) * float(dF @ dF)


def critical_points(F: Expression, starts_per_dim: int = 8, tol: float = 1e-12):
    """Critical points of a 1-periodic function on the torus, by Newton's method.

    Only variables F depends on are solved for; the others are set to 0 and
    reported in ``free`` as directions along which every point is critical.
    Returns ``(points (K, nvars), hessians (K, nvars, nvars), free)``.
    """
    used = [F.variables.index(v) for v in F.free_variables()]
    nv = F.nvars
    free = [i for i in range(nv) if i not in used]
    if not used:
        return np.zeros((1, nv)), np.zeros((1, nv, nv)), free
    grid = np.array(list(itertools.product(*[np.arange(starts_per_dim) / starts_per_dim] * len(used))))
    found: list[np.ndarray] = []
    for start in grid:
        x = np.zeros(nv)
        x[used] = start
        for _ in range(60):
            J = F.jet(x)
            g = np.asarray(J.grad)[used]
            if np.max(np.abs(g)) < tol:
                break
            Hs = np.asarray(J.hess)[np.ix_(used, used)]
            step = np.linalg.lstsq(Hs, g, rcond=None)[0]
            step = np.clip(step, -0.1, 0.1)
            x[used] -= step
        J = F.jet(x)
        if np.max(np.abs(np.asarray(J.grad))) >= 1e-10:
            continue
        x = np.mod(x, 1.0)
        x[np.abs(x - 1.0) < 1e-9] = 0.0
        x[np.abs(x) < 1e-13] = 0.0
        if not any(np.max(np.abs(((x - y) + 0.5) % 1.0 - 0.5)) < 1e-8 for y in found):
            found.append(x)
    found.sort(key=lambda v: tuple(np.round(v, 9)))
    pts = np.array(found).reshape(-1, nv)
    hess = np.array([np.asarray(F.jet(x).hess) for x in pts]).reshape(-1, nv, nv)
    return pts, hess, free


# ---------------------------------------------------------------------------
# Warped cylinders
# ---------------------------------------------------------------------------

BRANCHES = ("C2_zero", "C2_negative", "n3_special")


@dataclass(frozen=True)
class WarpedCylinderParams:
    n: int
    beta: float
    lam: float = 1.0
    eps: float = 1e-3
    branch: str = "C2_zero"

    @property
    def constants(self) -> tuple[float, float]:
        return constants_c2_c3(self.n, self.beta)

    def validate(self) -> None:
        n, beta = self.n, self.beta
        if self.branch not in BRANCHES:
            raise FamilyError(f"unknown branch {self.branch!r}; expected one of {BRANCHES}")
        if not (self.lam > 0 and self.eps > 0 and beta > 0):
            raise FamilyError("beta, lambda and eps must be positive")
        if self.branch == "n3_special":
            if n != 3 or not beta < 0.5:
                raise FamilyError("n3_special requires n = 3 and beta < 1/2")
            return
        if n < 4:
            raise FamilyError(f"branch {self.branch} requires n >= 4")
        upper = (n - 1) / 4
        lower = 1 - 1 / (n - 1)
        if self.branch == "C2_zero" and not math.isclose(beta, upper, rel_tol=1e-12):
            raise FamilyError(f"C2_zero requires beta = (n-1)/4 = {upper!r}")
        if self.branch == "C2_negative" and not lower < beta < upper:
            raise FamilyError(f"C2_negative requires {lower!r} < beta < {upper!r}")


@dataclass(frozen=True)
class Profiles:
    """Profiles of ``r`` as parsed expressions (variable ``r``)."""

    h: Expression
    u: Expression
    f: Expression
    v: Expression
    r_min: Optional[float] = None  # exclusive lower bound of validity, if any

    def sources(self) -> dict:
        return {name: getattr(self, name).source for name in ("h", "u", "f", "v")}


def _expr(source: str) -> Expression:
    return parse(source, ["r"])


def cylinder_profiles(p: WarpedCylinderParams) -> Profiles:
    """Closed-form ``h, u, f, v`` of the counterexample system.

    For ``C2_negative`` the mean-curvature function is
    ``h = -sqrt(lam/(beta(-C2))) tanh(sqrt(-C2 lam/beta) r)``; this is the
    solution of the Riccati equation that is compatible with
    ``v' = -C3 h v`` for the stated ``u`` and ``f`` (see :func:`coth_candidate_h`).
    """
    p.validate()
    n, beta, lam = p.n, p.beta, p.lam
    if p.branch == "n3_special":
        root = math.sqrt(1 - 2 * beta)
        h = f"-{lam / beta!r}*r"
        u = f"exp({lam / (2 * root)!r}*r^2)"
        f = f"exp(-{0.25 * (1 / root + 1) * lam / beta!r}*r^2)"
        v = f"exp({lam / (2 * root * beta)!r}*r^2)"
        return Profiles(_expr(h), _expr(u), _expr(f), _expr(v))
    c2, c3 = p.constants
    if p.branch == "C2_zero":
        h = f"-{lam / beta!r}*r"
        u = f"exp({0.5 * c3 * lam!r}*r^2)"
        f = f"exp(-{(1 + c3) / (2 * (n - 1)) * lam / beta!r}*r^2)"
        v = f"exp({0.5 * c3 * lam / beta!r}*r^2)"
        return Profiles(_expr(h), _expr(u), _expr(f), _expr(v))
    a = math.sqrt(-c2 * lam / beta)
    A = math.sqrt(lam / (beta * -c2))
    h = f"-{A!r}*tanh({a!r}*r)"
    u = f"cosh({a!r}*r)^({-c3 * beta / c2!r})"
    f = f"cosh({a!r}*r)^({(1 + c3) / (c2 * (n - 1))!r})"
    v = f"cosh({a!r}*r)^({-c3 / c2!r})"
    return Profiles(_expr(h), _expr(u), _expr(f), _expr(v))


def coth_candidate_h(p: WarpedCylinderParams) -> Expression:
    """The coth form of h for the ``C2_negative`` branch, defined for ``r != 0``.

    With the positive sign it satisfies ``h' = +C2 h^2 + lam/beta`` rather
    than ``h' = -C2 h^2 - lam/beta``, and neither sign satisfies
    ``v' = -C3 h v`` with the cosh-power ``v``; kept so the discrepancy stays
    testable.
    """
    if p.branch != "C2_negative":
        raise FamilyError("the coth form belongs to the C2_negative branch")
    c2, _ = p.constants
    a = math.sqrt(-c2 * p.lam / p.beta)
    A = math.sqrt(p.lam / (p.beta * -c2))
    return _expr(f"{A!r}*coth({a!r}*r)")


def build_warped_cylinder(p: WarpedCylinderParams, f: Union[str, Expression, None] = None) -> ChartMetric:
    """``dr^2 + eps^2 f(r)^2 gbar`` on the chart ``(r, y_1..y_{n-1})``.

    ``f`` overrides the branch profile (e.g. ``"1"`` for the product cylinder).
    """
    if f is None:
        f_src = cylinder_profiles(p).f.source
    else:
        f_src = f.source if isinstance(f, Expression) else str(f)
        _expr(f_src)
        if not (p.eps > 0 and p.n >= 2):
            raise FamilyError("eps must be positive and n >= 2")
    n = p.n
    ys = sphere_vars(n - 1)
    sph = parse(f"{p.eps!r}^2*({f_src})^2*{_sphere_factor_source(ys)}", ["r"] + ys)
    c_sph = expression_coefficient(sph, range(n), n)
    coeff = {(0, 0): constant_coefficient(1.0, n)}
    coeff.update({(a, a): c_sph for a in range(1, n)})
    chart = Chart(tuple(["r"] + ys), (False,) * n, ((-10.0, 10.0),) + ((-3.0, 3.0),) * (n - 1))
    return ChartMetric(chart, coeff, name=f"warped_cylinder(n={n},beta={p.beta!r},branch={p.branch},f={f_src})")


@dataclass(frozen=True)
class BiRicciPlaneParams:
    sphere_dim: int = 5
    lam: float = 1.0
    eps: float = 1e-2
    branch: Optional[str] = None

    @property
    def cylinder_n(self) -> int:
        return self.sphere_dim + 1

    def cylinder(self) -> WarpedCylinderParams:
        branch = self.branch or self.default_branch()
        return WarpedCylinderParams(self.cylinder_n, 1.0, self.lam, self.eps, branch)

    def default_branch(self) -> str:
        n = self.cylinder_n
        if n == 5:
            return "C2_zero"
        if n >= 6:
            return "C2_negative"
        raise FamilyError(
            f"with beta = 1 no counterexample branch exists for sphere_dim={self.sphere_dim} "
            f"(needs beta <= (n-1)/4 with n = sphere_dim + 1 >= 5)"
        )


def biricci_profiles(p: BiRicciPlaneParams) -> Profiles:
    return cylinder_profiles(p.cylinder())


def build_biricci_plane(p: BiRicciPlaneParams) -> ChartMetric:
    """``u(r)^2 dt^2 + dr^2 + eps^2 f(r)^2 gbar`` on the chart ``(t, r, y...)``."""
    prof = biricci_profiles(p)
    k = p.sphere_dim
    n = k + 2
    ys = sphere_vars(k)
    u2 = parse(f"({prof.u.source})^2", ["r"])
    sph = parse(f"{p.eps!r}^2*({prof.f.source})^2*{_sphere_factor_source(ys)}", ["r"] + ys)
    coeff = {
        (0, 0): expression_coefficient(u2, [1], n),
        (1, 1): constant_coefficient(1.0, n),
    }
    c_sph = expression_coefficient(sph, range(1, n), n)
    coeff.update({(a, a): c_sph for a in range(2, n)})
    chart = Chart(tuple(["t", "r"] + ys), (False,) * n, ((-10.0, 10.0), (-10.0, 10.0)) + ((-3.0, 3.0),) * k)
    return ChartMetric(chart, coeff, name=f"biricci_plane(sphere_dim={k},eps={p.eps!r},branch={p.cylinder().branch})")


# ---------------------------------------------------------------------------
# Barrier profile
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CotBarrier:
    h: np.ndarray
    dh: np.ndarray  # derivative in d
    C: float
    domain: float  # profile defined for 0 < d < domain
    barrier_distance: float


def cot_barrier_profile(n: int, lam: float, d) -> CotBarrier:
    """``h = sqrt(lam/(2C)) cot(sqrt(C lam/8) d)`` with ``C = C(n)``.

    The profile is finite on ``0 < d < pi sqrt(8/(C lam))`` and vanishes at the
    midpoint; since ``d`` is comparable to twice the true distance, the
    barrier sits at distance ``pi sqrt(32/(C lam))``.
    """
    C = shape_operator_constant(n)
    if not C > 0:
        raise FamilyError(f"C(n) = {C} is not positive for n = {n}; the barrier needs n <= 5")
    d = np.asarray(d, dtype=float)
    domain = math.pi * math.sqrt(8 / (C * lam))
    if np.any((d <= 0) | (d >= domain)):
        raise FamilyError(f"d must lie in (0, {domain!r})")
    A = math.sqrt(lam / (2 * C))
    w = math.sqrt(C * lam / 8)
    theta = w * d
    h = A / np.tan(theta)
    dh = -A * w / np.sin(theta) ** 2
    return CotBarrier(h, dh, C, domain, math.pi * math.sqrt(32 / (C * lam)))
