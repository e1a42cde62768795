"""Curvature of chart-presented metrics, computed from coefficient jets.

Conventions: ``riem_low[p, q, r, s] = R(d_p, d_q, d_r, d_s)`` with
``R(X, Y, Y, X) = sec(X, Y) (|X|^2 |Y|^2 - <X, Y>^2)``, Ricci
``Ric(X, X) = sum_q R(X, e_q, e_q, X)``, and the second fundamental form
``A(X, Y) = <nabla_X N, Y>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .expr import Expression, Jet2
from .tolerances import DEFAULT, Tolerances

__all__ = [
    "GeometryError",
    "NotPositiveDefiniteError",
    "DegeneratePlaneError",
    "FrameError",
    "Chart",
    "ChartMetric",
    "CurvaturePoint",
    "CurvatureBatch",
    "Frame",
    "SliceGeometry",
    "expression_coefficient",
    "constant_coefficient",
    "curvature_at",
    "curvature_batch",
    "sectional",
    "c_m",
    "c_m_orthonormal",
    "complete_frame",
    "r0_at",
    "slice_geometry",
    "gauss_residual",
    "orthonormal_basis",
]


class GeometryError(ValueError):
    pass


class NotPositiveDefiniteError(GeometryError):
    pass


class DegeneratePlaneError(GeometryError):
    pass


class FrameError(GeometryError):
    pass


Coefficient = Callable[[np.ndarray], Jet2]


@dataclass(frozen=True)
class Chart:
    var_names: tuple[str, ...]
    periodic: tuple[bool, ...]
    domain_box: tuple[Optional[tuple[float, float]], ...]

    def __post_init__(self):
        n = len(self.var_names)
        if n < 2:
            raise GeometryError("chart dimension must be at least 2")
        if len(set(self.var_names)) != n:
            raise GeometryError(f"duplicate chart variables {self.var_names}")
        if len(self.periodic) != n or len(self.domain_box) != n:
            raise GeometryError("periodic/domain_box length must match the variable count")

    @property
    def dim(self) -> int:
        return len(self.var_names)

    def index(self, name: str) -> int:
        return self.var_names.index(name)


def expression_coefficient(expr: Expression, indices: Sequence[int], nvars: int) -> Coefficient:
    """Wrap an expression over a subset of chart variables as a coefficient."""
    idx = np.asarray(indices, dtype=int)

    def coeff(points: np.ndarray) -> Jet2:
        return expr.jet(points[..., idx]).embed(idx, nvars)

    coeff.__name__ = f"expr[{expr.source}]"
    return coeff


def constant_coefficient(c: float, nvars: int) -> Coefficient:
    def coeff(points: np.ndarray) -> Jet2:
        return Jet2.constant(c, nvars, points.shape[:-1])

    return coeff


class ChartMetric:
    """Symmetric matrix of coefficient functions on a chart.

    ``coeff`` maps index pairs ``(a, b)`` with ``a <= b`` to callables that
    return a :class:`Jet2` over all chart variables; missing pairs are zero.
    A callable shared by several entries is evaluated once per call.
    """

    def __init__(self, chart: Chart, coeff: Mapping[tuple[int, int], Coefficient], name: str = ""):
        self.chart = chart
        self.name = name
        n = chart.dim
        entries = {}
        for (a, b), fn in coeff.items():
            if not (0 <= a < n and 0 <= b < n):
                raise GeometryError(f"coefficient index {(a, b)} outside dimension {n}")
            key = (min(a, b), max(a, b))
            if key in entries:
                raise GeometryError(f"coefficient {key} given twice")
            entries[key] = fn
        self._coeff = entries

    @property
    def dim(self) -> int:
        return self.chart.dim

    def is_zero_entry(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) not in self._coeff

    def jets(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``g``, ``dg[..., a, b, k]`` and ``ddg[..., a, b, k, l]``."""
        points = np.asarray(points, dtype=float)
        n = self.dim
        shape = points.shape[:-1]
        g = np.zeros(shape + (n, n))
        dg = np.zeros(shape + (n, n, n))
        ddg = np.zeros(shape + (n, n, n, n))
        cache: dict[int, Jet2] = {}
        for (a, b), fn in self._coeff.items():
            jet = cache.get(id(fn))
            if jet is None:
                jet = cache[id(fn)] = fn(points)
            for i, j in {(a, b), (b, a)}:
                g[..., i, j] = jet.value
                dg[..., i, j, :] = jet.grad
                ddg[..., i, j, :, :] = jet.hess
        return g, dg, ddg

    def conformal(self, factor: Coefficient, name: str = "") -> "ChartMetric":
        """The metric ``factor * g`` (jet product, entrywise)."""
        return _ConformalMetric(self, factor, name or f"conformal({self.name})")

    def restrict(self, normal_coordinate: int, value: float) -> "ChartMetric":
        """Induced metric on the coordinate slice ``{x_c = value}``."""
        return _SliceMetric(self, normal_coordinate, value)


class _ConformalMetric(ChartMetric):
    def __init__(self, base: ChartMetric, factor: Coefficient, name: str):
        self.chart = base.chart
        self.name = name
        self._base = base
        self._factor = factor
        self._coeff = base._coeff

    def jets(self, points):
        points = np.asarray(points, dtype=float)
        g, dg, ddg = self._base.jets(points)
        phi = self._factor(points)
        v = phi.value[..., None, None]
        d = phi.grad[..., None, None, :]
        dd = phi.hess[..., None, None, :, :]
        cross = np.einsum("...abk,...l->...abkl", dg, phi.grad)
        cross = cross + np.swapaxes(cross, -1, -2)
        new_ddg = v[..., None, None] * ddg + cross + g[..., :, :, None, None] * dd
        new_dg = v[..., None] * dg + g[..., :, :, None] * d
        return v * g, new_dg, new_ddg


class _SliceMetric(ChartMetric):
    def __init__(self, base: ChartMetric, c: int, value: float):
        chart = base.chart
        keep = [a for a in range(chart.dim) if a != c]
        self.chart = Chart(
            tuple(chart.var_names[a] for a in keep),
            tuple(chart.periodic[a] for a in keep),
            tuple(chart.domain_box[a] for a in keep),
        )
        self.name = f"{base.name}|{chart.var_names[c]}={value}"
        self._base = base
        self._c = c
        self._value = float(value)
        self._keep = np.asarray(keep)
        self._coeff = {}

    def is_zero_entry(self, a, b):
        k = self._keep
        return self._base.is_zero_entry(k[a], k[b])

    def lift(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        full = np.insert(points, self._c, self._value, axis=-1)
        return full

    def jets(self, points):
        g, dg, ddg = self._base.jets(self.lift(points))
        k = self._keep
        g = g[..., k[:, None], k[None, :]]
        dg = dg[..., k[:, None, None], k[None, :, None], k[None, None, :]]
        ddg = ddg[..., :, :, k, :][..., :, :, :, k]
        ddg = ddg[..., k, :, :, :][..., :, k, :, :]
        return g, dg, ddg


# ---------------------------------------------------------------------------
# Curvature
# ---------------------------------------------------------------------------


def _cholesky(g: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("metric is not positive definite at the sampled point") from exc


def _riemann(g, dg, ddg):
    n = g.shape[-1]
    shape = g.shape[:-2]
    ginv = np.linalg.inv(g)
    ginv = 0.5 * (ginv + np.swapaxes(ginv, -1, -2))
    # first kind, gamma1[c, a, b] = Gamma_{c,ab}
    gamma1 = 0.5 * (
        np.einsum("...bca->...cab", dg) + np.einsum("...acb->...cab", dg) - np.einsum("...abc->...cab", dg)
    )
    gamma = np.einsum("...rc,...cab->...rab", ginv, gamma1)
    # standard lowered tensor Std_{ijkl}, Std_{ijij} = K (g_ii g_jj - g_ij^2)
    second = 0.5 * (
        np.einsum("...iljk->...ijkl", ddg)
        + np.einsum("...jkil->...ijkl", ddg)
        - np.einsum("...ikjl->...ijkl", ddg)
        - np.einsum("...jlik->...ijkl", ddg)
    )
    a = np.swapaxes(gamma1.reshape(shape + (n, n * n)), -1, -2)
    b = gamma.reshape(shape + (n, n * n))
    t = np.matmul(a, b).reshape(shape + (n, n, n, n))  # t[j, k, i, l]
    t = np.einsum("...jkil->...ijkl", t)
    std = second + t - np.swapaxes(t, -1, -2)
    riem = np.swapaxes(std, -1, -2)
    ricci = np.einsum("...bc,...abcd->...ad", ginv, riem)
    ricci = 0.5 * (ricci + np.swapaxes(ricci, -1, -2))
    scalar = np.einsum("...ad,...ad->...", ginv, ricci)
    return ginv, gamma, riem, ricci, scalar


@dataclass
class CurvaturePoint:
    point: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    gamma: np.ndarray
    riem_low: np.ndarray
    ricci: np.ndarray
    scalar: float

    @property
    def dim(self) -> int:
        return self.g.shape[0]

    def inner(self, X, Y) -> float:
        return float(np.asarray(X) @ self.g @ np.asarray(Y))

    def R(self, X, Y, Z, W) -> float:
        return float(np.einsum("abcd,a,b,c,d->", self.riem_low, X, Y, Z, W))

    def ric(self, X, Y) -> float:
        return float(np.asarray(X) @ self.ricci @ np.asarray(Y))


@dataclass
class CurvatureBatch:
    """Curvature data at many points; arrays carry a leading batch axis."""

    points: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    gamma: np.ndarray
    riem_low: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    _on_cache: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return self.g.shape[0]

    def at(self, i: int) -> CurvaturePoint:
        return CurvaturePoint(
            self.points[i], self.g[i], self.g_inv[i], self.gamma[i], self.riem_low[i], self.ricci[i], float(self.scalar[i])
        )

    def orthonormal(self):
        """Return ``(E, R_on, Ric_on)``; columns of ``E`` are g-orthonormal."""
        if "on" not in self._on_cache:
            E = orthonormal_basis(self.g)
            R = _transform4(self.riem_low, E)
            ric = np.einsum("...ai,...ab,...bj->...ij", E, self.ricci, E)
            self._on_cache["on"] = (E, R, 0.5 * (ric + np.swapaxes(ric, -1, -2)))
        return self._on_cache["on"]


def orthonormal_basis(g: np.ndarray) -> np.ndarray:
    """``E = L^{-T}`` with ``g = L L^T``, so that ``E^T g E = I``."""
    L = _cholesky(g)
    eye = np.broadcast_to(np.eye(g.shape[-1]), g.shape)
    Linv = np.linalg.solve(L, eye)
    return np.swapaxes(Linv, -1, -2)


def _transform4(R: np.ndarray, E: np.ndarray) -> np.ndarray:
    shape = R.shape[:-4]
    n = R.shape[-1]
    Et = np.swapaxes(E, -1, -2)
    out = R
    for _ in range(4):
        flat = out.reshape(shape + (n, n**3))
        out = np.matmul(Et, flat).reshape(shape + (n, n, n, n))
        out = np.moveaxis(out, -4, -1)
    return out


def curvature_batch(metric: ChartMetric, points) -> CurvatureBatch:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[-1] != metric.dim:
        raise GeometryError(f"points must have {metric.dim} coordinates, got {points.shape[-1]}")
    g, dg, ddg = metric.jets(points)
    if not np.all(np.isfinite(g)) or not np.all(np.isfinite(ddg)):
        raise GeometryError("non-finite metric coefficients")
    _cholesky(g)
    ginv, gamma, riem, ricci, scalar = _riemann(g, dg, ddg)
    return CurvatureBatch(points, g, ginv, gamma, riem, ricci, scalar)


def curvature_at(metric: ChartMetric, point) -> CurvaturePoint:
    """Christoffel symbols, Riemann, Ricci and scalar curvature at one point."""
    point = np.asarray(point, dtype=float)
    if point.ndim != 1:
        raise GeometryError("curvature_at takes a single point")
    return curvature_batch(metric, point[None, :]).at(0)


def sectional(cp: CurvaturePoint, X, Y, tol: Tolerances = DEFAULT) -> float:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    xx, yy, xy = cp.inner(X, X), cp.inner(Y, Y), cp.inner(X, Y)
    den = xx * yy - xy * xy
    if not (xx > 0 and yy > 0) or den <= tol.degenerate_plane * xx * yy:
        raise DegeneratePlaneError("vectors span a degenerate plane")
    return cp.R(X, Y, Y, X) / den


@dataclass
class Frame:
    """Ordered g-orthonormal tangent vectors at a point (rows of ``vectors``)."""

    point: np.ndarray
    vectors: np.ndarray

    @property
    def m(self) -> int:
        return self.vectors.shape[0]

    def check(self, g: np.ndarray, tol: float = DEFAULT.orthonormal) -> None:
        gram = self.vectors @ g @ self.vectors.T
        err = np.max(np.abs(gram - np.eye(self.m)))
        if err > tol:
            raise FrameError(f"frame is not g-orthonormal (max Gram error {err:.3e})")


def complete_frame(frame_vectors: np.ndarray, g: np.ndarray, pivot: float = DEFAULT.gram_schmidt_pivot) -> np.ndarray:
    """Extend ``m`` orthonormal row vectors to ``n`` by Gram-Schmidt in ``g``."""
    n = g.shape[0]
    basis = [np.asarray(v, dtype=float) for v in frame_vectors]
    for a in range(n):
        if len(basis) == n:
            break
        cand = np.zeros(n)
        cand[a] = 1.0
        norm0 = np.sqrt(cand @ g @ cand)
        for _ in range(2):
            for b in basis:
                cand = cand - (b @ g @ cand) * b
        norm = np.sqrt(max(cand @ g @ cand, 0.0))
        if norm <= pivot * norm0:
            continue
        basis.append(cand / norm)
    if len(basis) != n:
        raise FrameError("could not complete the frame")
    return np.array(basis)


def c_m(cp: CurvaturePoint, frame: Frame, tol: Tolerances = DEFAULT) -> float:
    """m-intermediate curvature: sum_{p<=m} sum_{q>p} R(e_p, e_q, e_q, e_p)."""
    frame.check(cp.g, tol.orthonormal)
    m, n = frame.m, cp.dim
    if not 1 <= m <= n - 1:
        raise FrameError(f"frame size must be between 1 and {n - 1}")
    full = complete_frame(frame.vectors, cp.g, tol.gram_schmidt_pivot)
    K = np.einsum("abcd,pa,qb,qc,pd->pq", cp.riem_low, full, full, full, full)
    return float(sum(K[p, q] for p in range(m) for q in range(p + 1, n)))


def c_m_orthonormal(R_on: np.ndarray, ric_on: np.ndarray, W: np.ndarray) -> np.ndarray:
    """C_m of the plane spanned by orthonormal columns of ``W`` (batched).

    Uses ``C_m = sum_p Ric(w_p, w_p) - sum_{p<q} R(w_p, w_q, w_q, w_p)``,
    which depends only on the span.
    """
    ric_part = np.einsum("...ap,...ab,...bp->...", W, ric_on, W)
    K = np.einsum("...abcd,...ap,...bq,...cq,...dp->...pq", R_on, W, W, W, W, optimize=True)
    m = W.shape[-1]
    iu = np.triu_indices(m, 1)
    return ric_part - K[..., iu[0], iu[1]].sum(axis=-1)


def r0_at(cp: CurvaturePoint) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue of Ricci relative to g, with a g-unit minimizer."""
    try:
        lam, Q = np.linalg.eigh(cp.g)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    if np.any(lam <= 0):
        raise NotPositiveDefiniteError("metric is not positive definite")
    S = (Q / np.sqrt(lam)) @ Q.T
    A = S @ cp.ricci @ S
    A = 0.5 * (A + A.T)
    _, W = np.linalg.eigh(A)
    e = S @ W[:, 0]
    e = e / np.sqrt(e @ cp.g @ e)
    # Rayleigh quotient in the original pencil keeps relative accuracy when
    # g is badly graded
    value = float(e @ cp.ricci @ e)
    return value, e


# ---------------------------------------------------------------------------
# Coordinate slices
# ---------------------------------------------------------------------------


@dataclass
class SliceGeometry:
    A: np.ndarray
    H: float
    N: np.ndarray
    tangent_indices: np.ndarray
    g_slice: np.ndarray


def _check_block(g: np.ndarray, c: int, rel: float = 1e-12):
    n = g.shape[0]
    for a in range(n):
        if a != c and abs(g[c, a]) > rel * np.sqrt(g[c, c] * g[a, a]):
            raise GeometryError("metric is not block-diagonal between the normal coordinate and the slice")


def slice_geometry(metric: ChartMetric, point, normal_coordinate: int, cp: Optional[CurvaturePoint] = None) -> SliceGeometry:
    """Second fundamental form and mean curvature of ``{x_c = const}``.

    The normal is ``N = d_c / |d_c|``.
    """
    point = np.asarray(point, dtype=float)
    c = normal_coordinate
    cp = cp if cp is not None else curvature_at(metric, point)
    _check_block(cp.g, c)
    n = cp.dim
    tan = np.array([a for a in range(n) if a != c])
    lam = np.sqrt(cp.g[c, c])
    # A(d_a, d_b) = -<N, nabla_a d_b> = -Gamma^c_ab |d_c|
    A = -cp.gamma[c][np.ix_(tan, tan)] * lam
    A = 0.5 * (A + A.T)
    gs = cp.g[np.ix_(tan, tan)]
    H = float(np.trace(np.linalg.solve(gs, A)))
    N = np.zeros(n)
    N[c] = 1.0 / lam
    return SliceGeometry(A, H, N, tan, gs)


def gauss_residual(metric: ChartMetric, point, normal_coordinate: int, e) -> float:
    """|Ric_S(e,e) - [Ric_M(e,e) - R_M(N,e,e,N) + H A(e,e) - A^2(e,e)]|.

    ``e`` is a g-unit chart vector with zero normal component.
    """
    point = np.asarray(point, dtype=float)
    e = np.asarray(e, dtype=float)
    c = normal_coordinate
    if abs(e[c]) > 0:
        raise GeometryError("e must be tangent to the slice")
    cp = curvature_at(metric, point)
    sg = slice_geometry(metric, point, c, cp)
    et = e[sg.tangent_indices]
    slice_metric = metric.restrict(c, point[c])
    cps = curvature_at(slice_metric, point[sg.tangent_indices])
    lhs = cps.ric(et, et)
    Ae = sg.A @ et
    A2 = float(Ae @ np.linalg.solve(sg.g_slice, Ae))
    rhs = cp.ric(e, e) - cp.R(sg.N, e, e, sg.N) + sg.H * float(et @ sg.A @ et) - A2
    return abs(lhs - rhs)
