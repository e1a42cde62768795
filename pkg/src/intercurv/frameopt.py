"""Minimizing C_m over m-planes, manifold scans, and Grassmannian Hessians."""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .geom import (
    ChartMetric,
    CurvatureBatch,
    Frame,
    curvature_batch,
    orthonormal_basis,
)
from .tolerances import DEFAULT, Tolerances

log = logging.getLogger(__name__)

__all__ = [
    "OptimOptions",
    "MinResult",
    "GrassCoords",
    "ScanGrid",
    "ScanResult",
    "ConvergenceWarning",
    "PreconditionError",
    "cm_from_projector",
    "minimize_cm_orthonormal",
    "min_cm_at",
    "grassmann_gradient",
    "scan_min_cm",
    "find_admissible_eps",
    "EPS_SCHEDULE",
    "BundleHessian",
    "plane_cm",
    "grass_hessian_cm",
    "metric_variation_derivative",
    "variation_trace_formula",
    "perturbed_positivity_check",
]


class ConvergenceWarning(RuntimeWarning):
    pass


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class OptimOptions:
    starts: int = 32
    max_iters: int = 500
    step_tol: float = 1e-10
    seed: int = 0
    # product grids above this many points use the declared isometry reduction
    max_full_points: int = 50_000
    # torus points whose full sphere grid is evaluated to confirm the reduction
    symmetry_probes: int = 16
    # orbit samples per probe; larger orbits are thinned evenly
    probe_orbit_cap: int = 1024
    batch_size: int = 2048


# ---------------------------------------------------------------------------
# C_m on orthonormal data
# ---------------------------------------------------------------------------


def _rmat(R_on: np.ndarray) -> np.ndarray:
    """Matrix ``Rm[(a,d), (b,c)] = R[a,b,c,d]`` so ``R[X]_{ad} = Rm @ vec(X)``."""
    n = R_on.shape[-1]
    return np.einsum("...abcd->...adbc", R_on).reshape(R_on.shape[:-4] + (n * n, n * n))


def cm_from_projector(Rm: np.ndarray, ric_on: np.ndarray, W: np.ndarray) -> np.ndarray:
    """``C_m = tr(Ric P) - 1/2 <P, R[P]>`` for ``P = W W^T``.

    ``Rm`` has shape ``(B, n^2, n^2)``, ``ric_on`` ``(B, n, n)`` and ``W``
    ``(B, S, n, m)``; returns ``(B, S)``.
    """
    n = W.shape[-2]
    P = np.matmul(W, np.swapaxes(W, -1, -2))
    vecP = P.reshape(P.shape[:-2] + (n * n,))
    # Rm is symmetric by the pair symmetry of R
    RP = np.matmul(vecP, Rm)
    quad = np.einsum("bsk,bsk->bs", vecP, RP)
    lin = np.einsum("bsij,bij->bs", P, ric_on)
    return lin - 0.5 * quad


def _random_starts(rng: np.random.Generator, L_T: np.ndarray, starts: int, m: int) -> np.ndarray:
    n = L_T.shape[0]
    V = rng.standard_normal((starts, n, m))
    # chart-space Gaussian frames expressed in the orthonormal basis, then
    # orthonormalized there (equivalent to Gram-Schmidt in g)
    Wc = np.matmul(L_T, V)
    Q, _ = np.linalg.qr(Wc)
    return Q


def minimize_cm_orthonormal(
    R_on: np.ndarray,
    ric_on: np.ndarray,
    W0: np.ndarray,
    max_iters: int = 500,
    step_tol: float = 1e-10,
):
    """Block coordinate descent on planes, batched over points and starts.

    Each step replaces one spanning vector ``w_i`` by the minimizer of
    ``w^T M_i w`` over unit ``w`` orthogonal to the other ``m-1`` vectors,
    where ``M_i = Ric - R[sum_{q != i} w_q w_q^T]`` carries every term of
    C_m that involves ``w_i``.  This is the exact optimum over all rotations
    mixing ``w_i`` with complement directions, so C_m never increases.

    The search space ``span{w_i} + complement`` is kept as an explicit
    orthonormal basis; the eigenvectors of the reduced problem other than
    the minimizer form the next complement.

    Returns ``(values (B,S), W (B,S,n,m), iterations (B,S), converged (B,S))``.
    """
    W0 = np.asarray(W0, dtype=float)
    B, S, n, m = W0.shape
    Rm = _rmat(R_on)
    Q, _ = np.linalg.qr(W0, mode="complete")
    # keep the start's own span vectors, complete with the QR complement
    U = np.concatenate([W0, Q[..., m:]], axis=-1)
    scale = 1.0 + np.abs(ric_on).max(axis=(-1, -2)) + n * np.abs(Rm).max(axis=(-1, -2))
    iters = np.zeros((B, S), dtype=int)
    conv = np.zeros((B, S), dtype=bool)
    pts = np.arange(B)
    for _ in range(max_iters):
        if pts.size == 0:
            break
        Ua = U[pts]
        live = ~conv[pts]
        Rma = Rm[pts]
        rica = ric_on[pts][:, None]
        thresh = 1e-15 * scale[pts][:, None]
        step = np.zeros(live.shape)
        for i in range(m):
            Wa = Ua[..., :m]
            wi = Ua[..., i]
            X = np.matmul(Wa, np.swapaxes(Wa, -1, -2)) - wi[..., :, None] * wi[..., None, :]
            # (b, n^2, n^2) @ (b, n^2, S): one matmul per point over its starts
            RX = np.matmul(Rma, X.reshape(len(pts), S, n * n).transpose(0, 2, 1))
            M = rica - RX.transpose(0, 2, 1).reshape(len(pts), S, n, n)
            C = np.concatenate([wi[..., None], Ua[..., m:]], axis=-1)
            K = np.matmul(np.swapaxes(C, -1, -2), np.matmul(M, C))
            K = 0.5 * (K + np.swapaxes(K, -1, -2))
            lam, vec = np.linalg.eigh(K)
            accept = live & (lam[..., 0] < K[..., 0, 0] - thresh)
            # align sign with the old vector so the step measures real motion
            sign = np.where(vec[..., 0, 0] < 0, -1.0, 1.0)
            newC = np.matmul(C, vec * sign[..., None, None])
            delta = np.where(accept, np.linalg.norm(newC[..., 0] - wi, axis=-1), 0.0)
            step = np.maximum(step, delta)
            Ua[..., i] = np.where(accept[..., None], newC[..., 0], wi)
            Ua[..., m:] = np.where(accept[..., None, None], newC[..., 1:], Ua[..., m:])
        U[pts] = Ua
        iters[pts] += live
        newly = live & (step < step_tol)
        sub = conv[pts]
        sub[newly] = True
        conv[pts] = sub
        pts = pts[~sub.all(axis=1)]
    W, _ = np.linalg.qr(U[..., :m])
    values = cm_from_projector(Rm, ric_on, W)
    return values, W, iters, conv


@dataclass
class MinResult:
    value: float
    frame: Frame
    converged: bool
    iterations: int
    start_values: np.ndarray
    W_on: np.ndarray
    E: np.ndarray


def _point_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(index)]))


def _minimize_batch(cb: CurvatureBatch, m: int, opts: OptimOptions, indices: Sequence[int]):
    E, R_on, ric_on = cb.orthonormal()
    L_T = np.linalg.inv(E)  # E = L^{-T}  =>  L^T = E^{-1}
    W0 = np.stack([_random_starts(_point_rng(opts.seed, idx), L_T[b], opts.starts, m) for b, idx in enumerate(indices)])
    start_values = cm_from_projector(_rmat(R_on), ric_on, W0)
    values, W, iters, conv = minimize_cm_orthonormal(R_on, ric_on, W0, opts.max_iters, opts.step_tol)
    best = np.argmin(values, axis=1)
    rows = np.arange(len(indices))
    return (
        values[rows, best],
        W[rows, best],
        conv[rows, best],
        iters[rows, best],
        start_values,
        E,
    )


def min_cm_at(metric: ChartMetric, point, m: int, opts: OptimOptions = OptimOptions(), index: int = 0) -> MinResult:
    """Best C_m over random multistart block descent at one point."""
    point = np.asarray(point, dtype=float)
    n = metric.dim
    if not 1 <= m <= n - 1:
        raise PreconditionError(f"m must satisfy 1 <= m <= {n - 1}")
    cb = curvature_batch(metric, point[None])
    val, W, conv, iters, start_values, E = _minimize_batch(cb, m, opts, [index])
    if not conv[0]:
        warnings.warn(f"C_m minimization did not converge in {opts.max_iters} iterations", ConvergenceWarning)
    vectors = (E[0] @ W[0]).T
    return MinResult(float(val[0]), Frame(point, vectors), bool(conv[0]), int(iters[0]), start_values[0], W[0], E[0])


# ---------------------------------------------------------------------------
# Local Grassmannian coordinates
# ---------------------------------------------------------------------------


class GrassCoords:
    """Local chart ``z -> span{w_i + sum_a z_{ia} c_a}`` around a base plane.

    ``base`` (n x m) and ``complement`` (n x (n-m)) are orthonormal columns
    in an orthonormal basis of the tangent space.
    """

    def __init__(self, base: np.ndarray, complement: Optional[np.ndarray] = None):
        base = np.asarray(base, dtype=float)
        n, m = base.shape
        if complement is None:
            Q, _ = np.linalg.qr(np.hstack([base, np.eye(n)]))
            complement = Q[:, m:n]
            # orthogonal completion, independent of QR sign conventions
            complement = complement - base @ (base.T @ complement)
            complement, _ = np.linalg.qr(complement)
        self.base = base
        self.complement = np.asarray(complement, dtype=float)

    @property
    def shape(self) -> tuple[int, int]:
        return self.base.shape[1], self.complement.shape[1]

    def plane(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(self.shape)
        if not np.any(z):
            return self.base.copy()
        V = self.base + self.complement @ z.T
        # symmetric orthonormalization: smooth in z, same span
        s, U = np.linalg.eigh(V.T @ V)
        return V @ (U / np.sqrt(s)) @ U.T


def grassmann_gradient(R_on: np.ndarray, ric_on: np.ndarray, W: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of C_m in GrassCoords centred at ``W``."""
    gc = GrassCoords(W)
    m, k = gc.shape
    Rm = _rmat(R_on)[None]

    def f(z):
        return float(cm_from_projector(Rm, ric_on[None], gc.plane(z)[None, None])[0, 0])

    grad = np.zeros(m * k)
    for a in range(m * k):
        e = np.zeros(m * k)
        e[a] = step
        grad[a] = (f(e) - f(-e)) / (2 * step)
    return grad


# ---------------------------------------------------------------------------
# Scans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScanGrid:
    """Per-variable sample values; the scanned set is their product.

    ``ball`` lists groups of variable indices (stereographic charts) whose
    product samples are filtered to ``|y| <= radius``.  ``extra_points`` are
    appended verbatim (e.g. critical points of a warp function).
    """

    axes: tuple[tuple[float, ...], ...]
    ball: tuple[tuple[int, ...], ...] = ()
    radius: float = 3.0
    extra_points: tuple[tuple[float, ...], ...] = ()

    def counts(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.axes)

    def _ball_mask(self, pts: np.ndarray) -> np.ndarray:
        keep = np.ones(len(pts), dtype=bool)
        for group in self.ball:
            keep &= np.linalg.norm(pts[:, list(group)], axis=1) <= self.radius + 1e-12
        return keep

    def points(self, free: Optional[Sequence[int]] = None) -> np.ndarray:
        """Product points; variables outside ``free`` are pinned to their
        sample closest to 0 (used for the isometry reduction)."""
        axes = []
        for i, a in enumerate(self.axes):
            if free is not None and i not in free:
                a = (min(a, key=abs),)
            axes.append(a)
        pts = np.array(list(itertools.product(*axes)), dtype=float)
        pts = pts[self._ball_mask(pts)]
        if self.extra_points:
            extra = np.array(self.extra_points, dtype=float)
            if free is not None:
                for i in range(extra.shape[1]):
                    if i not in free:
                        extra[:, i] = min(self.axes[i], key=abs)
            pts = np.vstack([pts, extra])
        return pts

    def size(self) -> int:
        return len(self.points())

    def size_estimate(self) -> int:
        return int(np.prod(self.counts())) + len(self.extra_points)


@dataclass
class ScanResult:
    global_min: float
    argmin_point: np.ndarray
    argmin_frame: Frame
    points: np.ndarray
    minima: np.ndarray
    frames: np.ndarray  # chart-coordinate frames, shape (P, m, n)
    grid: ScanGrid
    starts: int
    seed: int
    m: int
    converged: np.ndarray
    reduction: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.minima.size and self.global_min != float(np.min(self.minima)):
            raise AssertionError("global_min must equal the minimum over samples")


def _orbit_key(points: np.ndarray, sym_vars: Sequence[int]) -> np.ndarray:
    keep = [i for i in range(points.shape[1]) if i not in set(sym_vars)]
    return points[:, keep]


def scan_min_cm(
    metric: ChartMetric,
    grid: ScanGrid,
    m: int,
    opts: OptimOptions = OptimOptions(),
    symmetric_vars: Optional[Sequence[int]] = None,
    tol: Tolerances = DEFAULT,
) -> ScanResult:
    """Minimize C_m at every grid point; deterministic in ``opts.seed``.

    ``symmetric_vars`` declares chart variables along which the metric is
    homogeneous (round sphere factors).  When the product grid exceeds
    ``opts.max_full_points``, optimization runs at the orbit representatives
    (symmetric variables pinned to 0) and the full grid of the symmetric
    variables is evaluated at ``opts.symmetry_probes`` representatives; each
    probe reuses its representative's optimal plane only after its
    orthonormal curvature tensor is confirmed equal to the representative's,
    and is optimized independently otherwise.
    """
    n = metric.dim
    if not 1 <= m <= n - 1:
        raise PreconditionError(f"m must satisfy 1 <= m <= {n - 1}")
    reduction: dict = {"mode": "full"}
    # the full product grid is never materialized in isometry mode
    reduce = bool(symmetric_vars) and grid.size_estimate() > opts.max_full_points
    if reduce:
        free = [i for i in range(n) if i not in set(symmetric_vars)]
        reps = grid.points(free=free)
        reduction = {"mode": "isometry", "symmetric_vars": list(symmetric_vars), "representatives": len(reps)}
    else:
        reps = grid.points()

    values, frames, conv = _optimize_points(metric, reps, m, opts)
    pts_out, vals_out, frames_out, conv_out = [reps], [values], [frames], [conv]

    if reduce:
        probe_values, probe_frames, probe_pts, probe_conv, dev_max, n_fallback = _symmetry_probes(
            metric, grid, reps, values, frames, m, opts, symmetric_vars, tol
        )
        reduction.update({"probe_points": len(probe_pts), "probe_max_tensor_deviation": dev_max, "probe_fallbacks": n_fallback})
        pts_out.append(probe_pts)
        vals_out.append(probe_values)
        frames_out.append(probe_frames)
        conv_out.append(probe_conv)

    points = np.vstack(pts_out)
    minima = np.concatenate(vals_out)
    frames = np.concatenate(frames_out)
    converged = np.concatenate(conv_out)
    best = int(np.argmin(minima))
    return ScanResult(
        float(minima[best]),
        points[best],
        Frame(points[best], frames[best]),
        points,
        minima,
        frames,
        grid,
        opts.starts,
        opts.seed,
        m,
        converged,
        reduction,
    )


def _optimize_points(metric: ChartMetric, points: np.ndarray, m: int, opts: OptimOptions, offset: int = 0):
    P = len(points)
    n = metric.dim
    values = np.empty(P)
    frames = np.empty((P, m, n))
    conv = np.empty(P, dtype=bool)
    for lo in range(0, P, opts.batch_size):
        hi = min(P, lo + opts.batch_size)
        cb = curvature_batch(metric, points[lo:hi])
        val, W, c, _, _, E = _minimize_batch(cb, m, opts, range(offset + lo, offset + hi))
        values[lo:hi] = val
        frames[lo:hi] = np.swapaxes(np.matmul(E, W), -1, -2)
        conv[lo:hi] = c
    if not conv.all():
        warnings.warn(f"{int((~conv).sum())} scan points hit max_iters", ConvergenceWarning)
    return values, frames, conv


def _symmetry_probes(metric, grid, reps, rep_values, rep_frames, m, opts, sym_vars, tol):
    count = min(opts.symmetry_probes, len(reps))
    chosen = np.unique(np.linspace(0, len(reps) - 1, count).round().astype(int))
    sym_axes = [grid.axes[i] for i in sym_vars]
    sym_pts = np.array(list(itertools.product(*sym_axes)), dtype=float)
    for group in grid.ball:
        cols = [list(sym_vars).index(i) for i in group if i in sym_vars]
        if cols:
            sym_pts = sym_pts[np.linalg.norm(sym_pts[:, cols], axis=1) <= grid.radius + 1e-12]
    if len(sym_pts) > opts.probe_orbit_cap:
        keep = np.unique(np.linspace(0, len(sym_pts) - 1, opts.probe_orbit_cap).round().astype(int))
        sym_pts = sym_pts[keep]
    out_vals, out_frames, out_pts, out_conv = [], [], [], []
    dev_max = 0.0
    fallbacks = 0
    rep_cb = curvature_batch(metric, reps[chosen])
    _, rep_R, rep_ric = rep_cb.orthonormal()
    for j, r in enumerate(chosen):
        pts = np.repeat(reps[r][None], len(sym_pts), axis=0)
        pts[:, list(sym_vars)] = sym_pts
        cb = curvature_batch(metric, pts)
        E, R_on, ric_on = cb.orthonormal()
        scale = max(1.0, float(np.abs(rep_R[j]).max()))
        dev = np.abs(R_on - rep_R[j][None]).reshape(len(pts), -1).max(axis=1) / scale
        dev = np.maximum(dev, np.abs(ric_on - rep_ric[j][None]).reshape(len(pts), -1).max(axis=1) / scale)
        dev_max = max(dev_max, float(dev.max()))
        # representative's optimal plane, carried to each probe by its ON basis
        rep_E = orthonormal_basis(rep_cb.g[j])
        W_rep = np.linalg.solve(rep_E, rep_frames[r].T)
        vals = cm_from_projector(_rmat(R_on), ric_on, np.broadcast_to(W_rep, (len(pts), 1) + W_rep.shape))[:, 0]
        frames = np.swapaxes(np.matmul(E, W_rep), -1, -2)
        conv = np.ones(len(pts), dtype=bool)
        bad = dev > tol.tensor_symmetry
        if bad.any():
            fallbacks += int(bad.sum())
            v2, f2, c2 = _optimize_points(metric, pts[bad], m, opts, offset=10**9 + j * 10**5)
            vals[bad], frames[bad], conv[bad] = v2, f2, c2
        out_vals.append(vals)
        out_frames.append(frames)
        out_pts.append(pts)
        out_conv.append(conv)
    return (
        np.concatenate(out_vals),
        np.concatenate(out_frames),
        np.vstack(out_pts),
        np.concatenate(out_conv),
        dev_max,
        fallbacks,
    )


EPS_SCHEDULE = tuple(0.1 * 2.0**-j for j in range(21))


def find_admissible_eps(
    build: Callable[[float], ChartMetric],
    m: int,
    grid: ScanGrid,
    opts: OptimOptions = OptimOptions(),
    tol: float = DEFAULT.nonneg_scan,
    symmetric_vars: Optional[Sequence[int]] = None,
    schedule: Sequence[float] = EPS_SCHEDULE,
    level: float = 0.0,
    gate: bool = False,
):
    """Largest eps in the halving schedule whose scan minimum is ``>= level - tol``.

    With ``gate`` the nonnegativity hypothesis ``n(m-2) >= m^2-2`` is
    required first.  Returns ``(eps, scan, trace)`` where ``trace`` lists
    ``(eps, global_min)``.
    """
    if gate:
        n = build(schedule[0]).dim
        if not n * (m - 2) >= m * m - 2:
            raise PreconditionError(f"gate n(m-2) >= m^2-2 fails for (m, n) = ({m}, {n})")
    trace = []
    for eps in schedule:
        scan = scan_min_cm(build(eps), grid, m, opts, symmetric_vars)
        trace.append((eps, scan.global_min))
        log.debug("eps=%g global_min=%.3e", eps, scan.global_min)
        if scan.global_min >= level - tol:
            return eps, scan, trace
    raise PreconditionError(f"no admissible eps in schedule; trace={trace}")


# ---------------------------------------------------------------------------
# Hessians on the Grassmannian bundle and metric variations
# ---------------------------------------------------------------------------


def _g_orthonormalize(V: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Gram-Schmidt of the rows of ``V`` in the inner product ``g``."""
    out = []
    for v in np.asarray(V, dtype=float):
        for _ in range(2):
            for b in out:
                v = v - (b @ g @ v) * b
        out.append(v / np.sqrt(v @ g @ v))
    return np.array(out)


def plane_cm(metric: ChartMetric, points, V: np.ndarray) -> np.ndarray:
    """C_m of ``span(V)`` (chart rows) at each of ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    cb = curvature_batch(metric, points)
    E, R_on, ric_on = cb.orthonormal()
    Einv = np.linalg.inv(E)
    W = np.matmul(Einv, np.asarray(V, dtype=float).T)
    W, _ = np.linalg.qr(W)
    return cm_from_projector(_rmat(R_on), ric_on, W[:, None])[:, 0]


@dataclass
class BundleHessian:
    matrix: np.ndarray
    labels: tuple[str, ...]
    blocks: dict  # name -> index array

    def block(self, a: str, b: Optional[str] = None) -> np.ndarray:
        b = a if b is None else b
        return self.matrix[np.ix_(self.blocks[a], self.blocks[b])]


def grass_hessian_cm(
    metric: ChartMetric,
    point,
    m: int,
    plane_vars: Sequence[int],
    base_vars: Optional[dict] = None,
    F=None,
    step: float = 1e-4,
    tol: Tolerances = DEFAULT,
) -> BundleHessian:
    """Hessian of ``(y, x, z) -> C_m`` around ``(point, span(d_plane_vars))``.

    The bundle is trivialized by the orthonormal basis ``E(point)``: at each
    nearby point the base plane is the span of the coordinate directions
    ``plane_vars`` and the complement is the orthogonal complement, both
    expressed in ``E``; ``z`` are :class:`GrassCoords` coordinates.
    ``base_vars`` maps block names to chart indices (default ``y`` = the
    other coordinates, ``x`` = ``plane_vars``).  Central differences with
    one Richardson refinement.  When ``F`` (an expression over the
    ``plane_vars`` coordinates) is given, ``|dF| <= tol.zero_set`` is
    required at the point.
    """
    point = np.asarray(point, dtype=float)
    n = metric.dim
    plane_vars = list(plane_vars)
    if len(plane_vars) != m:
        raise PreconditionError("plane_vars must list m coordinates")
    if F is not None:
        dF = np.asarray(F.jet(point[plane_vars]).grad)
        if np.linalg.norm(dF) > tol.zero_set:
            raise PreconditionError(f"point is not on the zero set: |dF| = {np.linalg.norm(dF):.3e}")
    if base_vars is None:
        base_vars = {"y": [a for a in range(n) if a not in plane_vars], "x": plane_vars}
    order = [a for name in base_vars for a in base_vars[name]]
    if sorted(order) != list(range(n)):
        raise PreconditionError("base_vars must partition the chart coordinates")
    other = [a for a in range(n) if a not in plane_vars]
    nz = m * (n - m)
    dim = n + nz

    def unpack(u):
        p = point.copy()
        p[order] += u[:n]
        return p, u[n:]

    def evaluate(us: np.ndarray) -> np.ndarray:
        pts = np.array([unpack(u)[0] for u in us])
        cb = curvature_batch(metric, pts)
        E, R_on, ric_on = cb.orthonormal()
        Einv = np.linalg.inv(E)
        planes = []
        for b, u in enumerate(us):
            # coordinate directions in the orthonormal basis at this point
            Vc = Einv[b][:, plane_vars]
            base, _ = np.linalg.qr(Vc)
            comp = np.linalg.qr(np.hstack([base, Einv[b][:, other]]))[0][:, m:]
            comp = comp - base @ (base.T @ comp)
            comp, _ = np.linalg.qr(comp)
            # fix QR sign ambiguity so the chart is smooth in the base point
            comp = comp * np.sign(np.einsum("ij,ij->j", comp, Einv[b][:, other]))
            base = base * np.sign(np.einsum("ij,ij->j", base, Vc))
            planes.append(GrassCoords(base, comp).plane(u[n:]))
        W = np.array(planes)[:, None]
        return cm_from_projector(_rmat(R_on), ric_on, W)[:, 0]

    def fd_hessian(h: float) -> np.ndarray:
        eye = np.eye(dim)
        us = [np.zeros(dim)]
        for a in range(dim):
            us += [h * eye[a], -h * eye[a]]
        pairs = [(a, b) for a in range(dim) for b in range(a + 1, dim)]
        for a, b in pairs:
            us += [h * (eye[a] + eye[b]), h * (eye[a] - eye[b]), h * (-eye[a] + eye[b]), -h * (eye[a] + eye[b])]
        vals = evaluate(np.array(us))
        f0 = vals[0]
        Hm = np.zeros((dim, dim))
        for a in range(dim):
            Hm[a, a] = (vals[1 + 2 * a] - 2 * f0 + vals[2 + 2 * a]) / h**2
        off = 1 + 2 * dim
        for t, (a, b) in enumerate(pairs):
            pp, pm, mp, mm = vals[off + 4 * t : off + 4 * t + 4]
            Hm[a, b] = Hm[b, a] = (pp - pm - mp + mm) / (4 * h * h)
        return Hm

    H = (4 * fd_hessian(step / 2) - fd_hessian(step)) / 3
    H = 0.5 * (H + H.T)
    labels = []
    blocks = {}
    pos = 0
    for name, idx in base_vars.items():
        blocks[name] = np.arange(pos, pos + len(idx))
        labels += [f"{name}:{metric.chart.var_names[a]}" for a in idx]
        pos += len(idx)
    blocks["z"] = np.arange(n, dim)
    labels += [f"z:{i},{a}" for i in range(m) for a in range(n - m)]
    return BundleHessian(H, tuple(labels), blocks)


def metric_variation_derivative(
    metric: ChartMetric,
    psi,
    point,
    plane_vars: Sequence[int],
    psi_vars: Optional[Sequence[int]] = None,
    steps: Sequence[float] = (1e-4, 1e-5),
    tol: Tolerances = DEFAULT,
):
    """``d/dt C_m((1 + t psi) g)`` on ``span(d_plane_vars)`` at ``t = 0``.

    ``psi`` is an expression over the chart coordinates ``psi_vars``
    (default ``plane_vars``) and must vanish with its gradient at the point.
    Returns ``(value, fd_values)`` where ``fd_values`` are the central
    differences for each step; ``value`` is the one for the first step.
    """
    from .geom import expression_coefficient

    point = np.asarray(point, dtype=float)
    n = metric.dim
    psi_vars = list(plane_vars if psi_vars is None else psi_vars)
    jet = psi.jet(point[psi_vars])
    if abs(float(jet.value)) > tol.zero_set or np.linalg.norm(np.asarray(jet.grad)) > tol.zero_set:
        raise PreconditionError("psi must vanish to first order at the point")
    V = np.zeros((len(plane_vars), n))
    for r, a in enumerate(plane_vars):
        V[r, a] = 1.0
    base = expression_coefficient(psi, psi_vars, n)
    fds = []
    for h in steps:
        vals = []
        for t in (h, -h):

            def factor(pts, t=t):
                return base(pts) * t + 1.0

            vals.append(float(plane_cm(metric.conformal(factor), point, V)[0]))
        fds.append((vals[0] - vals[1]) / (2 * h))
    return fds[0], fds


def variation_trace_formula(metric: ChartMetric, psi, point, psi_vars: Sequence[int]) -> float:
    """``-(n-1)/2 sum_a g^{aa} psi_aa`` at a point where ``psi`` and ``d psi`` vanish."""
    point = np.asarray(point, dtype=float)
    n = metric.dim
    psi_vars = list(psi_vars)
    g = curvature_batch(metric, point[None]).g[0]
    ginv = np.linalg.inv(g)
    Hs = np.zeros((n, n))
    Hs[np.ix_(psi_vars, psi_vars)] = np.asarray(psi.jet(point[psi_vars]).hess)
    return -0.5 * (n - 1) * float(np.sum(ginv * Hs))


def perturbed_positivity_check(
    build: Callable[[Optional[Callable]], ChartMetric],
    grid: ScanGrid,
    m: int,
    n: int,
    psi,
    psi_vars: Sequence[int],
    critical: np.ndarray,
    critical_dirs: Sequence[int],
    t_schedule: Sequence[float] = tuple(10.0 ** (-2 - 0.5 * j) for j in range(7)),
    opts: OptimOptions = OptimOptions(),
    symmetric_vars: Optional[Sequence[int]] = None,
    tol: Tolerances = DEFAULT,
    params: Optional[dict] = None,
):
    """Find ``t`` with ``min C_m((1 + t psi) g) >= delta > 0`` over the grid.

    ``build(None)`` returns the unperturbed metric, ``build(factor)`` the
    conformally perturbed one.  ``critical`` lists critical points of F in
    the ``psi_vars`` coordinates; ``critical_dirs`` are the positions among
    them along which F actually varies, where psi's Hessian must be negative
    definite.  Strict positivity means ``delta > tol.scan``.
    """
    import time

    from .geom import expression_coefficient
    from .report import CheckReport

    t0 = time.perf_counter()
    if not n * (m - 2) > m * m - 2:
        raise PreconditionError(f"strict gate n(m-2) > m^2-2 fails for (m, n) = ({m}, {n})")
    critical = np.atleast_2d(np.asarray(critical, dtype=float))
    dirs = list(critical_dirs)
    for q in critical:
        jet = psi.jet(q)
        H = np.asarray(jet.hess)[np.ix_(dirs, dirs)]
        if (
            abs(float(jet.value)) > tol.zero_set
            or np.linalg.norm(np.asarray(jet.grad)) > tol.zero_set
            or np.max(np.linalg.eigvalsh(H)) >= 0
        ):
            raise PreconditionError(f"psi fails the critical-point conditions at {q.tolist()}")
    nv = build(None).dim
    base = expression_coefficient(psi, psi_vars, nv)
    trace = []
    base_scan = scan_min_cm(build(None), grid, m, opts, symmetric_vars, tol)
    trace.append((0.0, base_scan.global_min))
    found = None
    for t in t_schedule:

        def factor(pts, t=t):
            return base(pts) * t + 1.0

        scan = scan_min_cm(build(factor), grid, m, opts, symmetric_vars, tol)
        trace.append((t, scan.global_min))
        if scan.global_min > tol.scan:
            found = (t, scan)
            break
    residuals = {
        # positive delta at some t in the schedule
        "no_positive_t": 0.0 if found else 1.0,
        # the unperturbed metric must not be strictly positive (zero set)
        "unperturbed_strict": max(0.0, base_scan.global_min - tol.scan),
    }
    witnesses = {"trace": trace, "unperturbed_argmin": base_scan.argmin_point}
    p = dict(params or {})
    p.update({"m": m, "n": n, "psi": str(psi)})
    if found:
        t, scan = found
        witnesses.update({"t": t, "delta": scan.global_min, "argmin": scan.argmin_point})
    return CheckReport(
        "perturbed_positivity",
        p,
        residuals,
        {"no_positive_t": 0.0, "unperturbed_strict": 0.0},
        witnesses,
        seed=opts.seed,
        runtime=time.perf_counter() - t0,
        covers=("perturbation",),
    )
