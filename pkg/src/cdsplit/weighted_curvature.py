"""Generalized Ricci tensors and curvature-dimension verdicts.

The generalized Ricci tensor of a metric with scalar density f and
dimension parameter N (finite or +inf, N != n) is

    Ric + Hess f - (df (x) df) / (N - n),

with the last term dropped at N = +inf.  For a vector density X the Hessian
is replaced by half the Lie derivative of the metric and df by the dual
1-form of X.  The CD(lambda, N) condition asks this tensor to dominate
lambda * g pointwise; ``cd_verify`` samples it over a grid and reports the
minimum relative eigenvalue with a witness point.  A grid "pass" means no
violation was found at the sampled points; it is never a proof.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .chart_core import (
    DensitySpec,
    MetricSpec,
    Point,
    ScalarField,
    VectorField,
    as_point,
    hessian_scalar,
    lie_derivative_metric,
    metric_at,
    ricci_numeric,
    scalar_gradient,
)
from .errors import DimensionClash, EmptyGrid, SingularMetric
from .warped_products import SplitSpaceSpec

TOL_CD = 1e-7

CD_CAVEAT = ("no violation found at sampled grid points; sampling is chart-local "
             "and does not certify the condition globally, and no completeness "
             "claim is made for the underlying metric")


def _check_N(N: float, n: int) -> None:
    if not math.isinf(N) and N == n:
        raise DimensionClash(f"N = n = {n} leaves the N - n denominator zero")


def generalized_ricci_gradient(spec: MetricSpec, f, N: float, p: Point) -> np.ndarray:
    """Ric + Hess f - df (x) df / (N - n) in chart components (N = inf drops
    the last term)."""
    _check_N(N, spec.dim)
    p = as_point(p, spec.dim)
    out = ricci_numeric(spec, p) + hessian_scalar(spec, f, p)
    if not math.isinf(N):
        df = scalar_gradient(spec, f, p)
        out = out - np.outer(df, df) / (N - spec.dim)
    return out


def generalized_ricci_vector(spec: MetricSpec, X: VectorField, N: float, p: Point) -> np.ndarray:
    """Ric + (1/2) L_X g - Xb (x) Xb / (N - n) with Xb_i = g_ij X^j."""
    _check_N(N, spec.dim)
    p = as_point(p, spec.dim)
    out = ricci_numeric(spec, p) + 0.5 * lie_derivative_metric(spec, X, p)
    if not math.isinf(N):
        Xb = metric_at(spec, p) @ np.asarray(X.value(p), dtype=float)
        out = out - np.outer(Xb, Xb) / (N - spec.dim)
    return out


def generalized_ricci(spec: MetricSpec, density: DensitySpec, N: float, p: Point) -> np.ndarray:
    """Dispatch on the density variant (scalar potential vs vector field)."""
    if isinstance(density, ScalarField):
        return generalized_ricci_gradient(spec, density, N, p)
    if isinstance(density, VectorField):
        return generalized_ricci_vector(spec, density, N, p)
    raise TypeError(f"expected a scalar or vector density, got {type(density)!r}")


def min_relative_eigenvalue(form: np.ndarray, metric: np.ndarray) -> float:
    """Smallest mu with form v = mu metric v; `form >= lam * metric` iff
    the return value is >= lam.  Solved by the symmetric-definite
    generalized eigensolver (Cholesky reduction inside LAPACK)."""
    form = np.asarray(form, dtype=float)
    metric = np.asarray(metric, dtype=float)
    try:
        vals = scipy.linalg.eigh(0.5 * (form + form.T), 0.5 * (metric + metric.T),
                                 eigvals_only=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SingularMetric(f"metric factor not positive definite: {exc}") from exc
    return float(vals[0])


# ---------------------------------------------------------------------------
# grids and CD reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    points: np.ndarray  # (k, n)
    description: str

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[0] == 0:
            raise EmptyGrid(f"grid '{self.description}' has no points")


def box_grid(bounds, counts, description: str | None = None) -> GridSpec:
    """Uniform box grid; bounds is (n, 2), counts one integer per axis."""
    bounds = np.asarray(bounds, dtype=float)
    axes = [np.linspace(lo, hi, int(c)) for (lo, hi), c in zip(bounds, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    if description is None:
        description = "box grid " + " x ".join(
            f"[{lo:g},{hi:g}]:{int(c)}" for (lo, hi), c in zip(bounds, counts))
    return GridSpec(points=pts, description=description)


def split_grid(split: SplitSpaceSpec, r_range=(-10.0, 10.0), r_count: int = 201,
               fiber_count: int = 9) -> GridSpec:
    """Default sampling grid on a split space: uniform in r, uniform box on
    the fiber inset 2% from the safe box so stencils stay interior."""
    box = np.asarray(split.fiber.safe_box, dtype=float)
    inset = 0.02 * (box[:, 1] - box[:, 0])
    fiber_bounds = np.stack([box[:, 0] + inset, box[:, 1] - inset], axis=-1)
    bounds = np.vstack([np.asarray(r_range, dtype=float), fiber_bounds])
    counts = [r_count] + [fiber_count] * split.fiber.dim
    desc = (f"r in [{r_range[0]:g},{r_range[1]:g}] x {r_count}, fiber box "
            f"{fiber_count} per axis (2% inset)")
    return GridSpec(points=box_grid(bounds, counts).points, description=desc)


@dataclass(frozen=True)
class CDReport:
    """Result of sampling the CD(lambda, N) inequality over a grid.

    ``passed`` is the boolean verdict (min eigenvalue >= -tol); ``verdict``
    refines it to 'pass' / 'boundary' / 'fail', with 'boundary' when the
    minimum sits within tol of zero.
    """

    verdict: str
    passed: bool
    lam: float
    N: float
    min_eigenvalue: float
    witness: np.ndarray
    points: np.ndarray
    eigenvalues: np.ndarray
    grid_spec: str
    tol: float
    caveat: str = CD_CAVEAT


def _thread_count() -> int:
    raw = os.environ.get("CDSPLIT_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def cd_verify(spec: MetricSpec, density: DensitySpec, lam: float, N: float,
              grid: GridSpec, tol: float = TOL_CD) -> CDReport:
    """Evaluate the minimum relative eigenvalue of Ric^N - lambda g over the
    grid.  Deterministic given the grid; grid evaluation may be parallel
    (CDSPLIT_THREADS) but results merge in grid order."""
    _check_N(N, spec.dim)
    pts = grid.points
    if pts.shape[0] == 0:
        raise EmptyGrid("cd_verify needs a nonempty grid")

    def one(i: int) -> float:
        p = pts[i]
        form = generalized_ricci(spec, density, N, p) - lam * metric_at(spec, p)
        return min_relative_eigenvalue(form, metric_at(spec, p))

    nthreads = _thread_count()
    if nthreads > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            mins = np.fromiter(pool.map(one, range(pts.shape[0])), dtype=float,
                               count=pts.shape[0])
    else:
        mins = np.fromiter((one(i) for i in range(pts.shape[0])), dtype=float,
                           count=pts.shape[0])

    k = int(np.argmin(mins))
    mn = float(mins[k])
    if mn < -tol:
        verdict = "fail"
    elif mn <= tol:
        verdict = "boundary"
    else:
        verdict = "pass"
    return CDReport(verdict=verdict, passed=mn >= -tol, lam=lam, N=N,
                    min_eigenvalue=mn, witness=pts[k].copy(), points=pts,
                    eigenvalues=mins, grid_spec=grid.description, tol=tol)


# ---------------------------------------------------------------------------
# weighted mean curvature of level sets {r = r0}
# ---------------------------------------------------------------------------

def weighted_mean_curvature(split: SplitSpaceSpec, r0: float,
                            density: DensitySpec | None = None,
                            fiber_point: np.ndarray | None = None) -> float:
    """Weighted mean curvature H - g(grad f, nu) of the slice {r = r0} with
    respect to nu = d/dr, evaluated at the fiber basepoint by default.

    ``density`` defaults to the split density phi + f_L, for which the result
    vanishes identically; pass another density (for example the zero field)
    to evaluate the same slice under a different weight.
    """
    y = split.fiber_basepoint() if fiber_point is None else np.asarray(fiber_point, float)
    p = np.concatenate([[float(r0)], y])
    spec = split.metric_spec()
    n = split.n
    if density is None:
        density = split.density()
    r_field = ScalarField(
        value=lambda q: q[0],
        grad=lambda q: np.eye(n)[0],
        hess=lambda q: np.zeros((n, n)),
    )
    from .chart_core import inverse_metric

    H = float(np.sum(inverse_metric(spec, p) * hessian_scalar(spec, r_field, p)))
    if isinstance(density, ScalarField):
        drift = float(scalar_gradient(spec, density, p)[0])
    else:
        # g(X, nu) with nu = d/dr: the radial covariant component of X
        Xv = np.asarray(density.value(p), dtype=float)
        drift = float((metric_at(spec, p) @ Xv)[0])
    return H - drift
