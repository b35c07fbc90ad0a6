"""Weighted Bochner identities, the Laplacian comparison bound, and the
rigidity identities of split spaces.

The comparison bound for a density f along a unit-speed minimal geodesic
from the base point is

    (n - 1) / ( v^2(r) * int_0^r v^{-2}(t) dt ),        v = e^{f/(n-1)},

which collapses to (n-1)/r for constant f.  On models verified to satisfy
CD(0,1) the weighted Laplacian of the distance function stays below this
bound; the scalar lambda = v^2 * (weighted Laplacian of r) then obeys the
comparison ODE inequality lambda' <= -lambda^2 / (v^2 (n-1)) along radial
geodesics.

Distance functions are supplied analytically (radial models, split-space r);
no boundary-value solving happens here.  Sub-level barrier arguments have no
pointwise numerical analogue, so only the smooth split-space case of the
vanishing-Laplacian identity is verified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .chart_core import (
    DensitySpec,
    MetricSpec,
    Point,
    ScalarField,
    VectorField,
    as_point,
    first_partials,
    grad_norm_squared,
    gradient_vector,
    hessian_scalar,
    inverse_metric,
    lie_derivative_metric,
    metric_at,
    ricci_numeric,
    scalar_gradient,
    weighted_laplacian,
)
from .errors import CDViolation, EmptySamples, NotDistanceFunction, ZeroRadius
from .warped_products import SplitSpaceSpec
from .weighted_curvature import GridSpec, cd_verify


# ---------------------------------------------------------------------------
# comparison bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonSample:
    r: float
    lap_f_r: float
    bound: float
    slack: float
    v_integral: float


def comparison_bound(f_samples, n: int, r: float) -> float:
    """(n-1) / (v^2(r) int_0^r v^{-2}) from samples (t, f(gamma(t))) on [0, r].

    The integrand is normalized by f(r) so constant densities cancel exactly
    rather than to quadrature accuracy.
    """
    if r <= 0:
        raise ZeroRadius(f"comparison radius must be positive, got {r}")
    arr = np.asarray(f_samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise EmptySamples("need at least 3 (t, f) samples")
    ts, fs = arr[:, 0], arr[:, 1]
    if ts[0] > 1e-12 or ts[-1] < r - 1e-9 * max(1.0, r):
        raise ValueError(f"samples must cover [0, {r}], got [{ts[0]}, {ts[-1]}]")
    mask = ts <= r + 1e-12
    ts, fs = ts[mask], fs[mask]
    integrand = np.exp(-2.0 * (fs - fs[-1]) / (n - 1))
    integral = float(simpson(integrand, x=ts))
    return (n - 1) / integral


# ---------------------------------------------------------------------------
# radial models on flat space
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialModel:
    """Flat R^n with a rotationally symmetric density f(rho), rho = |x|.

    Supplies the distance function, its weighted Laplacian, and everything
    the comparison checks need in closed form (valid away from the origin).
    """

    n: int
    f: Callable[[float], float]
    df: Callable[[float], float]
    d2f: Callable[[float], float]
    name: str = "radial model"

    def metric_spec(self) -> MetricSpec:
        n = self.n
        return MetricSpec(dim=n, g=lambda p: np.eye(n),
                          partials=lambda p: np.zeros((n, n, n)), name=self.name)

    def density(self) -> ScalarField:
        def value(p: Point) -> float:
            return self.f(float(np.linalg.norm(p)))

        def grad(p: Point) -> np.ndarray:
            rho = float(np.linalg.norm(p))
            return self.df(rho) * p / rho

        def hess(p: Point) -> np.ndarray:
            rho = float(np.linalg.norm(p))
            rr = np.outer(p, p) / (rho * rho)
            return self.d2f(rho) * rr + self.df(rho) / rho * (np.eye(self.n) - rr)

        return ScalarField(value=value, grad=grad, hess=hess)

    def r_field(self) -> ScalarField:
        def value(p: Point) -> float:
            return float(np.linalg.norm(p))

        def grad(p: Point) -> np.ndarray:
            return p / float(np.linalg.norm(p))

        def hess(p: Point) -> np.ndarray:
            rho = float(np.linalg.norm(p))
            return (np.eye(self.n) - np.outer(p, p) / (rho * rho)) / rho

        return ScalarField(value=value, grad=grad, hess=hess)

    def lap_f_r(self, rho: float) -> float:
        """Weighted Laplacian of the distance function: (n-1)/rho - f'(rho)."""
        return (self.n - 1) / rho - self.df(rho)

    def cd_grid(self, rho_grid) -> GridSpec:
        pts = np.zeros((len(rho_grid), self.n))
        pts[:, 0] = np.asarray(rho_grid, dtype=float)
        return GridSpec(points=pts, description=f"radial ray, {len(rho_grid)} radii")

    # adapters for the comparison ODE trace
    @property
    def dim(self) -> int:
        return self.n

    def v2_at(self, p: Point) -> float:
        rho = float(np.linalg.norm(p))
        return math.exp(2.0 * self.f(rho) / (self.n - 1))

    def lap_f_r_at(self, p: Point) -> float:
        return self.lap_f_r(float(np.linalg.norm(p)))


def radial_lap_f_numeric(model: RadialModel, rho: float) -> float:
    """Cross-check: weighted Laplacian of the distance function by the chart
    machinery at the point rho * e_1."""
    p = np.zeros(model.n)
    p[0] = rho
    return weighted_laplacian(model.metric_spec(), model.density(), model.r_field(), p)


def radial_comparison_check(model: RadialModel, rho_grid, quad_points: int = 401,
                            verify_cd: bool = True, cross_check_tol: float = 1e-6):
    """ComparisonSamples over the radii: analytic weighted Laplacian of the
    distance function vs the comparison bound.

    Refuses (CDViolation) when cd_verify fails CD(0,1) on the radial grid;
    each analytic Laplacian is cross-checked against the chart machinery.
    """
    rho_grid = np.asarray(rho_grid, dtype=float)
    if verify_cd:
        rep = cd_verify(model.metric_spec(), model.density(), 0.0, 1.0,
                        model.cd_grid(rho_grid))
        if not rep.passed:
            raise CDViolation(
                f"model is not CD(0,1) on the grid: min eigenvalue "
                f"{rep.min_eigenvalue:.6g} at {rep.witness}")
    samples = []
    for rho in rho_grid:
        ts = np.linspace(0.0, rho, quad_points)
        fs = np.array([model.f(t) for t in ts])
        ts_f = np.stack([ts, fs], axis=-1)
        bound = comparison_bound(ts_f, model.n, float(rho))
        lap = model.lap_f_r(float(rho))
        num = radial_lap_f_numeric(model, float(rho))
        if abs(num - lap) > cross_check_tol * max(1.0, abs(lap)):
            raise CDViolation(
                f"numeric weighted Laplacian {num:.9g} disagrees with the "
                f"closed form {lap:.9g} at rho = {rho:.6g}")
        integrand = np.exp(-2.0 * fs / (model.n - 1))
        v_int = float(simpson(integrand, x=ts))
        samples.append(ComparisonSample(r=float(rho), lap_f_r=lap, bound=bound,
                                        slack=bound - lap, v_integral=v_int))
    return samples


# ---------------------------------------------------------------------------
# Bochner identity and inequality
# ---------------------------------------------------------------------------

def _grad_norm_sq_field(spec: MetricSpec, h: ScalarField) -> ScalarField:
    return ScalarField(value=lambda q: grad_norm_squared(spec, h, q))


def _weighted_lap_field(spec: MetricSpec, density: DensitySpec, h: ScalarField) -> ScalarField:
    return ScalarField(value=lambda q: weighted_laplacian(spec, density, h, q))


def _ricci_infinity(spec: MetricSpec, density: DensitySpec, p: Point) -> np.ndarray:
    if isinstance(density, ScalarField):
        return ricci_numeric(spec, p) + hessian_scalar(spec, density, p)
    if isinstance(density, VectorField):
        return ricci_numeric(spec, p) + 0.5 * lie_derivative_metric(spec, density, p)
    raise TypeError(f"expected a scalar or vector density, got {type(density)!r}")


def bochner_residual(spec: MetricSpec, density: DensitySpec, h, p: Point) -> float:
    """|LHS - RHS| of the weighted Bochner identity at p:

        (1/2) Lap_f |grad h|^2
            = |Hess h|^2 + Ric_f^inf(grad h, grad h) + g(grad h, grad Lap_f h),

    with Lap_f and Ric_f^inf built from the density (scalar or vector
    variant).  Derived fields are differenced at the coarse step to keep the
    third-derivative noise inside the 1e-4 budget.
    """
    from .chart_core import as_scalar_field

    h = as_scalar_field(h)
    p = as_point(p, spec.dim)
    coarse = spec.fd.h3

    s_field = _grad_norm_sq_field(spec, h)
    lhs = 0.5 * weighted_laplacian(spec, density, s_field, p, step=coarse)

    H = hessian_scalar(spec, h, p)
    ginv = inverse_metric(spec, p)
    hess_sq = float(np.einsum("ik,jl,ij,kl->", ginv, ginv, H, H))

    gradv = gradient_vector(spec, h, p)
    ric_term = float(gradv @ _ricci_infinity(spec, density, p) @ gradv)

    q_field = _weighted_lap_field(spec, density, h)
    steps = spec.fd.scaled(p, coarse)
    dq = first_partials(lambda x: float(q_field.value(x)), p, steps)
    last = float(gradv @ dq)

    return abs(lhs - (hess_sq + ric_term + last))


def bochner_inequality_margin(spec: MetricSpec, density: DensitySpec, K: float, m: int,
                              r_field, p: Point) -> float:
    """LHS - RHS of the distance-function Bochner inequality with v = e^{f/m}:

        (1/2) v^2 Lap_f |grad h|^2
            >= v^2 (Lap_f h)^2 / m + v^2 K |grad h|^2 + g(grad h, grad(v^2 Lap_f h)).

    Valid when the Hessian of h has at most m nonzero eigenvalues and the
    triple satisfies CD(K, n-m) near p (the caller's responsibility; see
    cd_verify).  Raises NotDistanceFunction unless |grad h| = 1 within 1e-6.
    Only scalar densities carry a pointwise potential e^{f/m}.
    """
    from .chart_core import as_scalar_field

    if not isinstance(density, ScalarField):
        raise TypeError("the inequality margin needs a scalar density")
    if not 1 <= m <= spec.dim:
        raise ValueError(f"m must lie in 1..{spec.dim}, got {m}")
    h = as_scalar_field(r_field)
    p = as_point(p, spec.dim)
    gn = math.sqrt(grad_norm_squared(spec, h, p))
    if abs(gn - 1.0) > 1e-6:
        raise NotDistanceFunction(f"|grad h| = {gn:.9g} at {p}, expected 1 within 1e-6")
    coarse = spec.fd.h3

    def v2(q: Point) -> float:
        return math.exp(2.0 * float(density.value(q)) / m)

    s_field = _grad_norm_sq_field(spec, h)
    lhs = 0.5 * v2(p) * weighted_laplacian(spec, density, s_field, p, step=coarse)

    lap_f_h = weighted_laplacian(spec, density, h, p)
    rhs = v2(p) * (lap_f_h ** 2 / m + K * gn ** 2)

    q_field = ScalarField(value=lambda x: v2(x) * weighted_laplacian(spec, density, h, x))
    steps = spec.fd.scaled(p, coarse)
    dq = first_partials(lambda x: float(q_field.value(x)), p, steps)
    rhs += float(gradient_vector(spec, h, p) @ dq)
    return lhs - rhs


# ---------------------------------------------------------------------------
# comparison ODE residual along radial traces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RiccatiTraceReport:
    ts: np.ndarray
    lam: np.ndarray
    residuals: np.ndarray  # lambda' + lambda^2/(v^2 (n-1)) at interior samples
    max_residual: float


def riccati_comparison_trace(model, trace) -> RiccatiTraceReport:
    """Sample lambda = v^2 Lap_f r along a radial trace and check the
    comparison ODE residual lambda' + lambda^2/(v^2 (n-1)) <= 0.

    ``model`` must provide dim, v2_at(p) and lap_f_r_at(p) (radial models
    and split spaces both do); lambda' is a central difference on the trace
    grid, so residuals are reported at interior samples only.
    """
    ts = trace.ts
    if ts.size < 3:
        raise EmptySamples("need at least 3 trace samples for the ODE residual")
    n = model.dim
    lam = np.array([model.v2_at(p) * model.lap_f_r_at(p) for p in trace.positions])
    v2 = np.array([model.v2_at(p) for p in trace.positions])
    dt = ts[1] - ts[0]
    dlam = (lam[2:] - lam[:-2]) / (2.0 * dt)
    residuals = dlam + lam[1:-1] ** 2 / (v2[1:-1] * (n - 1))
    return RiccatiTraceReport(ts=ts[1:-1], lam=lam, residuals=residuals,
                              max_residual=float(np.max(residuals)))


# ---------------------------------------------------------------------------
# rigidity identities on split spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RigidityReport:
    """Worst deviations of the split-space identities over the sampled points:
    |grad r| = 1, Lap_f r = 0 (equivalently for -r, the analytic stand-in for
    the opposite-ray pair), Hess r proportional to the slice metric, and the
    vanishing radial generalized Ricci at N = 1."""

    grad_norm_dev: float
    lap_f_r_dev: float
    hess_proportionality_dev: float
    radial_ricci_dev: float
    busemann_pair_dev: float
    points: np.ndarray

    def passes(self, tol_lap: float = 1e-6, tol_hess: float = 1e-5,
               tol_ric: float = 1e-6) -> bool:
        return (self.grad_norm_dev <= 1e-9 and self.lap_f_r_dev <= tol_lap
                and self.hess_proportionality_dev <= tol_hess
                and self.radial_ricci_dev <= tol_ric
                and self.busemann_pair_dev <= tol_lap)


def _r_coordinate_field(n: int, sign: float = 1.0) -> ScalarField:
    e0 = np.eye(n)[0]
    return ScalarField(value=lambda q: sign * q[0], grad=lambda q: sign * e0,
                       hess=lambda q: np.zeros((n, n)))


def rigidity_check(split: SplitSpaceSpec, points=None, n_points: int = 50,
                   seed: int = 0, r_range=(-5.0, 5.0)) -> RigidityReport:
    """Verify the split-space rigidity identities at sampled points."""
    from .weighted_curvature import generalized_ricci

    spec = split.metric_spec()
    density = split.density()
    n = split.n
    if points is None:
        rng = np.random.default_rng(seed)
        box = split.fiber.safe_box
        inset = 0.05 * (box[:, 1] - box[:, 0])
        pts = np.empty((n_points, n))
        pts[:, 0] = rng.uniform(r_range[0], r_range[1], n_points)
        for j in range(n - 1):
            pts[:, 1 + j] = rng.uniform(box[j, 0] + inset[j], box[j, 1] - inset[j], n_points)
    else:
        pts = np.atleast_2d(np.asarray(points, dtype=float))

    r_plus = _r_coordinate_field(n, 1.0)
    r_minus = _r_coordinate_field(n, -1.0)
    grad_dev = lap_dev = hess_dev = ric_dev = buse_dev = 0.0
    for p in pts:
        grad_dev = max(grad_dev, abs(math.sqrt(grad_norm_squared(spec, r_plus, p)) - 1.0))
        lap_p = weighted_laplacian(spec, density, r_plus, p)
        lap_m = weighted_laplacian(spec, density, r_minus, p)
        lap_dev = max(lap_dev, abs(lap_p))
        buse_dev = max(buse_dev, abs(lap_p), abs(lap_m))

        H = hessian_scalar(spec, r_plus, p)
        g = metric_at(spec, p)
        g_slice = g.copy()
        g_slice[0, :] = 0.0
        g_slice[:, 0] = 0.0
        df = scalar_gradient(spec, density, p)
        coeff = float(df[0]) / (n - 1)  # g(grad f, grad r) = d_r f in this chart
        hess_dev = max(hess_dev, float(np.max(np.abs(H - coeff * g_slice))))

        ric1 = generalized_ricci(spec, density, 1.0, p)
        ric_dev = max(ric_dev, abs(float(ric1[0, 0])))
    return RigidityReport(grad_norm_dev=grad_dev, lap_f_r_dev=lap_dev,
                          hess_proportionality_dev=hess_dev, radial_ricci_dev=ric_dev,
                          busemann_pair_dev=buse_dev, points=pts)
