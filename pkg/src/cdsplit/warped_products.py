"""Closed-form curvature and criteria for product charts over a line.

The metrics handled here live on R x L in coordinates (r, y) and have the
form ``dr^2 + e^{2 psi/(n-1)} h_L`` for a fiber metric ``h_L`` on L.  When
``psi`` depends only on r the metric is a warped product; a *split space*
additionally carries the density ``f = phi(r) + f_L(y)``.

The module provides the closed-form Ricci tensor of such charts, the
supremum criterion deciding when a split space satisfies the CD(0,1)
inequality, the blow-up obstruction ODE behind that criterion, and the
radial curvature identity used by the product-splitting argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .chart_core import (
    FDSteps,
    MetricSpec,
    Point,
    ScalarField,
    as_point,
    first_partials,
    metric_at,
    ricci_numeric,
)
from .errors import DivergentThreshold, NonFinite, StepOverflow

GOLDEN_WIDTH = 1e-10
BLOW_UP_THRESHOLD = -50.0
VELOCITY_GUARD = 1e8
EXP_CAP = 500.0  # caps exponents inside the obstruction ODE so stages stay finite


# ---------------------------------------------------------------------------
# fibers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EuclideanFiber:
    """Flat R^m fiber in Cartesian coordinates."""

    dim: int
    box: float = 10.0

    def metric(self, y: np.ndarray) -> np.ndarray:
        return np.eye(self.dim)

    def partials(self, y: np.ndarray) -> np.ndarray:
        return np.zeros((self.dim,) * 3)

    def christoffel(self, y: np.ndarray) -> np.ndarray:
        return np.zeros((self.dim,) * 3)

    def ricci(self, y: np.ndarray) -> np.ndarray:
        return np.zeros((self.dim, self.dim))

    @property
    def safe_box(self) -> np.ndarray:
        return np.array([[-self.box, self.box]] * self.dim)

    def distance(self, y1: np.ndarray, y2: np.ndarray) -> float:
        return float(np.linalg.norm(np.asarray(y2) - np.asarray(y1)))


@dataclass(frozen=True)
class SphereFiber:
    """Round sphere of dimension >= 2 in a single stereographic chart.

    The chart metric is conformal, ``c(y) delta_ij`` with
    ``c = 4 R^4 / (R^2 + |y|^2)^2``, and the radius R is chosen so that the
    Ricci tensor equals ``einstein_constant`` times the metric.
    """

    dim: int
    einstein_constant: float
    box: float = 3.0

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("sphere fibers need dimension >= 2")
        if self.einstein_constant <= 0:
            raise ValueError("einstein_constant must be positive")

    @property
    def radius_sq(self) -> float:
        return (self.dim - 1) / self.einstein_constant

    def _conf(self, y: np.ndarray) -> float:
        s = self.radius_sq + float(y @ y)
        return 4.0 * self.radius_sq ** 2 / (s * s)

    def metric(self, y: np.ndarray) -> np.ndarray:
        return self._conf(y) * np.eye(self.dim)

    def partials(self, y: np.ndarray) -> np.ndarray:
        s = self.radius_sq + float(y @ y)
        dc = -16.0 * self.radius_sq ** 2 * np.asarray(y) / s ** 3
        D = np.zeros((self.dim,) * 3)
        for k in range(self.dim):
            D[k] = dc[k] * np.eye(self.dim)
        return D

    def christoffel(self, y: np.ndarray) -> np.ndarray:
        # conformal metric e^{2u} delta with u_k = -2 y_k / (R^2 + |y|^2)
        s = self.radius_sq + float(y @ y)
        u = -2.0 * np.asarray(y) / s
        m = self.dim
        G = np.zeros((m, m, m))
        eye = np.eye(m)
        for a in range(m):
            G[a] = np.outer(eye[a], u) + np.outer(u, eye[a]) - u[a] * eye
        return G

    def ricci(self, y: np.ndarray) -> np.ndarray:
        return self.einstein_constant * self.metric(y)

    @property
    def safe_box(self) -> np.ndarray:
        return np.array([[-self.box, self.box]] * self.dim)

    def embed(self, y: np.ndarray) -> np.ndarray:
        """Chart point -> ambient sphere point in R^{dim+1}."""
        y = np.asarray(y, dtype=float)
        R2 = self.radius_sq
        s = R2 + float(y @ y)
        R = math.sqrt(R2)
        return np.concatenate([2.0 * R2 * y / s, [R * (float(y @ y) - R2) / s]])

    def distance(self, y1: np.ndarray, y2: np.ndarray) -> float:
        R = math.sqrt(self.radius_sq)
        cosang = float(self.embed(y1) @ self.embed(y2)) / self.radius_sq
        return R * math.acos(min(1.0, max(-1.0, cosang)))


@dataclass(frozen=True)
class TorusFiber:
    """Flat torus with angle coordinates; period L_i gives g_ii = (L_i/2pi)^2."""

    dim: int
    periods: tuple[float, ...]
    box: float = 10.0

    def __post_init__(self):
        if len(self.periods) != self.dim:
            raise ValueError("one period per fiber dimension required")

    def _diag(self) -> np.ndarray:
        return np.array([(L / (2.0 * math.pi)) ** 2 for L in self.periods])

    def metric(self, y: np.ndarray) -> np.ndarray:
        return np.diag(self._diag())

    def partials(self, y: np.ndarray) -> np.ndarray:
        return np.zeros((self.dim,) * 3)

    def christoffel(self, y: np.ndarray) -> np.ndarray:
        return np.zeros((self.dim,) * 3)

    def ricci(self, y: np.ndarray) -> np.ndarray:
        return np.zeros((self.dim, self.dim))

    @property
    def safe_box(self) -> np.ndarray:
        return np.array([[-self.box, self.box]] * self.dim)

    def distance(self, y1: np.ndarray, y2: np.ndarray) -> float:
        d = np.asarray(y2) - np.asarray(y1)
        return float(math.sqrt(float(d * d @ self._diag())))


@dataclass(frozen=True)
class CustomFiber:
    """Fiber backed by an arbitrary chart MetricSpec (derivatives may be FD)."""

    spec: MetricSpec

    @property
    def dim(self) -> int:
        return self.spec.dim

    def metric(self, y: np.ndarray) -> np.ndarray:
        return metric_at(self.spec, as_point(y, self.dim))

    def partials(self, y: np.ndarray) -> np.ndarray:
        from .chart_core import metric_partials_at

        return metric_partials_at(self.spec, as_point(y, self.dim))

    def christoffel(self, y: np.ndarray) -> np.ndarray:
        from .chart_core import christoffel

        return christoffel(self.spec, as_point(y, self.dim))

    def ricci(self, y: np.ndarray) -> np.ndarray:
        return ricci_numeric(self.spec, as_point(y, self.dim))

    @property
    def safe_box(self) -> np.ndarray:
        if self.spec.domain is not None:
            return self.spec.domain
        return np.array([[-10.0, 10.0]] * self.dim)

    def distance(self, y1, y2):  # chart distance unavailable in general
        return None


FiberSpec = Union[EuclideanFiber, SphereFiber, TorusFiber, CustomFiber]


# ---------------------------------------------------------------------------
# product specs
# ---------------------------------------------------------------------------

def _product_metric_spec(n: int, psi: ScalarField, fiber: FiberSpec, name: str,
                         fd: FDSteps) -> MetricSpec:
    c = 1.0 / (n - 1)

    def g(p: Point) -> np.ndarray:
        y = p[1:]
        w = math.exp(2.0 * c * float(psi.value(p)))
        out = np.zeros((n, n))
        out[0, 0] = 1.0
        out[1:, 1:] = w * fiber.metric(y)
        return out

    partials = None
    if psi.grad is not None:
        def partials(p: Point) -> np.ndarray:
            y = p[1:]
            w = math.exp(2.0 * c * float(psi.value(p)))
            h = fiber.metric(y)
            dpsi = np.asarray(psi.grad(p), dtype=float)
            dh = fiber.partials(y)
            D = np.zeros((n, n, n))
            D[0, 1:, 1:] = 2.0 * c * dpsi[0] * w * h
            for k in range(n - 1):
                D[1 + k, 1:, 1:] = 2.0 * c * dpsi[1 + k] * w * h + w * dh[k]
            return D

    domain = np.vstack([np.array([[-np.inf, np.inf]]), fiber.safe_box])
    return MetricSpec(dim=n, g=g, partials=partials, domain=domain, name=name,
                      coord_names=("r",) + tuple(f"y{i + 1}" for i in range(n - 1)), fd=fd)


@dataclass(frozen=True)
class TwistedProductSpec:
    """Chart metric dr^2 + e^{2 psi(r,y)/(n-1)} h_L(y) on R x L."""

    n: int
    psi: ScalarField
    fiber: FiberSpec
    name: str = ""
    fd: FDSteps = field(default_factory=FDSteps)

    def __post_init__(self):
        if self.fiber.dim != self.n - 1:
            raise ValueError(f"fiber dimension {self.fiber.dim} != n-1 = {self.n - 1}")

    def metric_spec(self) -> MetricSpec:
        return _product_metric_spec(self.n, self.psi, self.fiber, self.name, self.fd)

    def warp(self, p: Point) -> float:
        """Conformal factor e^{2 psi/(n-1)} in front of the fiber metric."""
        return math.exp(2.0 * float(self.psi.value(p)) / (self.n - 1))


@dataclass(frozen=True)
class SplitSpaceSpec:
    """Warped product dr^2 + e^{2 phi(r)/(n-1)} g_L with density phi(r) + f_L(y).

    ``phi``, ``dphi``, ``d2phi`` are callables of the single variable r.
    ``f_L`` (optional) is a scalar field on the fiber coordinates.
    """

    n: int
    phi: Callable[[float], float]
    dphi: Callable[[float], float]
    d2phi: Callable[[float], float]
    fiber: FiberSpec
    f_L: ScalarField | None = None
    name: str = ""
    fd: FDSteps = field(default_factory=FDSteps)

    def __post_init__(self):
        if self.fiber.dim != self.n - 1:
            raise ValueError(f"fiber dimension {self.fiber.dim} != n-1 = {self.n - 1}")

    def as_twisted(self) -> TwistedProductSpec:
        n = self.n

        def grad(p: Point) -> np.ndarray:
            out = np.zeros(n)
            out[0] = self.dphi(p[0])
            return out

        def hess(p: Point) -> np.ndarray:
            out = np.zeros((n, n))
            out[0, 0] = self.d2phi(p[0])
            return out

        psi = ScalarField(value=lambda p: self.phi(p[0]), grad=grad, hess=hess)
        return TwistedProductSpec(n=n, psi=psi, fiber=self.fiber, name=self.name, fd=self.fd)

    def metric_spec(self) -> MetricSpec:
        return self.as_twisted().metric_spec()

    def warp(self, r: float) -> float:
        """Warping factor u(r) = e^{phi(r)/(n-1)}."""
        return math.exp(self.phi(r) / (self.n - 1))

    def density(self) -> ScalarField:
        """The split density f(r, y) = phi(r) + f_L(y) with analytic partials."""
        n = self.n
        fL = self.f_L

        def value(p: Point) -> float:
            out = self.phi(p[0])
            if fL is not None:
                out += float(fL.value(p[1:]))
            return out

        def grad(p: Point) -> np.ndarray:
            out = np.zeros(n)
            out[0] = self.dphi(p[0])
            if fL is not None and fL.grad is not None:
                out[1:] = fL.grad(p[1:])
            return out

        def hess(p: Point) -> np.ndarray:
            out = np.zeros((n, n))
            out[0, 0] = self.d2phi(p[0])
            if fL is not None and fL.hess is not None:
                out[1:, 1:] = fL.hess(p[1:])
            return out

        has_grad = fL is None or fL.grad is not None
        has_hess = fL is None or fL.hess is not None
        return ScalarField(value=value, grad=grad if has_grad else None,
                           hess=hess if has_hess else None)

    def fiber_basepoint(self) -> np.ndarray:
        box = self.fiber.safe_box
        return 0.5 * (box[:, 0] + box[:, 1])

    # adapters used by the comparison suite along radial geodesics
    @property
    def dim(self) -> int:
        return self.n

    def v2_at(self, p: Point) -> float:
        f = float(self.density().value(as_point(p, self.n)))
        return math.exp(2.0 * f / (self.n - 1))

    def lap_f_r_at(self, p: Point) -> float:
        return 0.0


def validate_split(split: SplitSpaceSpec, r_samples=np.linspace(-5.0, 5.0, 21)) -> float:
    """Check |dphi - FD(phi)| relative error over sample radii; returns the max."""
    worst = 0.0
    h = 1e-6
    for r in r_samples:
        hr = h * max(1.0, abs(r))
        fd = (split.phi(r + hr) - split.phi(r - hr)) / (2.0 * hr)
        d = split.dphi(r)
        err = abs(fd - d) / max(1.0, abs(d))
        worst = max(worst, err)
    if worst > 1e-6:
        raise ValueError(f"phi derivative callables inconsistent with phi (error {worst:.3g})")
    return worst


# ---------------------------------------------------------------------------
# closed-form Ricci tensor
# ---------------------------------------------------------------------------

def _psi_derivatives(spec: TwistedProductSpec, p: Point):
    psi = spec.psi
    if psi.grad is not None:
        grad = np.asarray(psi.grad(p), dtype=float)
    else:
        steps = spec.fd.scaled(p, spec.fd.h1)
        grad = first_partials(lambda q: float(psi.value(q)), p, steps)
    if psi.hess is not None:
        hess = np.asarray(psi.hess(p), dtype=float)
    else:
        from .chart_core import second_partials

        steps = spec.fd.scaled(p, spec.fd.h2)
        hess = second_partials(lambda q: float(psi.value(q)), p, steps)
    return grad, hess


def twisted_ricci_analytic(spec: TwistedProductSpec, p: Point) -> np.ndarray:
    """Closed-form Ricci tensor of dr^2 + e^{2 psi/(n-1)} h_L in (r, y) coordinates.

    Radial-radial component: -psi_rr - psi_r^2/(n-1).
    Radial-fiber components: ((2-n)/(n-1)) psi_{r a}.
    Fiber block: fiber Ricci plus the full-metric Hessian of psi weighted by
    1/(n-1), the fiber-metric Hessian weighted by (2-n)/(n-1), the gradient
    product term d_a psi d_b psi/(n-1), and the trace term
    -(Lap psi + |grad psi|^2/(n-1)) g/(n-1).  Derived from the product-chart
    Christoffel symbols; the finite-difference Ricci is the regression oracle.
    """
    p = as_point(p, spec.n)
    n = spec.n
    c = 1.0 / (n - 1)
    y = p[1:]
    fiber = spec.fiber
    h = fiber.metric(y)
    hinv = np.linalg.inv(h)
    GL = fiber.christoffel(y)
    ricL = fiber.ricci(y)
    grad, hess = _psi_derivatives(spec, p)
    w = math.exp(2.0 * c * float(spec.psi.value(p)))

    gy = grad[1:]
    hessL = hess[1:, 1:] - np.einsum("cab,c->ab", GL, gy)
    grad_h2 = float(gy @ hinv @ gy)

    hess_psi = np.empty((n, n))
    hess_psi[0, 0] = hess[0, 0]
    hess_psi[0, 1:] = hess_psi[1:, 0] = hess[0, 1:] - c * grad[0] * gy
    hess_psi[1:, 1:] = (hessL + c * grad[0] ** 2 * w * h
                        - c * (2.0 * np.outer(gy, gy) - grad_h2 * h))

    lap = hess_psi[0, 0] + float(np.sum(hinv * hess_psi[1:, 1:])) / w
    grad_g2 = grad[0] ** 2 + grad_h2 / w

    ric = np.empty((n, n))
    ric[0, 0] = -hess[0, 0] - c * grad[0] ** 2
    ric[0, 1:] = ric[1:, 0] = (2.0 - n) * c * hess[0, 1:]
    ric[1:, 1:] = (ricL + c * hess_psi[1:, 1:] + (2.0 - n) * c * hessL
                   + c * np.outer(gy, gy) - c * (lap + c * grad_g2) * w * h)
    if not np.all(np.isfinite(ric)):
        raise NonFinite(f"closed-form Ricci tensor at {p}")
    return ric


def mixed_partial_residual(spec: TwistedProductSpec, points) -> float:
    """Max |psi_{r a}| over the points: zero exactly when the twist splits off r."""
    worst = 0.0
    for p in points:
        p = as_point(p, spec.n)
        _, hess = _psi_derivatives(spec, p)
        worst = max(worst, float(np.max(np.abs(hess[0, 1:]))))
    return worst


# ---------------------------------------------------------------------------
# CD(0,1) threshold for split spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdReport:
    value: float
    r_at: float
    diverged: bool


def _golden_max(fn: Callable[[float], float], a: float, b: float,
                width: float = GOLDEN_WIDTH) -> tuple[float, float]:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > width:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    return x, fn(x)


def split_cd_threshold(split: SplitSpaceSpec, r_range: tuple[float, float],
                       n_grid: int = 201) -> ThresholdReport:
    """Supremum of phi''(r) e^{2 phi(r)/(n-1)} / (n-1) over the range.

    Grid scan followed by golden-section refinement around the best cell
    (to interval width 1e-10).  The ``diverged`` flag is set when the
    maximizer sits on the range boundary and the objective grew monotonically
    over the trailing samples, signalling that the true supremum lies outside
    the scanned window.
    """
    a, b = float(r_range[0]), float(r_range[1])
    if not (np.isfinite(a) and np.isfinite(b) and a < b):
        raise ValueError(f"invalid range {r_range}")
    n = split.n

    def q(r: float) -> float:
        try:
            val = split.d2phi(r) * math.exp(2.0 * split.phi(r) / (n - 1)) / (n - 1)
        except OverflowError as exc:
            raise NonFinite(f"threshold objective overflows at r = {r}") from exc
        if not math.isfinite(val):
            raise NonFinite(f"threshold objective non-finite at r = {r}")
        return val

    rs = np.linspace(a, b, n_grid)
    vals = np.array([q(r) for r in rs])
    k = int(np.argmax(vals))
    lo = rs[max(0, k - 1)]
    hi = rs[min(n_grid - 1, k + 1)]
    r_at, value = _golden_max(q, lo, hi)
    if vals[k] > value:
        r_at, value = rs[k], vals[k]

    diverged = False
    tail = max(10, n_grid // 10)
    if k == n_grid - 1 and np.all(np.diff(vals[-tail:]) > 0):
        diverged = True
    if k == 0 and np.all(np.diff(vals[:tail]) < 0):
        diverged = True
    return ThresholdReport(value=float(value), r_at=float(r_at), diverged=diverged)


def sphere_example_lambda(split: SplitSpaceSpec, r_range: tuple[float, float] = (-10.0, 10.0),
                          n_grid: int = 201) -> float:
    """Minimal Einstein constant of a round-sphere fiber making the split
    space with f = phi satisfy CD(0,1); equals the threshold supremum.

    Raises DivergentThreshold when the supremum scan flags divergence (the
    bounded-warp hypothesis fails on the scanned range).
    """
    if not isinstance(split.fiber, SphereFiber):
        raise ValueError("sphere_example_lambda needs a round-sphere fiber")
    if split.f_L is not None:
        basept = split.fiber_basepoint()
        if abs(float(split.f_L.value(basept))) > 0.0:
            raise ValueError("sphere_example_lambda assumes a vanishing fiber density")
    rep = split_cd_threshold(split, r_range, n_grid)
    if rep.diverged:
        raise DivergentThreshold(
            f"threshold still growing at range boundary r = {rep.r_at:.6g}")
    return rep.value


# ---------------------------------------------------------------------------
# blow-up obstruction ODE
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RiccatiReport:
    """Outcome of integrating y'' = -a e^{-2y}.

    ``blow_up_time`` is positive for a forward escape, negative for a
    backward one; samples are (t, y, y') sorted by t.
    """

    blow_up: bool
    blow_up_time: float | None
    ts: np.ndarray
    ys: np.ndarray
    yps: np.ndarray
    threshold_used: float


def _integrate_obstruction(a: float, y0: float, y0p: float, t_max: float, dt: float,
                           threshold: float, guard: float):
    def acc(y: float) -> float:
        return -a * math.exp(min(-2.0 * y, EXP_CAP))

    ts, ys, vs = [0.0], [y0], [y0p]
    y, v = y0, y0p
    nsteps = int(round(t_max / dt))
    hit = None
    for k in range(nsteps):
        k1y, k1v = v, acc(y)
        k2y, k2v = v + 0.5 * dt * k1v, acc(y + 0.5 * dt * k1y)
        k3y, k3v = v + 0.5 * dt * k2v, acc(y + 0.5 * dt * k2y)
        k4y, k4v = v + dt * k3v, acc(y + dt * k3y)
        y = y + (dt / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        v = v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        t = (k + 1) * dt
        if not (math.isfinite(y) and math.isfinite(v)):
            raise StepOverflow(f"non-finite ODE state at t = {t:.6g}")
        ts.append(t)
        ys.append(y)
        vs.append(v)
        if y <= threshold:
            # event happened inside the last step: report the bracket midpoint
            hit = t - 0.5 * dt
            break
        if v >= guard:
            raise StepOverflow(f"velocity guard {guard:.3g} exceeded at t = {t:.6g}")
        # a velocity below -guard cannot recover (y'' < 0 throughout), so keep
        # stepping: the next step lands below the detection threshold
    return np.array(ts), np.array(ys), np.array(vs), hit


def riccati_obstruction(a: float, y0: float, y0p: float, t_max: float,
                        dt: float = 1e-3, threshold: float = BLOW_UP_THRESHOLD,
                        guard: float = VELOCITY_GUARD) -> RiccatiReport:
    """Integrate y'' = -a e^{-2y} with fixed-step RK4 in both time directions.

    Concavity forces every solution on all of R to reach -infinity at some
    finite time, so the obstruction is detected forward or backward.  A
    forward escape is reported with positive time, a backward one with
    negative time; when both escape the forward time is reported.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    tf, yf, vf, hit_f = _integrate_obstruction(a, y0, y0p, t_max, dt, threshold, guard)
    tb, yb, vb, hit_b = _integrate_obstruction(a, y0, -y0p, t_max, dt, threshold, guard)

    ts = np.concatenate([-tb[::-1][:-1], tf])
    ys = np.concatenate([yb[::-1][:-1], yf])
    yps = np.concatenate([-vb[::-1][:-1], vf])

    if hit_f is not None:
        blow_time = hit_f
    elif hit_b is not None:
        blow_time = -hit_b
    else:
        blow_time = None
    return RiccatiReport(blow_up=blow_time is not None, blow_up_time=blow_time,
                         ts=ts, ys=ys, yps=yps, threshold_used=threshold)


# ---------------------------------------------------------------------------
# radial curvature identity
# ---------------------------------------------------------------------------

def radial_identity_N(split: SplitSpaceSpec, N: float, r: float) -> tuple[float, float]:
    """Radial generalized Ricci on a split space, closed form vs numeric.

    Returns ``(analytic, numeric)`` where the closed form is
    ``((N-1)/((n-1)(n-N))) phi'(r)^2`` and the numeric value is the (r, r)
    component of the generalized Ricci tensor computed by finite differences.
    """
    from .weighted_curvature import generalized_ricci

    n = split.n
    if N == n:
        from .errors import DimensionClash

        raise DimensionClash(f"N = n = {n} leaves the N - n denominator zero")
    dphi = split.dphi(r)
    if math.isinf(N):
        analytic = -dphi ** 2 / (n - 1)
    else:
        analytic = (N - 1.0) / ((n - 1.0) * (n - N)) * dphi ** 2
    p = np.concatenate([[r], split.fiber_basepoint()])
    form = generalized_ricci(split.metric_spec(), split.density(), N, p)
    return float(analytic), float(form[0, 0])
