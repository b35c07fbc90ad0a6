"""Built-in chart metrics, split spaces, and density models used by the
test and report suites."""

from __future__ import annotations

import math

import numpy as np

from .chart_core import MetricSpec, Point, ScalarField, VectorField
from .comparison_suite import RadialModel
from .warped_products import (
    EuclideanFiber,
    SphereFiber,
    SplitSpaceSpec,
    TorusFiber,
    TwistedProductSpec,
)


def flat(dim: int) -> MetricSpec:
    """Euclidean R^n in Cartesian coordinates."""
    return MetricSpec(dim=dim, g=lambda p: np.eye(dim),
                      partials=lambda p: np.zeros((dim, dim, dim)), name=f"flat{dim}")


def polar_plane(r_min: float = 0.05) -> MetricSpec:
    """Flat R^2 in polar coordinates dr^2 + r^2 dtheta^2 (r bounded away from 0)."""

    def g(p: Point) -> np.ndarray:
        return np.diag([1.0, p[0] ** 2])

    def partials(p: Point) -> np.ndarray:
        D = np.zeros((2, 2, 2))
        D[0, 1, 1] = 2.0 * p[0]
        return D

    domain = np.array([[r_min, np.inf], [-np.inf, np.inf]])
    return MetricSpec(dim=2, g=g, partials=partials, domain=domain,
                      name="polar plane", coord_names=("r", "theta"))


def sphere_chart(dim: int = 2, einstein_constant: float = 1.0) -> MetricSpec:
    """Round sphere in a stereographic chart as a standalone metric."""
    fiber = SphereFiber(dim=dim, einstein_constant=einstein_constant)
    return MetricSpec(
        dim=dim,
        g=lambda p: fiber.metric(p),
        partials=lambda p: fiber.partials(p),
        domain=fiber.safe_box,
        name=f"sphere{dim} (Einstein constant {einstein_constant:g})",
    )


def hyperbolic_split(n: int = 3) -> SplitSpaceSpec:
    """Hyperbolic space of curvature -1 as the warped chart
    dr^2 + e^{2r} (flat fiber); phi = (n-1) r."""
    return SplitSpaceSpec(n=n, phi=lambda r: (n - 1.0) * r, dphi=lambda r: n - 1.0,
                          d2phi=lambda r: 0.0, fiber=EuclideanFiber(n - 1),
                          name=f"hyperbolic{n}")


def split_sin_euclidean(n: int = 2, amplitude: float = 0.5) -> SplitSpaceSpec:
    """Split space with phi = amplitude * sin r over a flat fiber."""
    return SplitSpaceSpec(
        n=n,
        phi=lambda r: amplitude * math.sin(r),
        dphi=lambda r: amplitude * math.cos(r),
        d2phi=lambda r: -amplitude * math.sin(r),
        fiber=EuclideanFiber(n - 1),
        name=f"split{n} sin fiber=flat",
    )


def split_sin_sphere(einstein_constant: float, n: int = 3,
                     f_L: ScalarField | None = None) -> SplitSpaceSpec:
    """Split space phi = sin r over a round-sphere fiber."""
    return SplitSpaceSpec(
        n=n,
        phi=math.sin,
        dphi=math.cos,
        d2phi=lambda r: -math.sin(r),
        fiber=SphereFiber(dim=n - 1, einstein_constant=einstein_constant),
        f_L=f_L,
        name=f"split{n} sin fiber=sphere({einstein_constant:g})",
    )


def split_cos_sphere_4d(einstein_constant: float = 1.0) -> SplitSpaceSpec:
    """Four-dimensional split space phi = cos r over a round 3-sphere fiber."""
    return SplitSpaceSpec(
        n=4,
        phi=math.cos,
        dphi=lambda r: -math.sin(r),
        d2phi=lambda r: -math.cos(r),
        fiber=SphereFiber(dim=3, einstein_constant=einstein_constant),
        name=f"split4 cos fiber=sphere({einstein_constant:g})",
    )


def split_sin_torus(n: int = 3, periods=(2.0 * math.pi, 4.0 * math.pi)) -> SplitSpaceSpec:
    """Split space phi = sin r over a flat torus fiber."""
    return SplitSpaceSpec(
        n=n,
        phi=math.sin,
        dphi=math.cos,
        d2phi=lambda r: -math.sin(r),
        fiber=TorusFiber(dim=n - 1, periods=tuple(periods)),
        name=f"split{n} sin fiber=torus",
    )


def fiber_density(value, grad, hess) -> ScalarField:
    """Scalar field on fiber coordinates with analytic partials."""
    return ScalarField(value=value, grad=grad, hess=hess)


def bounded_fiber_density(amplitude: float = 0.2) -> ScalarField:
    """A smooth bounded fiber density a * sin(y1) * cos(y2) with partials."""
    a = amplitude

    def value(y: np.ndarray) -> float:
        return a * math.sin(y[0]) * math.cos(y[1])

    def grad(y: np.ndarray) -> np.ndarray:
        out = np.zeros(y.size)
        out[0] = a * math.cos(y[0]) * math.cos(y[1])
        out[1] = -a * math.sin(y[0]) * math.sin(y[1])
        return out

    def hess(y: np.ndarray) -> np.ndarray:
        out = np.zeros((y.size, y.size))
        out[0, 0] = -a * math.sin(y[0]) * math.cos(y[1])
        out[1, 1] = -a * math.sin(y[0]) * math.cos(y[1])
        out[0, 1] = out[1, 0] = -a * math.cos(y[0]) * math.sin(y[1])
        return out

    return ScalarField(value=value, grad=grad, hess=hess)


def twisted_example(n: int = 3, amplitude: float = 0.3) -> TwistedProductSpec:
    """A genuinely twisted chart: psi = a sin(r) cos(y1) + (a/2) cos(y1) sin(y2)
    over a flat fiber (y2 term dropped when the fiber is one-dimensional)."""
    a = amplitude
    has_y2 = n >= 3

    def value(p: Point) -> float:
        out = a * math.sin(p[0]) * math.cos(p[1])
        if has_y2:
            out += 0.5 * a * math.cos(p[1]) * math.sin(p[2])
        return out

    def grad(p: Point) -> np.ndarray:
        out = np.zeros(n)
        out[0] = a * math.cos(p[0]) * math.cos(p[1])
        out[1] = -a * math.sin(p[0]) * math.sin(p[1])
        if has_y2:
            out[1] += -0.5 * a * math.sin(p[1]) * math.sin(p[2])
            out[2] = 0.5 * a * math.cos(p[1]) * math.cos(p[2])
        return out

    def hess(p: Point) -> np.ndarray:
        out = np.zeros((n, n))
        out[0, 0] = -a * math.sin(p[0]) * math.cos(p[1])
        out[0, 1] = out[1, 0] = -a * math.cos(p[0]) * math.sin(p[1])
        out[1, 1] = -a * math.sin(p[0]) * math.cos(p[1])
        if has_y2:
            out[1, 1] += -0.5 * a * math.cos(p[1]) * math.sin(p[2])
            out[1, 2] = out[2, 1] = -0.5 * a * math.sin(p[1]) * math.cos(p[2])
            out[2, 2] = -0.5 * a * math.cos(p[1]) * math.sin(p[2])
        return out

    psi = ScalarField(value=value, grad=grad, hess=hess)
    return TwistedProductSpec(n=n, psi=psi, fiber=EuclideanFiber(n - 1),
                              name=f"twisted{n} a={amplitude:g}")


def nongradient_example(n: int = 4, einstein_constant: float = 1.0,
                        amplitude: float = 0.05):
    """Warped sphere chart with the vector density whose radial generalized
    Ricci rows vanish identically at N = 1.

    The twist potential phi(r, y) = a sin(r) cos(y1) genuinely depends on the
    fiber, so X = phi_r d/dr * 2/(n-1) + grad(phi) * (n-3)/(n-1) is not a
    gradient field.  Returns (TwistedProductSpec, VectorField).
    """
    a = amplitude
    fiber = SphereFiber(dim=n - 1, einstein_constant=einstein_constant)

    def value(p: Point) -> float:
        return a * math.sin(p[0]) * math.cos(p[1])

    def grad(p: Point) -> np.ndarray:
        out = np.zeros(n)
        out[0] = a * math.cos(p[0]) * math.cos(p[1])
        out[1] = -a * math.sin(p[0]) * math.sin(p[1])
        return out

    def hess(p: Point) -> np.ndarray:
        out = np.zeros((n, n))
        out[0, 0] = -a * math.sin(p[0]) * math.cos(p[1])
        out[0, 1] = out[1, 0] = -a * math.cos(p[0]) * math.sin(p[1])
        out[1, 1] = -a * math.sin(p[0]) * math.cos(p[1])
        return out

    psi = ScalarField(value=value, grad=grad, hess=hess)
    spec = TwistedProductSpec(n=n, psi=psi, fiber=fiber, name=f"warped-sphere{n} twist")

    c = 1.0 / (n - 1)

    def X_value(p: Point) -> np.ndarray:
        dpsi = grad(p)
        w = math.exp(2.0 * c * value(p))
        hinv = np.linalg.inv(fiber.metric(p[1:]))
        out = np.zeros(n)
        out[0] = dpsi[0]  # 2c phi_r + (n-3)c phi_r
        out[1:] = (n - 3.0) * c / w * (hinv @ dpsi[1:])
        return out

    return spec, VectorField(value=X_value)


def gradient_as_vector_field(spec: MetricSpec, f: ScalarField) -> VectorField:
    """The metric gradient of f packaged as a vector field (components
    g^{ij} d_j f)."""
    from .chart_core import inverse_metric, scalar_gradient

    def value(p: Point) -> np.ndarray:
        return inverse_metric(spec, p) @ scalar_gradient(spec, f, p)

    return VectorField(value=value)


def radial_log_model(n: int = 3) -> RadialModel:
    """Flat R^n with f(rho) = ((n-1)/2) log(1 + rho^2): a weighted model
    satisfying CD(0,1) with strictly positive comparison slack."""
    return RadialModel(
        n=n,
        f=lambda rho: 0.5 * (n - 1) * math.log1p(rho * rho),
        df=lambda rho: (n - 1) * rho / (1.0 + rho * rho),
        d2f=lambda rho: (n - 1) * (1.0 - rho * rho) / (1.0 + rho * rho) ** 2,
        name=f"radial log model n={n}",
    )


def radial_model_from_callables(n: int, f, df, d2f, name: str = "radial model") -> RadialModel:
    return RadialModel(n=n, f=f, df=df, d2f=d2f, name=name)


def unweighted_model(n: int = 3) -> RadialModel:
    """Flat R^n with vanishing density (classical comparison, zero slack)."""
    return RadialModel(n=n, f=lambda rho: 0.0, df=lambda rho: 0.0,
                       d2f=lambda rho: 0.0, name=f"unweighted flat n={n}")


def builtin_product_charts() -> list[TwistedProductSpec]:
    """The products used for analytic-vs-numeric curvature regression,
    dimensions 2 through 4."""
    return [
        split_sin_euclidean(2).as_twisted(),
        hyperbolic_split(3).as_twisted(),
        split_sin_sphere(0.5).as_twisted(),
        twisted_example(3),
        split_cos_sphere_4d(1.0).as_twisted(),
        split_sin_torus(3).as_twisted(),
    ]
