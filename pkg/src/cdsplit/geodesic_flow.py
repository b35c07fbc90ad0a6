"""Geodesic integration and along-curve diagnostics.

Geodesics are integrated with fixed-step RK4 on the first-order system
x' = u, u'^k = -Gamma^k_ij u^i u^j (no adaptivity, for reproducibility).
On warped products the quantity warp^4 * |fiber velocity|^2 is conserved
along geodesics and serves as its own oracle; the density line integral
f_gamma(t) = int g(gamma', X) ds is accumulated with Simpson quadrature on
the RK4 grid to match the integrator order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

from .chart_core import (
    DensitySpec,
    MetricSpec,
    Point,
    ScalarField,
    VectorField,
    as_point,
    gamma_evaluator,
    metric_at,
    scalar_gradient,
)
from .errors import EmptyTrace, NonFinite, StepOverflow
from .warped_products import SplitSpaceSpec

VELOCITY_GUARD = 1e8

COMPLETENESS_CAVEAT = (
    "finite-range diagnostic over finitely many sampled directions; it does not "
    "decide the limsup growth condition, and minimality of long geodesics is not "
    "certified"
)


@dataclass(frozen=True)
class GeodesicTrace:
    """Samples of a unit-speed geodesic: strictly increasing times, positions,
    chart velocities, and the recorded unit-speed drift."""

    spec: MetricSpec
    ts: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    speed_drift: float
    truncated: bool = False

    def __len__(self) -> int:
        return self.ts.size


def speed_in_metric(spec: MetricSpec, p: Point, v: np.ndarray) -> float:
    return float(math.sqrt(max(0.0, float(v @ metric_at(spec, p) @ v))))


def normalize_velocity(spec: MetricSpec, p: Point, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    s = speed_in_metric(spec, p, v)
    if s == 0.0:
        raise ValueError("zero velocity cannot be normalized")
    return v / s


def _in_domain(spec: MetricSpec, x: np.ndarray, margin: np.ndarray) -> bool:
    if spec.domain is None:
        return True
    lo, hi = spec.domain[:, 0], spec.domain[:, 1]
    return bool(np.all(x - margin >= lo) and np.all(x + margin <= hi))


def geodesic_integrate(spec: MetricSpec, p0, v0, T: float, dt: float = 1e-3) -> GeodesicTrace:
    """Integrate the geodesic equation from (p0, v0) for time T.

    v0 must be unit in g to within 1e-10.  If the trajectory (or an RK4
    stage) leaves the chart domain the trace is truncated and flagged rather
    than extrapolated.  Velocities beyond the overflow guard raise
    StepOverflow.
    """
    p0 = as_point(p0, spec.dim)
    v0 = np.asarray(v0, dtype=float)
    s0 = speed_in_metric(spec, p0, v0)
    if abs(s0 - 1.0) > 1e-10:
        raise ValueError(f"initial velocity has g-norm {s0!r}, expected 1 within 1e-10")

    margin = spec.fd.scaled(p0, 4.0 * spec.fd.h2)
    metric_at(spec, p0)  # validates symmetry/finiteness once up front
    gamma = gamma_evaluator(spec)

    def acc(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return -np.einsum("kij,i,j->k", gamma(x), u, u)

    nsteps = int(round(T / dt))
    xs = np.empty((nsteps + 1, spec.dim))
    us = np.empty((nsteps + 1, spec.dim))
    xs[0], us[0] = p0, v0
    x, u = p0.copy(), v0.copy()
    truncated = False
    k_end = nsteps
    from .errors import CdsplitError

    for k in range(nsteps):
        try:
            k1x, k1u = u, acc(x, u)
            x2, u2 = x + 0.5 * dt * k1x, u + 0.5 * dt * k1u
            k2x, k2u = u2, acc(x2, u2)
            x3, u3 = x + 0.5 * dt * k2x, u + 0.5 * dt * k2u
            k3x, k3u = u3, acc(x3, u3)
            x4, u4 = x + dt * k3x, u + dt * k3u
            k4x, k4u = u4, acc(x4, u4)
        except (CdsplitError, ValueError, np.linalg.LinAlgError):
            # a stage left the chart: treat as domain exit when the last
            # accepted point already sits at the boundary margin, else re-raise
            if not _in_domain(spec, x, 2.0 * margin):
                truncated, k_end = True, k
                break
            raise
        x_new = x + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        u_new = u + (dt / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(u_new))):
            raise NonFinite(f"geodesic state non-finite at t = {(k + 1) * dt:.6g}")
        if float(np.max(np.abs(u_new))) >= VELOCITY_GUARD:
            raise StepOverflow(f"geodesic velocity guard exceeded at t = {(k + 1) * dt:.6g}")
        if not _in_domain(spec, x_new, margin):
            truncated, k_end = True, k
            break
        x, u = x_new, u_new
        xs[k + 1], us[k + 1] = x, u
    xs, us = xs[: k_end + 1], us[: k_end + 1]
    ts = dt * np.arange(k_end + 1)
    drift = max(abs(speed_in_metric(spec, xs[i], us[i]) - 1.0) for i in range(k_end + 1))
    return GeodesicTrace(spec=spec, ts=ts, positions=xs, velocities=us,
                         speed_drift=float(drift), truncated=truncated)


# ---------------------------------------------------------------------------
# conserved quantity on warped products
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClairautReport:
    initial: float
    values: np.ndarray
    max_drift: float  # relative to the initial value, absolute when it vanishes


def clairaut_constant(split: SplitSpaceSpec, trace: GeodesicTrace) -> ClairautReport:
    """Evaluate warp(r)^4 * g_L(fiber velocity, fiber velocity) along the trace."""
    if len(trace) == 0:
        raise EmptyTrace("cannot evaluate the conserved quantity on an empty trace")
    vals = np.empty(len(trace))
    for i in range(len(trace)):
        r = trace.positions[i, 0]
        y = trace.positions[i, 1:]
        uy = trace.velocities[i, 1:]
        gL = split.fiber.metric(y)
        vals[i] = split.warp(r) ** 4 * float(uy @ gL @ uy)
    c0 = float(vals[0])
    dev = float(np.max(np.abs(vals - c0)))
    drift = dev / abs(c0) if abs(c0) > 1e-14 else dev
    return ClairautReport(initial=c0, values=vals, max_drift=drift)


def fiber_projection_length(split: SplitSpaceSpec, trace: GeodesicTrace) -> float:
    """Length of the fiber projection of the trace in the fiber metric.

    For short geodesics with non-constant fiber part this equals the fiber
    distance between the endpoint projections (the projected image is a
    minimizing pregeodesic).
    """
    if len(trace) == 0:
        raise EmptyTrace("cannot measure the projection of an empty trace")
    speeds = np.empty(len(trace))
    for i in range(len(trace)):
        y = trace.positions[i, 1:]
        uy = trace.velocities[i, 1:]
        gL = split.fiber.metric(y)
        speeds[i] = math.sqrt(max(0.0, float(uy @ gL @ uy)))
    if len(trace) == 1:
        return 0.0
    return float(cumulative_simpson(speeds, x=trace.ts, initial=0.0)[-1])


# ---------------------------------------------------------------------------
# density line integrals
# ---------------------------------------------------------------------------

def _density_pairing(spec: MetricSpec, density: DensitySpec, p: Point, u: np.ndarray) -> float:
    """g(gamma', X) for a vector density, g(gamma', grad f) = df(gamma') for a
    scalar one."""
    if isinstance(density, ScalarField):
        return float(u @ scalar_gradient(spec, density, p))
    if isinstance(density, VectorField):
        return float(u @ metric_at(spec, p) @ np.asarray(density.value(p), dtype=float))
    raise TypeError(f"expected a scalar or vector density, got {type(density)!r}")


def f_along_geodesic(density: DensitySpec, trace: GeodesicTrace) -> np.ndarray:
    """Cumulative f_gamma(t) = int_0^t g(gamma', X) ds on the trace grid."""
    if len(trace) == 0:
        raise EmptyTrace("cannot integrate a density along an empty trace")
    integrand = np.array([
        _density_pairing(trace.spec, density, trace.positions[i], trace.velocities[i])
        for i in range(len(trace))
    ])
    if len(trace) == 1:
        return np.zeros(1)
    return cumulative_simpson(integrand, x=trace.ts, initial=0.0)


# ---------------------------------------------------------------------------
# density-weighted length growth along geodesic rays
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthTable:
    """Per-direction growth of I(r) = int_0^r e^{-2 f_gamma/(n-1)} ds."""

    directions: np.ndarray      # (k, n) unit initial velocities
    checkpoints: np.ndarray     # (m,) radii
    growth: np.ndarray          # (k, m) I(r) per direction, NaN past truncation
    minima: np.ndarray          # (m,) per-checkpoint min over reachable directions
    truncated: np.ndarray       # (k,) bool
    caveat: str = COMPLETENESS_CAVEAT


def sample_unit_directions(spec: MetricSpec, p: Point, count: int, seed: int = 42) -> np.ndarray:
    """Deterministic unit directions in the g(p)-sphere: seeded Gaussians
    whitened through the Cholesky factor of g."""
    p = as_point(p, spec.dim)
    g = metric_at(spec, p)
    L = np.linalg.cholesky(g)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, spec.dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return np.linalg.solve(L.T, z.T).T


def completeness_diagnostic(spec: MetricSpec, density: DensitySpec, y,
                            directions: np.ndarray | None = None, R_max: float = 10.0,
                            n_checkpoints: int = 10, dt: float = 1e-3,
                            n_directions: int = 16, seed: int = 42) -> GrowthTable:
    """Tabulate the density-weighted length I(r) along geodesics from y.

    For each direction the geodesic is integrated to length R_max and
    I(r) = int_0^r e^{-2 f_gamma/(n-1)} ds recorded at the checkpoints.
    Saturating growth signals that the weighted length may stay bounded;
    linear growth is consistent with divergence.  Output is a finite-range
    diagnostic, never a decision.
    """
    if R_max <= 0:
        raise ValueError("R_max must be positive")
    y = as_point(y, spec.dim)
    if directions is None:
        directions = sample_unit_directions(spec, y, n_directions, seed)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    checkpoints = np.linspace(R_max / n_checkpoints, R_max, n_checkpoints)
    nsteps = int(round(R_max / dt))
    idx = np.minimum((np.round(checkpoints / dt)).astype(int), nsteps)

    growth = np.full((directions.shape[0], n_checkpoints), np.nan)
    truncated = np.zeros(directions.shape[0], dtype=bool)
    for k, d in enumerate(directions):
        v0 = normalize_velocity(spec, y, d)
        trace = geodesic_integrate(spec, y, v0, R_max, dt)
        fg = f_along_geodesic(density, trace)
        weight = np.exp(-2.0 * fg / (spec.dim - 1))
        if len(trace) < 2:
            I = np.zeros(len(trace))
        else:
            I = cumulative_simpson(weight, x=trace.ts, initial=0.0)
        truncated[k] = trace.truncated
        for j, i in enumerate(idx):
            if i < len(trace):
                growth[k, j] = I[i]
    with np.errstate(all="ignore"):
        minima = np.nanmin(growth, axis=0)
    return GrowthTable(directions=directions, checkpoints=checkpoints, growth=growth,
                       minima=minima, truncated=truncated)


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def write_trace_csv(trace: GeodesicTrace, path, clairaut: np.ndarray | None = None,
                    f_gamma: np.ndarray | None = None, header_lines=()) -> None:
    """Write a trace as CSV: t, coords, velocities, then the optional
    conserved-quantity and f_gamma columns; 17 significant digits, LF endings."""
    names = trace.spec.coords()
    cols = ["t", *names, *(f"v_{c}" for c in names)]
    if clairaut is not None:
        cols.append("clairaut")
    if f_gamma is not None:
        cols.append("f_gamma")
    with open(path, "w", newline="\n") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for i in range(len(trace)):
            row = [trace.ts[i], *trace.positions[i], *trace.velocities[i]]
            if clairaut is not None:
                row.append(clairaut[i])
            if f_gamma is not None:
                row.append(f_gamma[i])
            writer.writerow(f"{v:.17g}" for v in row)
