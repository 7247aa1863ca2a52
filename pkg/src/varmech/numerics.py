"""Shared numerical kernels: fixed-step RK4, finite-difference stencils,
the discrete-action oracle, and a dense LU solver for Newton steps.

The discrete-action machinery is the independent check used against every
symbolically derived Euler-Lagrange system: the exact gradient of a
trapezoid-discretized action, taken through the difference stencils, must
reproduce the residual of the derived equations to second order in the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as ex

__all__ = [
    "NonFiniteError", "SingularJacobianError",
    "OdeProblem", "Trajectory", "rk4",
    "dense_solve",
    "d1", "d2", "Partials2D", "fd_partials_1d", "fd_partials_2d",
    "ActionDiscretization", "action_gradient",
]


class NonFiniteError(Exception):
    """A state or field left the finite floating-point range."""


class SingularJacobianError(Exception):
    """A linear system for a Newton step is numerically singular."""


# ---------------------------------------------------------------------------
# ODE integration


@dataclass
class OdeProblem:
    rhs: Callable[[np.ndarray, float], np.ndarray]
    y0: np.ndarray
    t_span: tuple[float, float]
    dt: float

    def __post_init__(self):
        self.y0 = np.asarray(self.y0, dtype=float)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_span[1] <= self.t_span[0]:
            raise ValueError("t_span must be increasing")


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray                      # shape (len(t), dim)
    conserved: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def drift(self, name: str) -> float:
        """Max absolute deviation of a logged quantity from its initial value."""
        series = self.conserved[name]
        return float(np.max(np.abs(series - series[0])))


def rk4(
    problem: OdeProblem,
    observers: Mapping[str, Callable[[np.ndarray, float], float]] | None = None,
    step_hook: Callable[[int, np.ndarray], None] | None = None,
) -> Trajectory:
    """Classical fixed-step fourth-order Runge-Kutta.

    `observers` are logged at every stored step; `step_hook(i, state)` runs
    after each accepted step (used for periodic regularity re-checks).
    """
    t0, t1 = problem.t_span
    nsteps = max(1, round((t1 - t0) / problem.dt))
    dt = (t1 - t0) / nsteps
    f = problem.rhs
    y = problem.y0.copy()
    ts = t0 + dt * np.arange(nsteps + 1)
    states = np.empty((nsteps + 1, y.size))
    states[0] = y
    logs = {name: np.empty(nsteps + 1) for name in (observers or {})}
    for name, fn in (observers or {}).items():
        logs[name][0] = fn(y, t0)
    for i in range(nsteps):
        t = ts[i]
        k1 = f(y, t)
        k2 = f(y + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = f(y + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = f(y + dt * k3, t + dt)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NonFiniteError(f"state became non-finite at t={ts[i + 1]:.6g}")
        states[i + 1] = y
        for name, fn in (observers or {}).items():
            logs[name][i + 1] = fn(y, ts[i + 1])
        if step_hook is not None:
            step_hook(i + 1, y)
    return Trajectory(t=ts, states=states, conserved=logs,
                      meta={"integrator": "rk4", "dt": dt, "steps": nsteps})


# ---------------------------------------------------------------------------
# Dense linear solver (partial-pivot LU)

_PIVOT_RTOL = 1e-13


def dense_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve Ax = b by LU with partial pivoting.

    Raises SingularJacobianError when a pivot falls below 1e-13 times the
    largest row magnitude of the input matrix.
    """
    A = np.array(A, dtype=float, copy=True)
    b = np.array(b, dtype=float, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    n = A.shape[0]
    if b.shape[0] != n:
        raise ValueError("b has incompatible size")
    if n == 0:
        return b
    scale = float(np.max(np.abs(A)))
    if scale == 0.0:
        raise SingularJacobianError("zero matrix")
    for k in range(n - 1):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if abs(A[p, k]) < _PIVOT_RTOL * scale:
            raise SingularJacobianError(f"pivot {A[p, k]:.3e} below threshold at column {k}")
        if p != k:
            A[[k, p]] = A[[p, k]]
            b[[k, p]] = b[[p, k]]
        factors = A[k + 1:, k] / A[k, k]
        A[k + 1:, k + 1:] -= np.outer(factors, A[k, k + 1:])
        b[k + 1:] -= factors * b[k]
    if abs(A[n - 1, n - 1]) < _PIVOT_RTOL * scale:
        raise SingularJacobianError(f"pivot {A[n - 1, n - 1]:.3e} below threshold at column {n - 1}")
    x = np.empty(n)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - A[k, k + 1:] @ x[k + 1:]) / A[k, k]
    return x


# ---------------------------------------------------------------------------
# Finite-difference stencils (second order, one-sided at the edges)


def d1(f: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """First derivative: central in the interior, 3-point one-sided at edges."""
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    fm = np.moveaxis(f, axis, 0)
    om = np.moveaxis(out, axis, 0)
    om[1:-1] = (fm[2:] - fm[:-2]) / (2.0 * h)
    om[0] = (-3.0 * fm[0] + 4.0 * fm[1] - fm[2]) / (2.0 * h)
    om[-1] = (3.0 * fm[-1] - 4.0 * fm[-2] + fm[-3]) / (2.0 * h)
    return out


def d2(f: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Second derivative: central in the interior, 4-point one-sided at edges."""
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    fm = np.moveaxis(f, axis, 0)
    om = np.moveaxis(out, axis, 0)
    om[1:-1] = (fm[2:] - 2.0 * fm[1:-1] + fm[:-2]) / h**2
    om[0] = (2.0 * fm[0] - 5.0 * fm[1] + 4.0 * fm[2] - fm[3]) / h**2
    om[-1] = (2.0 * fm[-1] - 5.0 * fm[-2] + 4.0 * fm[-3] - fm[-4]) / h**2
    return out


def fd_partials_1d(f: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    return d1(f, h), d2(f, h)


@dataclass
class Partials2D:
    fx: np.ndarray
    fy: np.ndarray
    fxx: np.ndarray
    fyy: np.ndarray
    fxy: np.ndarray


def fd_partials_2d(f: np.ndarray, hx: float, hy: float) -> Partials2D:
    """First and second partials of a 2D field; exact on quadratics inside."""
    return Partials2D(
        fx=d1(f, hx, axis=0),
        fy=d1(f, hy, axis=1),
        fxx=d2(f, hx, axis=0),
        fyy=d2(f, hy, axis=1),
        fxy=d1(d1(f, hx, axis=0), hy, axis=1),
    )


# ---------------------------------------------------------------------------
# Discrete-action oracle


@dataclass
class ActionDiscretization:
    """Trapezoid discretization of the action of a jet-chart Lagrangian.

    Jets are reconstructed from curve samples with the iterated central
    first-difference operator; a graded chart contributes the 1/i! factor
    that relates its order-i fibre coordinate to the i-th derivative.
    The quadrature window is restricted to nodes where all stencils fit.
    """

    lagrangian: ex.Expr
    chart: ex.Chart
    m: int
    dt: float

    def __post_init__(self):
        self.max_order = max(v.order for v in self.chart.variables)
        used = ex.free_vars(self.lagrangian)
        for name in used:
            if name not in self.chart:
                raise ex.ChartError(f"Lagrangian variable {name!r} not in the chart")

    def jet_factor(self, order: int) -> float:
        if self.chart.rule == ex.YGRADED and order >= 1:
            return 1.0 / math.factorial(order)
        return 1.0

    def min_samples(self) -> int:
        return 2 * self.max_order + 1


def _central_d1_matrix(n: int, dt: float) -> np.ndarray:
    """Central first-difference matrix with zero (invalid) end rows."""
    D = np.zeros((n, n))
    for j in range(1, n - 1):
        D[j, j + 1] = 1.0 / (2.0 * dt)
        D[j, j - 1] = -1.0 / (2.0 * dt)
    return D


def action_gradient(disc: ActionDiscretization, samples: np.ndarray) -> tuple[np.ndarray, slice]:
    """Exact gradient of the discrete action with respect to curve samples.

    Returns (gradient, valid) where gradient has the sample array's shape and
    `valid` is the slice of interior nodes at which gradient/dt approximates
    the Euler-Lagrange residual to O(dt^2).  The gradient is the true
    derivative of the quadrature sum, assembled through stencil adjoints, not
    a numerical differencing of the action value.
    """
    Q = np.asarray(samples, dtype=float)
    if Q.ndim == 1:
        Q = Q[:, None]
    npts, m = Q.shape
    if m != disc.m:
        raise ValueError(f"expected {disc.m} components, got {m}")
    K = disc.max_order
    if npts < disc.min_samples():
        raise ValueError(f"need at least {disc.min_samples()} samples for jet order {K}")

    D = _central_d1_matrix(npts, disc.dt)
    powers = [np.eye(npts)]
    for _ in range(K):
        powers.append(D @ powers[-1])

    # jet value arrays per chart variable
    names = list(disc.chart.names)
    values = []
    for v in disc.chart.variables:
        comp = max(v.comp, 1) - 1
        values.append(disc.jet_factor(v.order) * (powers[v.order] @ Q[:, comp]))

    # trapezoid weights over the window where all stencils are valid
    w = np.zeros(npts)
    w[K:npts - K] = 1.0
    w[K] = 0.5
    w[npts - 1 - K] = 0.5

    grad = np.zeros_like(Q)
    for v in disc.chart.variables:
        dL = ex.compile_expr(ex.diff(disc.lagrangian, v.name), names)(values)
        dL = np.broadcast_to(np.asarray(dL, dtype=float), (npts,))
        comp = max(v.comp, 1) - 1
        grad[:, comp] += disc.jet_factor(v.order) * (powers[v.order].T @ (w * dL))
    grad *= disc.dt

    valid = slice(2 * K + 1, npts - 2 * K - 1)
    if samples.ndim == 1:
        return grad[:, 0], valid
    return grad, valid
