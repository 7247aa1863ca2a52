"""First-order phase-space mechanics in coordinates: the alpha shuffle on
iterated (co)tangent coordinates, implicit phase dynamics generated by a
Lagrangian, the Legendre map, and explicit Hamilton equations.

The implicit dynamics of a Lagrangian is kept as residual expressions
{p - dL/dxdot, pdot - dL/dx}; an explicit velocity-space reduction is built
only when the velocity Hessian is numerically regular.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from . import numerics as nm

__all__ = [
    "PhasePoint", "DoublePoint", "phase_names",
    "alpha", "alpha_inv", "alpha_matrix",
    "FirstOrderSystem", "lagrangian_dynamics", "hamiltonian_dynamics",
    "legendre_flow",
]


def phase_names(m: int) -> tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...], tuple[str, ...]]:
    """Names for (x, xdot, p, pdot) blocks; scalars drop the component index."""
    if m == 1:
        return ("x",), ("xdot",), ("p",), ("pdot",)
    r = range(1, m + 1)
    return (tuple(f"x{i}" for i in r), tuple(f"xdot{i}" for i in r),
            tuple(f"p{i}" for i in r), tuple(f"pdot{i}" for i in r))


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        if self.x.shape != self.p.shape:
            raise ValueError("x and p must have matching dimension")


@dataclass(frozen=True)
class DoublePoint:
    """A point of TT*M in the standard coordinates (x, p, xdot, pdot)."""
    x: np.ndarray
    p: np.ndarray
    xdot: np.ndarray
    pdot: np.ndarray

    def __post_init__(self):
        for name in ("x", "p", "xdot", "pdot"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        shapes = {getattr(self, name).shape for name in ("x", "p", "xdot", "pdot")}
        if len(shapes) != 1:
            raise ValueError("all four blocks must have matching dimension")


def alpha(d: DoublePoint) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """The coordinate shuffle (x, p, xdot, pdot) -> (x, xdot, pdot, p)."""
    return d.x.copy(), d.xdot.copy(), d.pdot.copy(), d.p.copy()


def alpha_inv(x: np.ndarray, xdot: np.ndarray, pdot: np.ndarray, p: np.ndarray) -> DoublePoint:
    return DoublePoint(x=x, p=p, xdot=xdot, pdot=pdot)


def alpha_matrix(m: int) -> np.ndarray:
    """alpha as a 4m x 4m permutation matrix on stacked (x, p, xdot, pdot)."""
    M = np.zeros((4 * m, 4 * m))
    blocks = {0: 0, 1: 2, 2: 3, 3: 1}  # output block -> input block
    for out, inp in blocks.items():
        M[out * m:(out + 1) * m, inp * m:(inp + 1) * m] = np.eye(m)
    return M


@dataclass
class FirstOrderSystem:
    """Residual form of first-order phase dynamics plus optional explicit flow."""
    kind: str                       # 'lagrangian' | 'hamiltonian'
    m: int
    residuals: list[ex.Expr]        # expressions in (x, xdot, p, pdot)
    legendre: list[ex.Expr]         # momenta dL/dxdot (empty on the Hamiltonian side)
    state_names: list[str]
    rhs: Callable[[np.ndarray, float], np.ndarray] | None = None
    conserved: dict[str, Callable[[np.ndarray, float], float]] = field(default_factory=dict)

    def residual_values(self, point: dict[str, float]) -> np.ndarray:
        return np.array([ex.evaluate(r, point) for r in self.residuals])


def lagrangian_dynamics(L: ex.Expr, m: int) -> FirstOrderSystem:
    """Implicit dynamics {p = dL/dxdot, pdot = dL/dx} plus the Legendre map.

    The explicit flow over (x, xdot) solves the velocity-Hessian system at
    each evaluation and is usable whenever that Hessian is regular along the
    trajectory.
    """
    xs, xds, ps, pds = phase_names(m)
    allowed = set(xs) | set(xds)
    extra = ex.free_vars(L) - allowed
    if extra:
        raise ex.ChartError(f"Lagrangian may only use {sorted(allowed)}, found {sorted(extra)}")

    dLdxd = [ex.diff(L, v) for v in xds]
    dLdx = [ex.diff(L, v) for v in xs]
    residuals = [ex.sub(ex.sym(p), g) for p, g in zip(ps, dLdxd)]
    residuals += [ex.sub(ex.sym(pd), g) for pd, g in zip(pds, dLdx)]

    phase = list(xs) + list(xds)
    f_dLdx = [ex.compile_expr(g, phase) for g in dLdx]
    f_H = [[ex.compile_expr(ex.diff(g, xd), phase) for xd in xds] for g in dLdxd]
    f_cross = [[ex.compile_expr(ex.diff(g, x), phase) for x in xs] for g in dLdxd]

    def rhs(state: np.ndarray, t: float) -> np.ndarray:
        vals = list(state)
        H = np.array([[f(vals) for f in row] for row in f_H], dtype=float)
        b = np.array([f(vals) for f in f_dLdx], dtype=float)
        b -= np.array([[f(vals) for f in row] for row in f_cross], dtype=float) @ state[m:]
        xdd = np.linalg.solve(H, b)
        return np.concatenate([state[m:], xdd])

    f_L = ex.compile_expr(L, phase)

    def energy(state: np.ndarray, t: float) -> float:
        vals = list(state)
        return float(sum(state[m + a] * f(vals) for a, f in enumerate(
            ex.compile_expr(g, phase) for g in dLdxd)) - f_L(vals))

    return FirstOrderSystem(kind="lagrangian", m=m, residuals=residuals,
                            legendre=dLdxd, state_names=phase, rhs=rhs,
                            conserved={"energy": energy})


def hamiltonian_dynamics(H: ex.Expr, m: int) -> FirstOrderSystem:
    """Explicit Hamilton equations xdot = dH/dp, pdot = -dH/dx."""
    xs, xds, ps, pds = phase_names(m)
    allowed = set(xs) | set(ps)
    extra = ex.free_vars(H) - allowed
    if extra:
        raise ex.ChartError(f"Hamiltonian may only use {sorted(allowed)}, found {sorted(extra)}")

    dHdp = [ex.diff(H, v) for v in ps]
    dHdx = [ex.diff(H, v) for v in xs]
    residuals = [ex.sub(ex.sym(xd), g) for xd, g in zip(xds, dHdp)]
    residuals += [ex.add(ex.sym(pd), g) for pd, g in zip(pds, dHdx)]

    phase = list(xs) + list(ps)
    f_dHdp = [ex.compile_expr(g, phase) for g in dHdp]
    f_dHdx = [ex.compile_expr(g, phase) for g in dHdx]
    f_H = ex.compile_expr(H, phase)

    def rhs(state: np.ndarray, t: float) -> np.ndarray:
        vals = list(state)
        return np.concatenate([
            [f(vals) for f in f_dHdp],
            [-f(vals) for f in f_dHdx],
        ])

    def energy(state: np.ndarray, t: float) -> float:
        return float(f_H(list(state)))

    return FirstOrderSystem(kind="hamiltonian", m=m, residuals=residuals,
                            legendre=[], state_names=phase, rhs=rhs,
                            conserved={"energy": energy})


def legendre_flow(L: ex.Expr, m: int, newton_tol: float = 1e-12, newton_max: int = 50):
    """Hamiltonian vector field of the pointwise-numeric Legendre transform of L.

    Inverts p = dL/dxdot by Newton iteration at each phase point and uses
    xdot = v(x, p), pdot = dL/dx(x, v): no symbolic Hamiltonian is formed.
    """
    xs, xds, _, _ = phase_names(m)
    phase = list(xs) + list(xds)
    dLdxd = [ex.diff(L, v) for v in xds]
    f_g = [ex.compile_expr(g, phase) for g in dLdxd]
    f_H = [[ex.compile_expr(ex.diff(g, xd), phase) for xd in xds] for g in dLdxd]
    f_dLdx = [ex.compile_expr(ex.diff(L, x), phase) for x in xs]

    def rhs(state: np.ndarray, t: float) -> np.ndarray:
        x, p = state[:m], state[m:]
        v = np.zeros(m)
        for _ in range(newton_max):
            vals = list(x) + list(v)
            g = np.array([f(vals) for f in f_g]) - p
            if np.max(np.abs(g)) < newton_tol:
                break
            Hm = np.array([[f(vals) for f in row] for row in f_H])
            v = v - nm.dense_solve(Hm, g)
        vals = list(x) + list(v)
        return np.concatenate([v, [f(vals) for f in f_dLdx]])

    return rhs
