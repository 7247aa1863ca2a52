"""Higher-order Lagrangian mechanics on Lie algebroids.

Given an algebroid (rho, C) and a Lagrangian of order k over the graded chart
(x^A; y^a_1 .. y^a_k), this module assembles the factorial-weighted momenta

    pi^j_a = 1/(k-j+1) * sum_{r=0}^{j-1} (-1)^r (k-j+1)!/(k-j+1+r)! *
             d^r/dt^r ( dL/dy^a_{k-j+1+r} )

and the order-k Euler-Lagrange residuals

    R_a = rho^A_a dL/dx^A + y_1^b C^c_{ba} pi^k_c - d/dt pi^k_a ,

with the graded prolongation d/dt y_i = (i+1) y_{i+1} and, on the base,
d/dt x^A = rho^A_a y^a_1.  Under the normalization y_i = q^(i)/i! this
reduces exactly to the classical alternating-sum equations on higher tangent
bundles, which is enforced by `reduce_check` (the normalization oracle)
rather than assumed.

An explicit first-order flow is produced by keeping the momenta as auxiliary
state (x, y_1..y_k, pi^2..pi^k) and solving the top Legendre block
numerically, instead of inverting high-order jets symbolically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as ex
from . import numerics as nm
from .algebroid import AlgebroidSpec, base_names, is_tangent

__all__ = [
    "SingularLegendreError",
    "fibre_name", "graded_chart",
    "LagrangianSpec", "MomentaSet", "ELSystem",
    "momenta", "el_equations", "classical_el", "reduce_check", "simulate",
    "g2_chart", "G2System", "g2_pipeline", "g2_vs_el_deviation",
    "random_jets", "linear_jet_coefficients", "pure_jet_equation",
]

REGULARITY_COND_LIMIT = 1e8


class SingularLegendreError(Exception):
    """The top Hessian d2L/dy_k dy_k is numerically singular: degenerate Lagrangian."""


def fibre_name(a: int, i: int, n: int) -> str:
    """Fibre coordinate name y^a_i; the component index is dropped when n = 1."""
    return f"y_{i}" if n == 1 else f"y{a}_{i}"


def graded_chart(spec: AlgebroidSpec, depth: int) -> ex.Chart:
    """Graded chart over an algebroid with jets up to `depth`.

    Weights are 0 on the base and i on y_i; the time derivative follows
    d/dt x^A = rho^A_a y^a_1 and d/dt y_i = (i+1) y_{i+1}.
    """
    m, n = spec.base_dim, spec.rank
    variables: list[ex.JetVar] = []
    tderiv: dict[str, ex.Expr] = {}
    for A, xname in enumerate(spec.base):
        variables.append(ex.JetVar(xname, "x", 0 if m == 1 else A + 1, 0, 0))
        if depth >= 1:
            tderiv[xname] = ex.add_all(
                ex.mul(spec.anchor[A][a], ex.sym(fibre_name(a + 1, 1, n))) for a in range(n)
            )
    for a in range(1, n + 1):
        for i in range(1, depth + 1):
            name = fibre_name(a, i, n)
            variables.append(ex.JetVar(name, "y", 0 if n == 1 else a, i, i))
            if i < depth:
                tderiv[name] = ex.mul(ex.num(i + 1), ex.sym(fibre_name(a, i + 1, n)))
    return ex.Chart(variables, ex.YGRADED, tderiv)


@dataclass(frozen=True)
class LagrangianSpec:
    """An order-k Lagrangian over the graded chart of an algebroid."""

    algebroid: AlgebroidSpec
    order: int
    lagrangian: ex.Expr

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        allowed = set(self.phase_names())
        extra = ex.free_vars(self.lagrangian) - allowed
        if extra:
            raise ex.ChartError(
                f"Lagrangian uses {sorted(extra)}; allowed variables are {sorted(allowed)}"
            )

    @property
    def m(self) -> int:
        return self.algebroid.base_dim

    @property
    def n(self) -> int:
        return self.algebroid.rank

    def phase_names(self) -> list[str]:
        """Variables the Lagrangian may depend on: x^A and y^a_i, i <= k."""
        names = list(self.algebroid.base)
        for i in range(1, self.order + 1):
            for a in range(1, self.n + 1):
                names.append(fibre_name(a, i, self.n))
        return names

    def chart(self, depth: int | None = None) -> ex.Chart:
        return graded_chart(self.algebroid, depth if depth is not None else 2 * self.order)


@dataclass
class MomentaSet:
    """Jacobi-Ostrogradski momenta pi[j-1][a-1] = pi^j_a, each an expression
    over the prolonged chart with jet depth at most k + j - 1."""

    order: int
    pi: list[list[ex.Expr]]

    def depth_used(self, j: int) -> int:
        depth = 0
        for e in self.pi[j - 1]:
            for v in ex.free_vars(e):
                tail = v.rsplit("_", 1)[-1]
                if tail.isdigit():
                    depth = max(depth, int(tail))
        return depth


def momenta(spec: LagrangianSpec) -> MomentaSet:
    """Build the factorial-weighted momenta with the graded total derivative."""
    k, n = spec.order, spec.n
    chart = spec.chart(2 * k)
    L = spec.lagrangian
    pi: list[list[ex.Expr]] = []
    for j in range(1, k + 1):
        row = []
        base = k - j + 1
        for a in range(1, n + 1):
            terms: list[ex.Expr] = []
            for r in range(j):
                coeff = ((-1.0) ** r) * math.factorial(base) / math.factorial(base + r)
                dL = ex.diff(L, fibre_name(a, base + r, n))
                terms.append(ex.mul(ex.num(coeff), ex.total_derivative(dL, chart, r)))
            row.append(ex.mul(ex.num(1.0 / base), ex.add_all(terms)))
        pi.append(row)
    return MomentaSet(order=k, pi=pi)


@dataclass
class ELSystem:
    """Derived Euler-Lagrange data: residuals over the prolonged chart,
    prolongation constraints, momenta, and (for regular Lagrangians) an
    explicit first-order flow with the momenta as auxiliary state."""

    kind: str                                   # 'algebroid' | 'classical'
    m: int
    n: int
    order: int
    chart: ex.Chart
    residuals: list[ex.Expr]
    constraints: list[tuple[str, ex.Expr]]
    state_names: list[str]
    momenta: MomentaSet | None = None
    rhs: Callable[[np.ndarray, float], np.ndarray] | None = None
    conserved: dict[str, Callable[[np.ndarray, float], float]] = field(default_factory=dict)
    hessian_at: Callable[[np.ndarray], np.ndarray] | None = None
    initial_state_from_jets: Callable[[Mapping[str, float]], np.ndarray] | None = None
    top_jet_names: list[str] = field(default_factory=list)
    _res_fns: list[Callable] | None = field(default=None, repr=False)

    def residual_fns(self) -> list[Callable]:
        if self._res_fns is None:
            self._res_fns = [ex.compile_expr(r, self.chart.names) for r in self.residuals]
        return self._res_fns

    def residual_at(self, jets: Mapping[str, float]) -> np.ndarray:
        """Residual values at a prolonged point; missing jets default to 0."""
        vals = [jets.get(nme, 0.0) for nme in self.chart.names]
        return np.array([float(f(vals)) for f in self.residual_fns()])

    def solve_top_jet(self, jets: Mapping[str, float]) -> np.ndarray:
        """Complete a prolonged point to the residual zero set.

        The residuals are linear in the top jet block, so the completion is a
        single dense solve; it is used by consistency tests and by the
        explicit flow of classical systems.
        """
        names = self.top_jet_names
        point = dict(jets)
        for nme in names:
            point[nme] = 0.0
        b = self.residual_at(point)
        M = np.empty((len(b), len(names)))
        for col, nme in enumerate(names):
            point[nme] = 1.0
            M[:, col] = self.residual_at(point) - b
            point[nme] = 0.0
        try:
            return nm.dense_solve(M, -b)
        except nm.SingularJacobianError as err:
            raise SingularLegendreError(str(err)) from err

    def regularity(self, state: np.ndarray) -> float:
        if self.hessian_at is None:
            return 1.0
        return float(np.linalg.cond(self.hessian_at(state)))


def _phase_values(state: np.ndarray, m: int, n: int, k: int) -> list[np.ndarray]:
    """Split a state vector into the positional (x, y_1..y_k) value list."""
    return [state[i] for i in range(m + n * k)]


def el_equations(spec: LagrangianSpec) -> ELSystem:
    """Assemble the order-k Euler-Lagrange system on the algebroid."""
    k, m, n = spec.order, spec.m, spec.n
    alg = spec.algebroid
    chart = spec.chart(2 * k)
    L = spec.lagrangian
    mom = momenta(spec)
    pik = mom.pi[k - 1]

    xnames = list(alg.base)
    y1 = [fibre_name(b + 1, 1, n) for b in range(n)]

    residuals: list[ex.Expr] = []
    for a in range(n):
        force = ex.add_all(
            ex.mul(alg.anchor[A][a], ex.diff(L, xnames[A])) for A in range(m)
        )
        bracket = ex.add_all(
            ex.mul(ex.mul(ex.sym(y1[b]), alg.structure[c][b][a]), pik[c])
            for b in range(n) for c in range(n)
        )
        residuals.append(ex.sub(ex.add(force, bracket), ex.total_derivative(pik[a], chart, 1)))

    constraints = [(xn, chart.tderiv(xn)) for xn in xnames]
    for i in range(1, 2 * k):
        for a in range(1, n + 1):
            nme = fibre_name(a, i, n)
            constraints.append((nme, chart.tderiv(nme)))

    # ---- explicit flow: state = (x, y_1..y_k, pi^2..pi^k) ----
    phase = spec.phase_names()
    yk = [fibre_name(a + 1, k, n) for a in range(n)]
    dLdx = [ex.compile_expr(ex.diff(L, xn), phase) for xn in xnames]
    dLdy = [[ex.compile_expr(ex.diff(L, fibre_name(a + 1, i, n)), phase) for a in range(n)]
            for i in range(1, k + 1)]  # dLdy[i-1][a]
    H_expr = [[ex.diff(ex.diff(L, yk[a]), yk[b]) for b in range(n)] for a in range(n)]
    H_fn = [[ex.compile_expr(e, phase) for e in row] for row in H_expr]
    H_const = (
        np.array([[ex.constant_value(e) for e in row] for row in H_expr], dtype=object)
        if all(ex.constant_value(e) is not None for row in H_expr for e in row) else None
    )
    crossX = [[ex.compile_expr(ex.diff(ex.diff(L, yk[a]), xn), phase) for xn in xnames]
              for a in range(n)]
    crossY = [[[ex.compile_expr(ex.diff(ex.diff(L, yk[a]), fibre_name(b + 1, i, n)), phase)
                for b in range(n)] for i in range(1, k)] for a in range(n)]
    rho_fn = [[ex.compile_expr(alg.anchor[A][a], xnames) for a in range(n)] for A in range(m)]
    C_fn = [[[ex.compile_expr(alg.structure[c][b][a], xnames) for a in range(n)]
             for b in range(n)] for c in range(n)]

    dim = m + n * k + n * (k - 1)
    state_names = list(xnames)
    for i in range(1, k + 1):
        state_names += [fibre_name(a, i, n) for a in range(1, n + 1)]
    for j in range(2, k + 1):
        state_names += [f"pi{j}_{a}" for a in range(1, n + 1)]

    H_inv_const = None
    if H_const is not None:
        Hc = H_const.astype(float)
        if np.linalg.cond(Hc) < REGULARITY_COND_LIMIT:
            H_inv_const = np.linalg.inv(Hc)

    def hessian_at(state: np.ndarray) -> np.ndarray:
        vals = _phase_values(state, m, n, k)
        return np.array([[f(vals) for f in row] for row in H_fn], dtype=float)

    def rhs(state: np.ndarray, t: float) -> np.ndarray:
        vals = _phase_values(state, m, n, k)
        x = state[:m]
        Y = [state[m + (i - 1) * n: m + i * n] for i in range(1, k + 1)]
        P = {j: state[m + n * k + (j - 2) * n: m + n * k + (j - 1) * n] for j in range(2, k + 1)}
        rho = np.array([[f(list(x)) for f in row] for row in rho_fn], dtype=float) if m else np.zeros((0, n))
        Cv = np.array([[[f(list(x)) for f in row] for row in plane] for plane in C_fn], dtype=float)

        xdot = rho @ Y[0] if m else np.zeros(0)
        deriv = [xdot]
        for i in range(1, k):
            deriv.append((i + 1) * Y[i])

        gx = np.array([f(vals) for f in dLdx], dtype=float)
        gy = [np.array([f(vals) for f in row], dtype=float) for row in dLdy]

        # pi^k dynamics; pi^1 is determined by the Legendre constraint
        pik_vec = P[k] if k >= 2 else gy[0] / k
        dpik = (rho.T @ gx if m else np.zeros(n)) + np.einsum("b,cba,c->a", Y[0], Cv, pik_vec)

        # d/dt of the constraint k pi^1 = dL/dy_k gives the top velocity
        if k >= 2:
            target = k * (gy[k - 2] - (k - 1) * P[2])
        else:
            target = dpik
        gamma = np.zeros(n)
        for a in range(n):
            for A in range(m):
                gamma[a] += crossX[a][A](vals) * xdot[A]
            for i in range(1, k):
                for b in range(n):
                    gamma[a] += crossY[a][i - 1][b](vals) * (i + 1) * Y[i][b]
        if H_inv_const is not None:
            ydot_k = H_inv_const @ (target - gamma)
        else:
            H = hessian_at(state)
            try:
                ydot_k = nm.dense_solve(H, target - gamma)
            except nm.SingularJacobianError as err:
                raise SingularLegendreError(str(err)) from err
        deriv.append(ydot_k)

        for j in range(2, k):
            deriv.append(gy[k - j - 1] - (k - j) * P[j + 1])
        if k >= 2:
            deriv.append(dpik)
        return np.concatenate(deriv) if deriv else np.zeros(0)

    pi_fns = [[ex.compile_expr(e, chart.names) for e in row] for row in mom.pi]

    def initial_state_from_jets(jets: Mapping[str, float]) -> np.ndarray:
        point = {nme: 0.0 for nme in chart.names}
        point.update(jets)
        vals = [point[nme] for nme in chart.names]
        state = np.empty(dim)
        for i, nme in enumerate(xnames):
            state[i] = point[nme]
        for i in range(1, k + 1):
            for a in range(n):
                state[m + (i - 1) * n + a] = point[fibre_name(a + 1, i, n)]
        for j in range(2, k + 1):
            for a in range(n):
                state[m + n * k + (j - 2) * n + a] = pi_fns[j - 1][a](vals)
        return state

    conserved: dict[str, Callable] = {}
    if m == 0:
        def casimir(state: np.ndarray, t: float) -> float:
            vals = _phase_values(state, m, n, k)
            pik_vec = state[m + n * k + (k - 2) * n: m + n * k + (k - 1) * n] if k >= 2 else \
                np.array([f(vals) for f in dLdy[k - 1]]) / k
            return float(np.sum(pik_vec ** 2))
        conserved["casimir"] = casimir
    if k == 1:
        f_L = ex.compile_expr(L, phase)

        def energy(state: np.ndarray, t: float) -> float:
            vals = _phase_values(state, m, n, k)
            g1 = np.array([f(vals) for f in dLdy[0]])
            return float(state[m:m + n] @ g1 - f_L(vals))
        conserved["energy"] = energy

    return ELSystem(
        kind="algebroid", m=m, n=n, order=k, chart=chart,
        residuals=residuals, constraints=constraints, state_names=state_names,
        momenta=mom, rhs=rhs, conserved=conserved, hessian_at=hessian_at,
        initial_state_from_jets=initial_state_from_jets,
        top_jet_names=[fibre_name(a, 2 * k, n) for a in range(1, n + 1)],
    )


def classical_el(order: int, L: ex.Expr, m: int = 1) -> ELSystem:
    """Classical higher Euler-Lagrange equations on jets q, q(1), ..., q(k):

        0 = dL/dq - d/dt dL/dq(1) + ... + (-1)^k d^k/dt^k dL/dq(k)

    assembled directly over the plain-jet chart.  This construction is kept
    independent of `el_equations` so the two can cross-check each other.
    """
    k = order
    chart = ex.qjet_chart(m, 2 * k)

    def qname(A: int, i: int) -> str:
        return f"q_{i}" if m == 1 else f"q{A}_{i}"

    allowed = {qname(A, i) for A in range(1, m + 1) for i in range(k + 1)}
    extra = ex.free_vars(L) - allowed
    if extra:
        raise ex.ChartError(f"Lagrangian uses {sorted(extra)}; expected jets up to order {k}")

    residuals = []
    for A in range(1, m + 1):
        terms = [
            ex.mul(ex.num((-1.0) ** i), ex.total_derivative(ex.diff(L, qname(A, i)), chart, i))
            for i in range(k + 1)
        ]
        residuals.append(ex.add_all(terms))

    constraints = [(qname(A, i), ex.sym(qname(A, i + 1)))
                   for A in range(1, m + 1) for i in range(2 * k)]

    state_names = [qname(A, i) for i in range(2 * k) for A in range(1, m + 1)]
    top_names = [qname(A, 2 * k) for A in range(1, m + 1)]

    sys = ELSystem(
        kind="classical", m=m, n=m, order=k, chart=chart,
        residuals=residuals, constraints=constraints, state_names=state_names,
        top_jet_names=top_names,
    )

    yk = [qname(A, k) for A in range(1, m + 1)]
    H_expr = [[ex.diff(ex.diff(L, a), b) for b in yk] for a in yk]
    phase = [qname(A, i) for i in range(k + 1) for A in range(1, m + 1)]
    H_fn = [[ex.compile_expr(e, phase) for e in row] for row in H_expr]

    def hessian_at(state: np.ndarray) -> np.ndarray:
        point = dict(zip(state_names, state))
        vals = [point.get(nme, 0.0) for nme in phase]
        return np.array([[f(vals) for f in row] for row in H_fn], dtype=float)

    def rhs(state: np.ndarray, t: float) -> np.ndarray:
        jets = dict(zip(state_names, state))
        top = sys.solve_top_jet(jets)
        deriv = np.empty_like(state)
        deriv[:-m] = state[m:]
        deriv[-m:] = top
        return deriv

    sys.hessian_at = hessian_at
    sys.rhs = rhs
    sys.initial_state_from_jets = lambda jets: np.array(
        [float(jets[nme]) for nme in state_names])
    return sys


def random_jets(chart: ex.Chart, rng: np.random.Generator) -> dict[str, float]:
    return {nme: float(rng.uniform(-1.0, 1.0)) for nme in chart.names}


def reduce_check(spec: LagrangianSpec, samples: int = 200, seed: int = 0) -> float:
    """Normalization oracle: on a tangent algebroid, the algebroid residuals
    must coincide with the classical alternating-sum residuals under the
    substitution y^a_i = q^(i)a / i!.  Returns the max absolute difference
    over random prolonged states."""
    if not is_tangent(spec.algebroid):
        raise ValueError("reduce_check requires a tangent algebroid")
    k, m, n = spec.order, spec.m, spec.n

    def qname(A: int, i: int) -> str:
        return f"q_{i}" if m == 1 else f"q{A}_{i}"

    replacements: dict[str, ex.Expr] = {}
    for A, xn in enumerate(base_names(m)):
        replacements[xn] = ex.sym(qname(A + 1, 0))
    for a in range(1, n + 1):
        for i in range(1, k + 1):
            replacements[fibre_name(a, i, n)] = ex.div(
                ex.sym(qname(a, i)), ex.num(math.factorial(i)))
    L_q = ex.subst(spec.lagrangian, replacements)

    alg_sys = el_equations(spec)
    cls_sys = classical_el(k, L_q, m)

    rng = np.random.default_rng(seed)
    yjets = {nme: rng.uniform(-1.0, 1.0, samples) for nme in alg_sys.chart.names}
    qjets: dict[str, np.ndarray] = {}
    for A, xn in enumerate(base_names(m)):
        qjets[qname(A + 1, 0)] = yjets[xn]
    for a in range(1, n + 1):
        for i in range(1, 2 * k + 1):
            qjets[qname(a, i)] = math.factorial(i) * yjets[fibre_name(a, i, n)]

    yvals = [yjets[nme] for nme in alg_sys.chart.names]
    qvals = [qjets[nme] for nme in cls_sys.chart.names]
    worst = 0.0
    for fa, fc in zip(alg_sys.residual_fns(), cls_sys.residual_fns()):
        ra = np.broadcast_to(np.asarray(fa(yvals), dtype=float), (samples,))
        rc = np.broadcast_to(np.asarray(fc(qvals), dtype=float), (samples,))
        worst = max(worst, float(np.max(np.abs(ra - rc))))
    return worst


def simulate(
    sys: ELSystem,
    initial_state: np.ndarray,
    T: float,
    dt: float,
    observers: Sequence[str] | None = None,
    recheck_every: int = 100,
) -> nm.Trajectory:
    """Integrate the explicit flow with RK4, logging conserved quantities.

    Raises SingularLegendreError when the top Hessian condition number
    exceeds the regularity limit at the initial state (re-checked every
    `recheck_every` steps) and NonFiniteError when the state blows up.
    """
    if sys.rhs is None:
        raise SingularLegendreError("system has no explicit first-order form")
    if dt <= 0 or T <= 0:
        raise ValueError("T and dt must be positive")
    state0 = np.asarray(initial_state, dtype=float)
    cond = sys.regularity(state0)
    if not np.isfinite(cond) or cond > REGULARITY_COND_LIMIT:
        raise SingularLegendreError(
            f"top Hessian condition number {cond:.3e} exceeds {REGULARITY_COND_LIMIT:.0e}")

    def hook(i: int, state: np.ndarray) -> None:
        if recheck_every and i % recheck_every == 0:
            c = sys.regularity(state)
            if not np.isfinite(c) or c > REGULARITY_COND_LIMIT:
                raise SingularLegendreError(
                    f"top Hessian condition number {c:.3e} exceeds the limit at step {i}")

    wanted = {name: sys.conserved[name] for name in (observers or sys.conserved)}
    problem = nm.OdeProblem(rhs=sys.rhs, y0=state0, t_span=(0.0, T), dt=dt)
    traj = nm.rk4(problem, observers=wanted, step_hook=hook)
    traj.meta["state_names"] = list(sys.state_names)
    return traj


# ---------------------------------------------------------------------------
# The Lie-algebra second-order pipeline in the (x, z) presentation


def g2_chart(n: int) -> ex.Chart:
    """Chart (x^i weight 1, z^j weight 2) on a Lie algebra, extended by the
    auxiliary jets zd, zdd with plain prolongation d/dt x = z, d/dt z = zd,
    d/dt zd = zdd."""
    def nm_(base: str, i: int) -> str:
        return base if n == 1 else f"{base}{i}"

    chain = ("x", "z", "zd", "zdd")
    variables, tderiv = [], {}
    for level, base in enumerate(chain):
        for i in range(1, n + 1):
            variables.append(
                ex.JetVar(nm_(base, i), base, 0 if n == 1 else i, level, level + 1))
    for level in range(len(chain) - 1):
        for i in range(1, n + 1):
            tderiv[nm_(chain[level], i)] = ex.sym(nm_(chain[level + 1], i))
    return ex.Chart(variables, "g2", tderiv)


@dataclass
class G2System:
    """The two-equation second-order system on a Lie algebra:
    xdot = z and d/dt B = ad*_x B with B = dL/dx - d/dt dL/dz."""
    n: int
    chart: ex.Chart
    B: list[ex.Expr]
    residuals: list[ex.Expr]
    constraints: list[tuple[str, ex.Expr]]


def g2_pipeline(L: ex.Expr, lie_alg: AlgebroidSpec) -> G2System:
    """Assemble the second-order Euler-Lagrange system on a Lie algebra from a
    Lagrangian L(x, z) over the weight-(1,2) chart.

    The coadjoint action is realized as (ad*_x mu)_a = C^c_{ba} x^b mu_c, the
    index convention fixed by agreement with `el_equations` on the same data.
    """
    if lie_alg.base_dim != 0:
        raise ValueError("g2_pipeline requires a Lie algebra (base_dim = 0)")
    n = lie_alg.rank
    chart = g2_chart(n)

    def nm_(base: str, i: int) -> str:
        return base if n == 1 else f"{base}{i}"

    allowed = {nm_("x", i) for i in range(1, n + 1)} | {nm_("z", i) for i in range(1, n + 1)}
    extra = ex.free_vars(L) - allowed
    if extra:
        raise ex.ChartError(f"Lagrangian uses {sorted(extra)}; allowed: {sorted(allowed)}")

    B = [
        ex.sub(ex.diff(L, nm_("x", a)), ex.total_derivative(ex.diff(L, nm_("z", a)), chart, 1))
        for a in range(1, n + 1)
    ]
    residuals = []
    for a in range(n):
        ad = ex.add_all(
            ex.mul(ex.mul(ex.sym(nm_("x", b + 1)), lie_alg.structure[c][b][a]), B[c])
            for b in range(n) for c in range(n)
        )
        residuals.append(ex.sub(ad, ex.total_derivative(B[a], chart, 1)))
    constraints = [(nm_("x", i), ex.sym(nm_("z", i))) for i in range(1, n + 1)]
    return G2System(n=n, chart=chart, B=B, residuals=residuals, constraints=constraints)


def g2_vs_el_deviation(
    L: ex.Expr, lie_alg: AlgebroidSpec, samples: int = 200, seed: int = 0
) -> float:
    """Internal consistency oracle: the g2 residuals must equal the k = 2
    `el_equations` residuals under the identification y_1 = x, y_2 = z/2
    (curve derivatives: z = xdot, zd = x'', zdd = x''')."""
    n = lie_alg.rank
    g2 = g2_pipeline(L, lie_alg)

    def nm_(base: str, i: int) -> str:
        return base if n == 1 else f"{base}{i}"

    replacements: dict[str, ex.Expr] = {}
    for i in range(1, n + 1):
        replacements[nm_("x", i)] = ex.sym(fibre_name(i, 1, n))
        replacements[nm_("z", i)] = ex.mul(ex.num(2.0), ex.sym(fibre_name(i, 2, n)))
    L_y = ex.subst(L, replacements)
    el = el_equations(LagrangianSpec(algebroid=lie_alg, order=2, lagrangian=L_y))

    rng = np.random.default_rng(seed)
    g2_jets = {nme: rng.uniform(-1.0, 1.0, samples) for nme in g2.chart.names}
    y_jets: dict[str, np.ndarray] = {}
    for i in range(1, n + 1):
        y_jets[fibre_name(i, 1, n)] = g2_jets[nm_("x", i)]
        y_jets[fibre_name(i, 2, n)] = g2_jets[nm_("z", i)] / 2.0
        y_jets[fibre_name(i, 3, n)] = g2_jets[nm_("zd", i)] / 6.0
        y_jets[fibre_name(i, 4, n)] = g2_jets[nm_("zdd", i)] / 24.0

    gvals = [g2_jets[nme] for nme in g2.chart.names]
    yvals = [y_jets[nme] for nme in el.chart.names]
    g2_fns = [ex.compile_expr(r, g2.chart.names) for r in g2.residuals]
    worst = 0.0
    for fg, fe in zip(g2_fns, el.residual_fns()):
        ra = np.broadcast_to(np.asarray(fg(gvals), dtype=float), (samples,))
        rb = np.broadcast_to(np.asarray(fe(yvals), dtype=float), (samples,))
        worst = max(worst, float(np.max(np.abs(ra - rb))))
    return worst


# ---------------------------------------------------------------------------
# Base-equation extraction for reports


def linear_jet_coefficients(sys: ELSystem, residual_index: int) -> dict[str, float] | None:
    """Coefficients of a residual that is linear in the chart variables with
    constant coefficients; None when the residual is not of that shape."""
    r = sys.residuals[residual_index]
    coeffs: dict[str, float] = {}
    for name in sorted(ex.free_vars(r)):
        c = ex.constant_value(ex.diff(r, name))
        if c is None:
            return None
        coeffs[name] = c
    zero = {nme: 0.0 for nme in sys.chart.names}
    offset = ex.evaluate(r, zero)
    if offset != 0.0:
        coeffs[""] = offset
    return coeffs


def pure_jet_equation(sys: ELSystem) -> dict[int, float] | None:
    """For tangent-algebroid systems whose residuals are linear, diagonal, and
    identical across components: the base-curve equation sum_i alpha_i
    d^i x/dt^i = 0, as {derivative order: alpha_i} with y_i = x^(i)/i!
    already converted.  None when the pattern does not hold."""
    per_component: list[dict[int, float]] = []
    for a in range(len(sys.residuals)):
        coeffs = linear_jet_coefficients(sys, a)
        if coeffs is None or "" in coeffs:
            return None
        converted: dict[int, float] = {}
        for name, c in coeffs.items():
            var = sys.chart.var(name)
            comp = var.comp if var.comp else 1
            if comp != a + 1:
                return None  # couples components; not a pure base equation
            if sys.kind == "algebroid":
                factor = 1.0 / math.factorial(var.order) if var.order >= 1 else 1.0
            else:
                factor = 1.0
            converted[var.order] = converted.get(var.order, 0.0) + c * factor
        per_component.append(converted)
    first = per_component[0]
    for other in per_component[1:]:
        if other != first:
            return None
    return first
